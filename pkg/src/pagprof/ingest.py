"""Turns replayed raw events into normalized log records.

Dataflow traces carry schedule events from every nesting level of the
operator tree. Only the innermost scopes describe real work, so schedules
of outer scopes are peeled off first: popping each registered operator
address yields the outer-layer prefixes, and schedule events whose
operator sits on such a prefix are antijoined away. The surviving events
are normalized into LogRecords with gap-free per-(worker, epoch) sequence
numbers; markers and setup events are consumed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from .model import EventKind, LogRecord, RawEvent, activity_for


class SetupConflict(ValueError):
    """An operator id was registered twice with different addresses."""


class UnknownOperator(ValueError):
    """A schedule event referenced an operator absent from the setup."""


class MalformedTrace(ValueError):
    """Schedule events do not nest as the contract requires."""


@dataclass
class ScopeBlacklist:
    """Outer-scope address prefixes plus the operator-id index."""

    addresses: Set[Tuple[int, ...]] = field(default_factory=set)
    id_index: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    def is_outer(self, operator_id: int) -> bool:
        address = self.id_index.get(operator_id)
        if address is None:
            raise UnknownOperator(f"schedule references unregistered operator {operator_id}")
        return address in self.addresses


def build_blacklist(
    operates: Iterable[Tuple[int, Tuple[int, ...]]]
) -> ScopeBlacklist:
    """Collect every proper prefix of every registered operator address.

    Registration is idempotent; the same id with a different address is a
    setup conflict.
    """
    bl = ScopeBlacklist()
    for operator_id, address in operates:
        address = tuple(address)
        known = bl.id_index.get(operator_id)
        if known is not None and known != address:
            raise SetupConflict(
                f"operator {operator_id} registered at {list(known)} and {list(address)}"
            )
        bl.id_index[operator_id] = address
        prefix = list(address)
        while len(prefix) > 1:
            prefix.pop()
            bl.addresses.add(tuple(prefix))
    return bl


def blacklist_from_events(events: Iterable[RawEvent]) -> ScopeBlacklist:
    """Build the blacklist from broadcast Operates events."""
    return build_blacklist(
        (ev.operator_id, ev.operator_address)
        for ev in events
        if ev.kind == EventKind.OPERATES
    )


def peel_ops(events: Sequence[RawEvent], bl: ScopeBlacklist) -> List[RawEvent]:
    """Drop schedule events that belong to outer scopes; order preserved."""
    out = []
    for ev in events:
        if ev.kind in (EventKind.SCHEDULE_START, EventKind.SCHEDULE_END):
            if bl.is_outer(ev.operator_id):
                continue
        out.append(ev)
    return out


def to_log_records(events: Sequence[RawEvent]) -> List[LogRecord]:
    """Normalize peeled events into LogRecords.

    One record per schedule/data/progress event; EpochEnd, Operates,
    Channels, and Terminate are consumed. seq_no restarts at 0 per
    (worker, epoch) and is gap-free even where peeling removed events.
    """
    out: List[LogRecord] = []
    counters: Dict[Tuple[int, int], int] = {}
    open_schedules: Dict[int, List[int]] = {}
    for ev in events:
        kind = ev.kind
        if kind in (
            EventKind.EPOCH_END,
            EventKind.OPERATES,
            EventKind.CHANNELS,
            EventKind.TERMINATE,
        ):
            continue
        if kind == EventKind.SCHEDULE_START:
            stack = open_schedules.setdefault(ev.local_worker, [])
            if stack:
                raise MalformedTrace(
                    f"worker {ev.local_worker}: nested schedule of operator "
                    f"{ev.operator_id} inside {stack[-1]} survived peeling"
                )
            stack.append(ev.operator_id)
        elif kind == EventKind.SCHEDULE_END:
            stack = open_schedules.setdefault(ev.local_worker, [])
            if not stack:
                raise MalformedTrace(
                    f"worker {ev.local_worker}: ScheduleEnd of operator "
                    f"{ev.operator_id} without an open ScheduleStart"
                )
            stack.pop()
        key = (ev.local_worker, ev.at.epoch)
        seq = counters.get(key, 0)
        counters[key] = seq + 1
        is_message = kind in (
            EventKind.DATA_SENT,
            EventKind.DATA_RECEIVED,
            EventKind.PROGRESS_SENT,
            EventKind.PROGRESS_RECEIVED,
        )
        out.append(
            LogRecord(
                epoch=ev.at.epoch,
                nanos=ev.at.nanos,
                worker=ev.local_worker,
                activity=activity_for(kind),
                operator_id=ev.operator_id,
                channel_id=ev.channel_id,
                remote_worker=ev.remote_worker,
                seq_no=seq,
                msg_seq=ev.seq_no if is_message else None,
                record_count=ev.record_count,
            )
        )
    return out
