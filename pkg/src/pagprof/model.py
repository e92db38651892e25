"""Shared vocabulary of the profiling pipeline.

Timestamps, raw source-computation events, and the normalized log records
every downstream stage consumes. All types are immutable values and safe to
share across threads and processes.
"""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple, Optional, Tuple

#: Wire sentinel for an absent 64-bit field.
NO_U64 = 0xFFFF_FFFF_FFFF_FFFF
#: Wire sentinel for an absent 32-bit field.
NO_U32 = 0xFFFF_FFFF


class Pair(NamedTuple):
    """Two-dimensional logical clock: (epoch, processing-time nanoseconds).

    Ordered lexicographically, epoch first. Tuple comparison gives exactly
    that order, so instances sort and compare natively. `nanos` is relative
    to the source computation's start, not wall clock.
    """

    epoch: int
    nanos: int


def pair_compare(a: Pair, b: Pair) -> int:
    """Compare two timestamps; returns -1, 0, or 1.

    Epoch is compared first, nanoseconds break ties. Total order.
    """
    if a == b:
        return 0
    return -1 if a < b else 1


class EventKind(IntEnum):
    """Raw event discriminator. Values double as wire-format tags."""

    SCHEDULE_START = 1
    SCHEDULE_END = 2
    DATA_SENT = 3
    DATA_RECEIVED = 4
    PROGRESS_SENT = 5
    PROGRESS_RECEIVED = 6
    OPERATES = 7
    CHANNELS = 8
    EPOCH_END = 9
    TERMINATE = 10


#: Kinds that survive adapter filtering and become LogRecords.
LOG_KINDS = frozenset(
    {
        EventKind.SCHEDULE_START,
        EventKind.SCHEDULE_END,
        EventKind.DATA_SENT,
        EventKind.DATA_RECEIVED,
        EventKind.PROGRESS_SENT,
        EventKind.PROGRESS_RECEIVED,
    }
)

#: Message kinds that carry (channel_id, seq_no) and possibly a peer.
MESSAGE_KINDS = frozenset(
    {
        EventKind.DATA_SENT,
        EventKind.DATA_RECEIVED,
        EventKind.PROGRESS_SENT,
        EventKind.PROGRESS_RECEIVED,
    }
)


class RawEvent(NamedTuple):
    """One profiling event as emitted by the source computation.

    `seq_no` is the per-(sending worker, channel) message sequence for
    message kinds, and a per-worker event ordinal otherwise. `remote_worker`
    is the message peer: the receiver on DataSent, the sender on receives,
    absent on broadcast ProgressSent. `operator_address` is only present on
    Operates; `src_operator`/`dst_operator` only on Channels.
    """

    at: Pair
    local_worker: int
    kind: EventKind
    operator_id: Optional[int] = None
    operator_address: Optional[Tuple[int, ...]] = None
    channel_id: Optional[int] = None
    seq_no: int = 0
    remote_worker: Optional[int] = None
    record_count: int = 0
    src_operator: Optional[int] = None
    dst_operator: Optional[int] = None


class ActivityKind(IntEnum):
    """Normalized log-record activity, post adapter filtering."""

    SCHEDULE_START = 1
    SCHEDULE_END = 2
    DATA_SENT = 3
    DATA_RECEIVED = 4
    CONTROL_SENT = 5
    CONTROL_RECEIVED = 6


_RECEIVE_ACTIVITIES = (ActivityKind.DATA_RECEIVED, ActivityKind.CONTROL_RECEIVED)

_KIND_TO_ACTIVITY = {
    EventKind.SCHEDULE_START: ActivityKind.SCHEDULE_START,
    EventKind.SCHEDULE_END: ActivityKind.SCHEDULE_END,
    EventKind.DATA_SENT: ActivityKind.DATA_SENT,
    EventKind.DATA_RECEIVED: ActivityKind.DATA_RECEIVED,
    EventKind.PROGRESS_SENT: ActivityKind.CONTROL_SENT,
    EventKind.PROGRESS_RECEIVED: ActivityKind.CONTROL_RECEIVED,
}


class LogRecord(NamedTuple):
    """Normalized profiling event, the unit the PAG is built from.

    `seq_no` is reassigned after filtering: contiguous from 0 per
    (worker, epoch). The originating message sequence survives in
    `msg_seq` because cross-worker edge matching joins on it.
    """

    epoch: int
    nanos: int
    worker: int
    activity: ActivityKind
    operator_id: Optional[int] = None
    channel_id: Optional[int] = None
    remote_worker: Optional[int] = None
    seq_no: int = 0
    msg_seq: Optional[int] = None
    record_count: int = 0

    @property
    def at(self) -> Pair:
        return Pair(self.epoch, self.nanos)

    def is_receive(self) -> bool:
        return self.activity in _RECEIVE_ACTIVITIES


def activity_for(kind: EventKind) -> ActivityKind:
    """Map a raw event kind to its log-record activity.

    Raises KeyError for kinds that never become log records
    (Operates, Channels, EpochEnd, Terminate).
    """
    return _KIND_TO_ACTIVITY[kind]
