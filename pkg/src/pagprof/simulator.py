"""Contract-conforming source-computation simulator.

Stands in for a real dataflow runtime: generates per-worker event streams
for a configurable operator/channel graph, with optional fault injection
(exchange skew, slow operators, stalled progress, delayed messages).

The emitted streams honor the profiling contract:

1. Schedule, data-message, and control-message events are logged with
   enough identity to match them up.
2. One epoch is computed at a time: on every worker, no event of epoch
   e+1 precedes the end-of-epoch marker for epoch e.
3. Every worker logs exactly one EpochEnd marker per epoch.

Event *structure* (which events exist) is a pure function of the config;
randomness only perturbs timing. That keeps per-epoch event counts exact
and streams byte-identical for a fixed seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .model import EventKind, Pair, RawEvent

#: Channel id reserved for progress broadcasts; config channels must not use it.
CONTROL_CHANNEL = 0xFFFF_FFFF


class InvalidConfig(ValueError):
    """A SimConfig violated one of its invariants."""


@dataclass(frozen=True)
class OperatorSpec:
    """One dataflow operator: identity, scope address, per-record cost."""

    operator_id: int
    address: Tuple[int, ...]
    service_ns: int = 1_000


@dataclass(frozen=True)
class ChannelSpec:
    """A channel between two operators with an exchange policy.

    policy is one of "uniform", "all_to_worker", "hash_mod"; target is
    the destination worker for "all_to_worker" and ignored otherwise.
    """

    channel_id: int
    src_operator: int
    dst_operator: int
    policy: str = "uniform"
    target: Optional[int] = None


@dataclass(frozen=True)
class FaultSpec:
    """One injected fault; fields used depend on kind.

    kinds: "skew_exchange" (channel_id, target), "slow_operator"
    (operator_id, added_ns), "stall_worker" (worker, from_epoch),
    "delayed_message" (channel_id, added_ns).
    """

    kind: str
    channel_id: Optional[int] = None
    target: Optional[int] = None
    operator_id: Optional[int] = None
    added_ns: int = 0
    worker: Optional[int] = None
    from_epoch: int = 0


_FAULT_KINDS = {"skew_exchange", "slow_operator", "stall_worker", "delayed_message"}
_POLICIES = {"uniform", "all_to_worker", "hash_mod"}


@dataclass
class SimConfig:
    workers: int
    epochs: int
    records_per_worker_per_epoch: int
    operators: List[OperatorSpec]
    channels: List[ChannelSpec] = field(default_factory=list)
    faults: List[FaultSpec] = field(default_factory=list)
    rng_seed: int = 0
    network_delay_ns: int = 50_000
    rounds_per_epoch: int = 5
    records_per_message: int = 50

    def validate(self) -> None:
        """Raise InvalidConfig naming the first violated invariant."""
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.records_per_worker_per_epoch < 0:
            raise InvalidConfig("records_per_worker_per_epoch must be >= 0")
        if self.rounds_per_epoch < 1:
            raise InvalidConfig("rounds_per_epoch must be >= 1")
        if self.records_per_message < 1:
            raise InvalidConfig("records_per_message must be >= 1")
        if self.network_delay_ns < 1:
            raise InvalidConfig("network_delay_ns must be >= 1")
        if not self.operators:
            raise InvalidConfig("at least one operator is required")
        ids = [op.operator_id for op in self.operators]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate operator_id")
        addrs = [op.address for op in self.operators]
        if len(set(addrs)) != len(addrs):
            raise InvalidConfig("duplicate operator_address")
        for op in self.operators:
            if not op.address or op.address[0] != 0:
                raise InvalidConfig(
                    f"operator {op.operator_id} address {list(op.address)} "
                    "must be rooted at [0]"
                )
            if op.service_ns < 1:
                raise InvalidConfig(f"operator {op.operator_id} service_ns must be >= 1")
        by_id = {op.operator_id: op for op in self.operators}
        chan_ids = [c.channel_id for c in self.channels]
        if len(set(chan_ids)) != len(chan_ids):
            raise InvalidConfig("duplicate channel_id")
        leaves = {op.operator_id for op in leaf_operators(self.operators)}
        for c in self.channels:
            if c.channel_id == CONTROL_CHANNEL:
                raise InvalidConfig(f"channel_id {CONTROL_CHANNEL} is reserved")
            for end in (c.src_operator, c.dst_operator):
                if end not in by_id:
                    raise InvalidConfig(f"channel {c.channel_id} references unknown operator {end}")
                if end not in leaves:
                    raise InvalidConfig(
                        f"channel {c.channel_id} endpoint {end} is a scope parent, "
                        "channels must connect innermost operators"
                    )
            if c.policy not in _POLICIES:
                raise InvalidConfig(f"channel {c.channel_id} has unknown policy {c.policy!r}")
            if c.policy == "all_to_worker":
                if c.target is None or not (0 <= c.target < self.workers):
                    raise InvalidConfig(f"channel {c.channel_id} all_to_worker target out of range")
        if _has_cycle(self.channels):
            raise InvalidConfig("channel graph must be acyclic")
        for f in self.faults:
            if f.kind not in _FAULT_KINDS:
                raise InvalidConfig(f"unknown fault kind {f.kind!r}")
            if f.kind in ("skew_exchange", "delayed_message"):
                if f.channel_id not in set(chan_ids):
                    raise InvalidConfig(f"fault references unknown channel {f.channel_id}")
            if f.kind == "skew_exchange":
                if f.target is None or not (0 <= f.target < self.workers):
                    raise InvalidConfig("skew_exchange target out of range")
            if f.kind == "slow_operator" and f.operator_id not in by_id:
                raise InvalidConfig(f"fault references unknown operator {f.operator_id}")
            if f.kind == "stall_worker":
                if f.worker is None or not (0 <= f.worker < self.workers):
                    raise InvalidConfig("stall_worker worker out of range")


def _has_cycle(channels: Sequence[ChannelSpec]) -> bool:
    out: Dict[int, List[int]] = {}
    for c in channels:
        out.setdefault(c.src_operator, []).append(c.dst_operator)
    seen: Dict[int, int] = {}  # 1 = in progress, 2 = done

    def visit(n: int) -> bool:
        state = seen.get(n)
        if state == 1:
            return True
        if state == 2:
            return False
        seen[n] = 1
        for m in out.get(n, ()):
            if visit(m):
                return True
        seen[n] = 2
        return False

    return any(visit(n) for n in list(out))


def leaf_operators(operators: Sequence[OperatorSpec]) -> List[OperatorSpec]:
    """Operators that are not a scope parent of any other operator."""
    addrs = {op.address for op in operators}

    def is_parent(a: Tuple[int, ...]) -> bool:
        return any(other != a and other[: len(a)] == a for other in addrs)

    return [op for op in operators if not is_parent(op.address)]


def scope_ancestors(
    op: OperatorSpec, operators: Sequence[OperatorSpec]
) -> List[OperatorSpec]:
    """Registered scope parents of `op`, outermost first."""
    out = [
        other
        for other in operators
        if other.address != op.address
        and op.address[: len(other.address)] == other.address
    ]
    out.sort(key=lambda o: len(o.address))
    return out


def _round_split(total: int, rounds: int) -> List[int]:
    base, extra = divmod(total, rounds)
    return [base + (1 if r < extra else 0) for r in range(rounds)]


def _route(channel: ChannelSpec, skew: Dict[int, int], sender: int,
           msg_index: int, workers: int) -> int:
    if channel.channel_id in skew:
        return skew[channel.channel_id]
    if channel.policy == "all_to_worker":
        return channel.target  # type: ignore[return-value]
    if channel.policy == "uniform":
        return (sender + msg_index) % workers
    # hash_mod: a fixed integer mix, stable across runs and platforms
    h = (msg_index * 2654435761 + channel.channel_id * 40503 + sender) & 0xFFFFFFFF
    return h % workers


class _Plan:
    """Structural derivation: who schedules, sends, and receives what.

    Pure function of the config (faults included); both the simulator and
    the event-count estimate build on it.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.ops = config.operators
        self.by_id = {op.operator_id: op for op in self.ops}
        self.leaves = leaf_operators(self.ops)
        leaf_ids = {op.operator_id for op in self.leaves}
        incoming: Dict[int, List[ChannelSpec]] = {}
        outgoing: Dict[int, List[ChannelSpec]] = {}
        for c in config.channels:
            incoming.setdefault(c.dst_operator, []).append(c)
            outgoing.setdefault(c.src_operator, []).append(c)
        self.incoming = incoming
        self.outgoing = outgoing
        self.sources = [op for op in self.leaves if op.operator_id not in incoming]
        self.consumers = [op for op in self.leaves if op.operator_id in incoming]
        self.ancestors = {
            op.operator_id: scope_ancestors(op, self.ops) for op in self.leaves
        }
        self.skew = {
            f.channel_id: f.target
            for f in config.faults
            if f.kind == "skew_exchange"
        }
        self.slow = {
            f.operator_id: f.added_ns
            for f in config.faults
            if f.kind == "slow_operator"
        }
        self.stalled = {
            f.worker: f.from_epoch for f in config.faults if f.kind == "stall_worker"
        }
        self.extra_delay = {
            f.channel_id: f.added_ns
            for f in config.faults
            if f.kind == "delayed_message"
        }
        self._derive_flow()

    def _derive_flow(self) -> None:
        cfg = self.config
        W = cfg.workers
        rounds = cfg.rounds_per_epoch
        share = _round_split(cfg.records_per_worker_per_epoch, max(len(self.sources), 1))
        # per-epoch output records of each (leaf op, worker)
        self.out_records: Dict[Tuple[int, int], int] = {}
        # inbound messages per (op, worker): list of (channel, sender, rc), in
        # deterministic send order; receive timing is resolved at simulation time
        inbound: Dict[Tuple[int, int], int] = {}
        # per (op, worker, round): list of (channel, rc, target)
        self.sends: Dict[Tuple[int, int, int], List[Tuple[ChannelSpec, int, int]]] = {}
        order = self._topo_leaves()
        for op in order:
            for w in range(W):
                if op.operator_id not in self.incoming:
                    idx = [s.operator_id for s in self.sources].index(op.operator_id)
                    total = share[idx]
                else:
                    total = inbound.get((op.operator_id, w), 0)
                self.out_records[(op.operator_id, w)] = total
                outs = self.outgoing.get(op.operator_id, [])
                if not outs:
                    continue
                per_round = _round_split(total, rounds)
                seq_counter: Dict[int, int] = {}
                for r, quota in enumerate(per_round):
                    batch: List[Tuple[ChannelSpec, int, int]] = []
                    for chan in outs:
                        remaining = quota
                        while remaining > 0:
                            rc = min(cfg.records_per_message, remaining)
                            remaining -= rc
                            i = seq_counter.get(chan.channel_id, 0)
                            seq_counter[chan.channel_id] = i + 1
                            target = _route(chan, self.skew, w, i, W)
                            batch.append((chan, rc, target))
                            inbound[(chan.dst_operator, target)] = (
                                inbound.get((chan.dst_operator, target), 0) + rc
                            )
                    self.sends[(op.operator_id, w, r)] = batch
        self.inbound_records = inbound

    def _topo_leaves(self) -> List[OperatorSpec]:
        """Leaves in dataflow order (sources first); config validated acyclic."""
        order: List[OperatorSpec] = []
        done: set = set()
        pending = list(self.leaves)
        while pending:
            progressed = False
            for op in list(pending):
                ins = self.incoming.get(op.operator_id, [])
                if all(c.src_operator in done for c in ins):
                    order.append(op)
                    done.add(op.operator_id)
                    pending.remove(op)
                    progressed = True
            if not progressed:  # isolated cycles were rejected by validate()
                order.extend(pending)
                break
        return order

    def service(self, op: OperatorSpec, records: int) -> int:
        per_record = op.service_ns + self.slow.get(op.operator_id, 0)
        return max(per_record // 4, 1) + per_record * records

    def is_stalled(self, worker: int, epoch: int) -> bool:
        start = self.stalled.get(worker)
        return start is not None and epoch >= start

    def delay(self, channel_id: int) -> int:
        return self.config.network_delay_ns + self.extra_delay.get(channel_id, 0)


def simulate(config: SimConfig) -> List[List[RawEvent]]:
    """Generate the per-worker event streams for this config.

    Deterministic for a fixed rng_seed. Within each worker's stream, nanos
    are strictly increasing and epochs are computed one at a time.
    """
    config.validate()
    plan = _Plan(config)
    rng = random.Random(config.rng_seed)
    W = config.workers
    streams: List[List[RawEvent]] = [[] for _ in range(W)]
    clk = [1_000] * W
    ordinal = [0] * W  # per-worker non-message event sequence
    data_seq: Dict[Tuple[int, int], int] = {}  # (worker, channel) -> next seq
    progress_seq = [0] * W

    def tick(w: int, at_least: int = 0) -> int:
        clk[w] = max(clk[w] + rng.randint(20, 80), at_least)
        return clk[w]

    def emit(w: int, epoch: int, kind: EventKind, **fields) -> RawEvent:
        ev = RawEvent(at=Pair(epoch, clk[w]), local_worker=w, kind=kind, **fields)
        streams[w].append(ev)
        return ev

    def next_ordinal(w: int) -> int:
        ordinal[w] += 1
        return ordinal[w] - 1

    def schedule(w: int, e: int, op: OperatorSpec,
                 enclosed: List[Tuple[int, int, int, int]], end_rc: int) -> None:
        """Emit one (possibly scope-wrapped) schedule interval.

        `enclosed` lists received messages to log inside the interval as
        (channel, sender, seq, rc).
        """
        for parent in plan.ancestors[op.operator_id]:
            tick(w)
            emit(w, e, EventKind.SCHEDULE_START, operator_id=parent.operator_id,
                 seq_no=next_ordinal(w))
        tick(w)
        emit(w, e, EventKind.SCHEDULE_START, operator_id=op.operator_id,
             seq_no=next_ordinal(w))
        per_record = op.service_ns + plan.slow.get(op.operator_id, 0)
        for chan_id, sender, seq, rc in enclosed:
            clk[w] += max(per_record * rc, 1) + rng.randint(0, 40)
            emit(w, e, EventKind.DATA_RECEIVED, channel_id=chan_id, seq_no=seq,
                 remote_worker=sender, record_count=rc)
        if not enclosed:
            clk[w] += plan.service(op, end_rc)
        else:
            clk[w] += max(per_record // 4, 1) + rng.randint(0, 40)
        emit(w, e, EventKind.SCHEDULE_END, operator_id=op.operator_id,
             seq_no=next_ordinal(w), record_count=end_rc)
        for parent in reversed(plan.ancestors[op.operator_id]):
            tick(w)
            emit(w, e, EventKind.SCHEDULE_END, operator_id=parent.operator_id,
                 seq_no=next_ordinal(w))

    def send_batch(w: int, e: int, op_id: int, r: int,
                   pending: List[List[Tuple[int, int, int, int, int]]]) -> None:
        for chan, rc, target in plan.sends.get((op_id, w, r), []):
            tick(w)
            seq = data_seq.get((w, chan.channel_id), 0)
            data_seq[(w, chan.channel_id)] = seq + 1
            emit(w, e, EventKind.DATA_SENT, channel_id=chan.channel_id,
                 seq_no=seq, remote_worker=target, record_count=rc)
            arrival = clk[w] + plan.delay(chan.channel_id) + rng.randint(0, 2_000)
            pending[target].append((arrival, chan.channel_id, w, seq, rc))

    # dataflow setup precedes any epoch-0 log event
    if config.epochs > 0:
        for w in range(W):
            for op in config.operators:
                tick(w)
                emit(w, 0, EventKind.OPERATES, operator_id=op.operator_id,
                     operator_address=op.address, seq_no=next_ordinal(w))
            for chan in config.channels:
                tick(w)
                emit(w, 0, EventKind.CHANNELS, channel_id=chan.channel_id,
                     seq_no=next_ordinal(w), src_operator=chan.src_operator,
                     dst_operator=chan.dst_operator)

    incoming_chans = {
        op.operator_id: {c.channel_id for c in plan.incoming.get(op.operator_id, [])}
        for op in plan.consumers
    }

    for e in range(config.epochs):
        barrier = max(clk) + rng.randint(100, 500)
        for w in range(W):
            clk[w] = max(clk[w], barrier) + rng.randint(20, 100)
        # (arrival, channel, sender, seq, rc) per target worker
        data_pending: List[List[Tuple[int, int, int, int, int]]] = [[] for _ in range(W)]
        # (target, arrival, sender, seq)
        control_deliveries: List[List[Tuple[int, int, int]]] = [[] for _ in range(W)]
        round_end = [[0] * config.rounds_per_epoch for _ in range(W)]
        splice_at: Dict[int, int] = {w: len(streams[w]) for w in range(W)}

        for r in range(config.rounds_per_epoch):
            if r > 0:
                # gate past the slowest peer's progress delivery (jitter <= 1000)
                gate = (max(round_end[p][r - 1] for p in range(W))
                        + config.network_delay_ns + 2_000)
                for w in range(W):
                    clk[w] = max(clk[w], gate)
            # pass A: sources schedule and send
            for w in range(W):
                for op in plan.sources:
                    quota = _round_split(
                        plan.out_records[(op.operator_id, w)], config.rounds_per_epoch
                    )[r]
                    schedule(w, e, op, enclosed=[], end_rc=quota)
                    send_batch(w, e, op.operator_id, r, data_pending)
            # pass B: consumers poll + schedule, then everyone reports progress
            for w in range(W):
                for op in plan.consumers:
                    chans = incoming_chans[op.operator_id]
                    poll_t = clk[w]
                    avail = []
                    kept = []
                    for m in data_pending[w]:
                        (avail if m[0] <= poll_t and m[1] in chans else kept).append(m)
                    data_pending[w] = kept
                    avail.sort()
                    enclosed = [(c, s, q, rc) for (_, c, s, q, rc) in avail]
                    schedule(w, e, op, enclosed=enclosed,
                             end_rc=sum(rc for *_, rc in enclosed))
                    send_batch(w, e, op.operator_id, r, data_pending)
                if W > 1 and not plan.is_stalled(w, e):
                    tick(w)
                    seq = progress_seq[w]
                    progress_seq[w] += 1
                    emit(w, e, EventKind.PROGRESS_SENT, channel_id=CONTROL_CHANNEL,
                         seq_no=seq, record_count=0)
                    for peer in range(W):
                        if peer != w:
                            arrival = (clk[w] + plan.delay(CONTROL_CHANNEL)
                                       + rng.randint(0, 1_000))
                            control_deliveries[peer].append((arrival, w, seq))
                round_end[w][r] = clk[w]
        # drain: leftover data arrives outside any schedule, then the marker
        for w in range(W):
            leftovers = sorted(data_pending[w])
            data_pending[w] = []
            for arrival, chan_id, sender, seq, rc in leftovers:
                tick(w, at_least=arrival + 1)
                emit(w, e, EventKind.DATA_RECEIVED, channel_id=chan_id, seq_no=seq,
                     remote_worker=sender, record_count=rc)
            if control_deliveries[w]:
                clk[w] = max(clk[w], max(a for a, _, _ in control_deliveries[w]))
            tick(w)
            emit(w, e, EventKind.EPOCH_END, seq_no=next_ordinal(w))
        # splice control receives into each worker's epoch slice by arrival
        for w in range(W):
            if not control_deliveries[w]:
                continue
            lo = splice_at[w]
            own = streams[w][lo:]
            merged: List[RawEvent] = []
            deliveries = sorted(control_deliveries[w])
            di = 0
            last_nanos = streams[w][lo - 1].at.nanos if lo else 0
            for ev in own:
                while di < len(deliveries) and deliveries[di][0] < ev.at.nanos:
                    arrival, sender, seq = deliveries[di]
                    nanos = max(arrival, last_nanos + 1)
                    merged.append(
                        RawEvent(at=Pair(e, nanos), local_worker=w,
                                 kind=EventKind.PROGRESS_RECEIVED,
                                 channel_id=CONTROL_CHANNEL, seq_no=seq,
                                 remote_worker=sender, record_count=0)
                    )
                    last_nanos = nanos
                    di += 1
                nanos = max(ev.at.nanos, last_nanos + 1)
                if nanos != ev.at.nanos:
                    ev = ev._replace(at=Pair(e, nanos))
                merged.append(ev)
                last_nanos = nanos
            for arrival, sender, seq in deliveries[di:]:
                # EpochEnd must stay last: push stragglers just before it
                nanos = max(arrival, last_nanos + 1)
                merged.insert(
                    len(merged) - 1,
                    RawEvent(at=Pair(e, nanos), local_worker=w,
                             kind=EventKind.PROGRESS_RECEIVED,
                             channel_id=CONTROL_CHANNEL, seq_no=seq,
                             remote_worker=sender, record_count=0),
                )
                end = merged[-1]
                merged[-1] = end._replace(at=Pair(e, nanos + rng.randint(20, 80)))
                last_nanos = merged[-1].at.nanos
            streams[w][lo:] = merged
            clk[w] = max(clk[w], last_nanos)

    for w in range(W):
        tick(w)
        emit(w, config.epochs, EventKind.TERMINATE, seq_no=next_ordinal(w))
    return streams


def event_count_estimate(config: SimConfig) -> int:
    """Exact events per healthy epoch for this config.

    Counts the recurring per-epoch events: schedules (scope wrappers
    included), data sends and receives, progress sends and receives, and
    the EpochEnd marker. One-time dataflow setup (Operates/Channels, at
    epoch 0) and the final Terminate are excluded, as are epochs where a
    stall_worker fault suppresses progress.
    """
    config.validate()
    plan = _Plan(config)
    W = config.workers
    rounds = config.rounds_per_epoch
    count = 0
    for w in range(W):
        for op in plan.leaves:
            wrappers = len(plan.ancestors[op.operator_id])
            count += rounds * 2 * (1 + wrappers)
        for op in plan.leaves:
            for r in range(rounds):
                count += len(plan.sends.get((op.operator_id, w, r), []))
    # every sent message is received exactly once, same epoch
    count += sum(
        len(plan.sends.get((op.operator_id, w, r), []))
        for op in plan.leaves
        for w in range(W)
        for r in range(rounds)
    )
    if W > 1:
        count += W * rounds  # ProgressSent
        count += W * rounds * (W - 1)  # ProgressReceived
    count += W  # EpochEnd markers
    return count


def check_contract(streams: Sequence[Sequence[RawEvent]], epochs: int) -> List[str]:
    """Validate profiling-contract conformance of per-worker event streams.

    Returns human-readable violations; empty means the streams conform.
    Checks Terms 1-3, per-worker strict nanos monotonicity, and perfect
    same-epoch data-message matching.
    """
    problems: List[str] = []
    sent: Dict[Tuple[int, int, int], RawEvent] = {}
    received: Dict[Tuple[int, int, int], RawEvent] = {}
    kinds_seen = set()
    for w, stream in enumerate(streams):
        last_nanos = -1
        current_epoch = 0
        ended: Dict[int, int] = {}
        for ev in stream:
            kinds_seen.add(ev.kind)
            if ev.local_worker != w:
                problems.append(f"worker {w}: event claims local_worker {ev.local_worker}")
            if ev.at.nanos <= last_nanos:
                problems.append(
                    f"worker {w}: nanos not strictly increasing at {ev.at.nanos}"
                )
            last_nanos = ev.at.nanos
            if ev.kind == EventKind.TERMINATE:
                if ev is not stream[-1]:
                    problems.append(f"worker {w}: Terminate is not the last event")
                continue
            if ev.at.epoch != current_epoch:
                problems.append(
                    f"worker {w}: event of epoch {ev.at.epoch} while epoch "
                    f"{current_epoch} is in flight (term 2)"
                )
            if ev.kind == EventKind.EPOCH_END:
                ended[ev.at.epoch] = ended.get(ev.at.epoch, 0) + 1
                current_epoch = ev.at.epoch + 1
            elif ev.kind == EventKind.DATA_SENT:
                key = (ev.channel_id, ev.local_worker, ev.seq_no)
                if key in sent:
                    problems.append(f"duplicate DataSent key {key}")
                sent[key] = ev
            elif ev.kind == EventKind.DATA_RECEIVED:
                key = (ev.channel_id, ev.remote_worker, ev.seq_no)
                if key in received:
                    problems.append(f"duplicate DataReceived key {key}")
                received[key] = ev
        for e in range(epochs):
            if ended.get(e, 0) != 1:
                problems.append(
                    f"worker {w}: {ended.get(e, 0)} EpochEnd markers for epoch {e} (term 3)"
                )
    for key, s in sent.items():
        r = received.get(key)
        if r is None:
            problems.append(f"unmatched DataSent {key}")
            continue
        if r.local_worker != s.remote_worker:
            problems.append(f"DataSent {key} delivered to worker {r.local_worker}, "
                            f"addressed to {s.remote_worker}")
        if r.at.nanos <= s.at.nanos:
            problems.append(f"receive not later than send for {key}")
        if r.at.epoch != s.at.epoch:
            problems.append(f"cross-epoch delivery for {key}")
    for key in received:
        if key not in sent:
            problems.append(f"unmatched DataReceived {key}")
    if epochs > 0:
        for kind in (EventKind.SCHEDULE_START, EventKind.SCHEDULE_END,
                     EventKind.EPOCH_END):
            if kind not in kinds_seen:
                problems.append(f"no {kind.name} events at all (term 1)")
    return problems


def load_config(path: str | Path) -> SimConfig:
    """Load a SimConfig from a JSON file.

    Schema (see README): top-level keys mirror SimConfig field names;
    operators are [id, [address...], service_ns]; channels are
    [id, src, dst, policy, target?]; faults are objects with a "kind".
    rng_seed is mandatory.
    """
    raw = json.loads(Path(path).read_text())
    if "rng_seed" not in raw:
        raise InvalidConfig("rng_seed is mandatory in config files")
    try:
        operators = [
            OperatorSpec(int(o[0]), tuple(int(x) for x in o[1]),
                         int(o[2]) if len(o) > 2 else 1_000)
            for o in raw["operators"]
        ]
        channels = [
            ChannelSpec(int(c[0]), int(c[1]), int(c[2]),
                        c[3] if len(c) > 3 else "uniform",
                        int(c[4]) if len(c) > 4 and c[4] is not None else None)
            for c in raw.get("channels", [])
        ]
        faults = [FaultSpec(**f) for f in raw.get("faults", [])]
        config = SimConfig(
            workers=int(raw["workers"]),
            epochs=int(raw["epochs"]),
            records_per_worker_per_epoch=int(raw["records_per_worker_per_epoch"]),
            operators=operators,
            channels=channels,
            faults=faults,
            rng_seed=int(raw["rng_seed"]),
            network_delay_ns=int(raw.get("network_delay_ns", 50_000)),
            rounds_per_epoch=int(raw.get("rounds_per_epoch", 5)),
            records_per_message=int(raw.get("records_per_message", 50)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise InvalidConfig(f"bad config file {path}: {exc}") from exc
    config.validate()
    return config
