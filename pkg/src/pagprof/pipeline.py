"""The profiling engine: replay -> normalize -> graph -> analytics, per epoch.

Work is partitioned by event stream: every reader (one per source worker
and writer) is owned by exactly one engine worker, so a source worker's
per-epoch timeline is always normalized and classified in one place.
Message records are exchanged to a single owner per join key; the only
cross-worker coordination is the epoch frontier.

Timelines are processed columnar (numpy) rather than record-by-record:
frame payloads bulk-decode into structured arrays and worker-local edges
classify via vectorized interval arithmetic. The result is pinned equal
to the record-at-a-time construction (`pag.build_local_edges`) by the
test suite; the object path remains the semantic definition.

With profiler_workers == 1 everything runs inline. With N > 1, offline
traces fan out over N processes that each replay their own files and
report per-epoch partial products; the coordinator joins message records
into remote edges, merges aggregates, and finalizes epochs in order.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from .analytics import (
    HopEdge,
    HopWeight,
    InvariantConfig,
    InvariantViolation,
    MetricsRow,
    Rule,
    khops,
    merge_metrics,
    metrics,
    weight_hops,
)
from .ingest import MalformedTrace, ScopeBlacklist, blacklist_from_events
from .model import NO_U32, NO_U64, ActivityKind, EventKind, LogRecord
from .pag import EdgeType, PagEdge, build_control_edges, build_data_edges
from .replay import (
    FileFrameReader,
    FrameReader,
    ReplayError,
    ReplaySource,
    open_offline,
    open_online,
)
from .wire import decode_payload, decode_payload_array, is_fixed_stride

_SCHED_START = int(EventKind.SCHEDULE_START)
_SCHED_END = int(EventKind.SCHEDULE_END)
_DATA_SENT = int(EventKind.DATA_SENT)
_DATA_RECEIVED = int(EventKind.DATA_RECEIVED)
_PROGRESS_SENT = int(EventKind.PROGRESS_SENT)
_PROGRESS_RECEIVED = int(EventKind.PROGRESS_RECEIVED)


@dataclass(frozen=True)
class AnalysisSpec:
    """What the engine computes per epoch beyond the graph itself."""

    invariants: InvariantConfig = InvariantConfig()
    with_metrics: bool = True
    khop_k: Optional[int] = None
    collect_edges: bool = False


@dataclass
class EpochResult:
    """Finalized outputs of one closed epoch."""

    epoch: int
    event_count: int
    local_edges: int
    data_edges: int
    control_edges: int
    metrics_rows: List[MetricsRow] = field(default_factory=list)
    violations: List[InvariantViolation] = field(default_factory=list)
    record_metrics: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    edges: Optional[List[PagEdge]] = None
    khop_edges: Optional[List[HopEdge]] = None
    khop_weights: Optional[List[HopWeight]] = None
    unmatched: int = 0
    elapsed_ns: int = 0

    @property
    def edge_count(self) -> int:
        return self.local_edges + self.data_edges + self.control_edges


_MSG_FIELDS = ("nanos", "worker", "channel", "seq", "remote", "records")


@dataclass
class _Partial:
    """One engine worker's contribution to one epoch."""

    epoch: int
    event_count: int = 0
    local_edge_count: int = 0
    metric_rows: List[MetricsRow] = field(default_factory=list)
    violations: List[InvariantViolation] = field(default_factory=list)
    span: Optional[Tuple[int, int, int]] = None  # (min, max, worker of max)
    workers_seen: Set[int] = field(default_factory=set)
    progress_workers: Set[int] = field(default_factory=set)
    processed: Dict[int, int] = field(default_factory=dict)
    messages: Dict[str, List[tuple]] = field(default_factory=lambda: {
        "data_sent": [], "data_recv": [], "ctrl_sent": [], "ctrl_recv": []
    })
    edges: Optional[List[PagEdge]] = None


def _classify_timeline(
    worker: int,
    epoch: int,
    kind: np.ndarray,
    nanos: np.ndarray,
    op: np.ndarray,
    rc: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized local-edge classification over one (worker, epoch) timeline.

    Returns (edge_type, operator, record_count) arrays of length n-1;
    source/destination nanos are nanos[:-1] / nanos[1:].
    """
    is_start = kind == _SCHED_START
    is_end = kind == _SCHED_END
    open_after = np.cumsum(is_start.astype(np.int64) - is_end.astype(np.int64))
    if open_after.min(initial=0) < 0:
        raise MalformedTrace(
            f"worker {worker} epoch {epoch}: ScheduleEnd without an open ScheduleStart"
        )
    if open_after.max(initial=0) > 1:
        raise MalformedTrace(
            f"worker {worker} epoch {epoch}: nested schedule survived peeling"
        )
    n = len(kind)
    if n < 2:
        return (np.empty(0, np.uint8), np.empty(0, np.uint64), np.empty(0, np.uint64))
    interval_id = np.cumsum(is_start) - 1
    is_data = (kind == _DATA_SENT) | (kind == _DATA_RECEIVED)
    n_intervals = int(is_start.sum())
    has_data = np.zeros(n_intervals + 1, dtype=bool)
    inside_record = open_after == 1
    strict_inside_data = is_data & inside_record
    if strict_inside_data.any():
        np.logical_or.at(has_data, interval_id[strict_inside_data], True)
    end_rc = np.zeros(n_intervals + 1, dtype=np.uint64)
    if is_end.any():
        end_rc[interval_id[is_end]] = rc[is_end]
    interval_op = np.zeros(n_intervals + 1, dtype=np.uint64)
    if n_intervals:
        interval_op[interval_id[is_start]] = op[is_start]
    processing = has_data[:n_intervals + 1] | (end_rc > 0)

    seg_inside = inside_record[:-1]
    seg_iid = np.where(seg_inside, interval_id[:-1], 0)
    seg_processing = seg_inside & processing[seg_iid]
    next_receive = (kind[1:] == _DATA_RECEIVED) | (kind[1:] == _PROGRESS_RECEIVED)
    etype = np.where(
        seg_inside,
        np.where(seg_processing, int(EdgeType.PROCESSING), int(EdgeType.SPINNING)),
        np.where(next_receive, int(EdgeType.WAITING), int(EdgeType.BUSY)),
    ).astype(np.uint8)
    operator = np.where(seg_inside, interval_op[seg_iid], NO_U64).astype(np.uint64)
    rc_edge = np.where(
        seg_processing & strict_inside_data[1:], rc[1:], 0
    ).astype(np.uint64)
    return etype, operator, rc_edge


def _materialize_edges(
    worker: int, epoch: int, nanos: np.ndarray,
    etype: np.ndarray, operator: np.ndarray, rc: np.ndarray,
) -> List[PagEdge]:
    src = nanos[:-1].tolist()
    dst = nanos[1:].tolist()
    ops = [None if o == NO_U64 else o for o in operator.tolist()]
    return [
        PagEdge(worker, epoch, s, worker, epoch, d, EdgeType(t), o, r)
        for s, d, t, o, r in zip(src, dst, etype.tolist(), ops, rc.tolist())
    ]


def _local_metric_rows(
    epoch: int, worker: int, nanos: np.ndarray,
    etype: np.ndarray, rc: np.ndarray,
) -> List[MetricsRow]:
    durations = (nanos[1:] - nanos[:-1]).astype(np.int64)
    counts = np.bincount(etype, minlength=7)
    dur_sums = np.bincount(etype, weights=durations, minlength=7)
    rc_sums = np.bincount(etype, weights=rc.astype(np.int64), minlength=7)
    return [
        MetricsRow(epoch, worker, worker, EdgeType(t), int(counts[t]),
                   int(dur_sums[t]), int(rc_sums[t]))
        for t in range(1, 5)
        if counts[t]
    ]


class _TimelineProcessor:
    """Per-engine-worker state: blacklist plus per-epoch array buffers."""

    def __init__(self, spec: AnalysisSpec):
        self.spec = spec
        self.blacklist: Optional[ScopeBlacklist] = None
        self._outer_ids: Optional[np.ndarray] = None
        # epoch -> worker -> list of structured arrays
        self.buffers: Dict[int, Dict[int, List[np.ndarray]]] = {}

    def _note_setup(self, events) -> None:
        bl = blacklist_from_events(events)
        if self.blacklist is None:
            self.blacklist = bl
        else:
            for op_id, addr in bl.id_index.items():
                known = self.blacklist.id_index.get(op_id)
                if known is not None and known != addr:
                    raise MalformedTrace(f"conflicting setup for operator {op_id}")
                self.blacklist.id_index[op_id] = addr
            self.blacklist.addresses |= bl.addresses
        outer = [
            op_id for op_id, addr in self.blacklist.id_index.items()
            if addr in self.blacklist.addresses
        ]
        self._outer_ids = np.array(sorted(outer), dtype=np.uint64)

    def ingest_payload(self, epoch: int, payload: bytes) -> int:
        """Decode, filter, and buffer one frame; returns admitted event count."""
        if is_fixed_stride(payload):
            _, arr = decode_payload_array(payload)
        else:
            _, events = decode_payload(payload)
            setup = [ev for ev in events
                     if ev.kind in (EventKind.OPERATES, EventKind.CHANNELS)]
            if setup:
                self._note_setup(setup)
            rest = [ev for ev in events
                    if ev.kind not in (EventKind.OPERATES, EventKind.CHANNELS)]
            if not rest:
                return 0
            arr = np.zeros(len(rest), dtype=_REC_DTYPE)
            for i, ev in enumerate(rest):
                arr[i] = (
                    int(ev.kind), ev.at.nanos, ev.local_worker,
                    NO_U64 if ev.operator_id is None else ev.operator_id,
                    NO_U64 if ev.channel_id is None else ev.channel_id,
                    ev.seq_no,
                    NO_U32 if ev.remote_worker is None else ev.remote_worker,
                    ev.record_count,
                )
        kind = arr["kind"]
        keep = kind <= _PROGRESS_RECEIVED
        # drop worker-local messages
        keep &= ~((kind >= _DATA_SENT) & (arr["remote"] == arr["worker"]))
        # peel outer-scope schedules
        if self._outer_ids is not None and len(self._outer_ids):
            sched = kind <= _SCHED_END
            keep &= ~(sched & np.isin(arr["op"], self._outer_ids))
        arr = arr[keep]
        if not len(arr):
            return 0
        per_worker = self.buffers.setdefault(epoch, {})
        for w in np.unique(arr["worker"]).tolist():
            per_worker.setdefault(w, []).append(arr[arr["worker"] == w])
        return len(arr)

    def finalize_epoch(self, epoch: int) -> _Partial:
        """Classify every owned timeline of a closed epoch into a partial."""
        spec = self.spec
        inv = spec.invariants
        part = _Partial(epoch=epoch)
        per_worker = self.buffers.pop(epoch, {})
        for worker in sorted(per_worker):
            arr = np.concatenate(per_worker[worker])
            part.event_count += len(arr)
            part.workers_seen.add(worker)
            kind = arr["kind"]
            nanos = arr["nanos"].astype(np.int64)
            if len(nanos) > 1 and not (nanos[1:] > nanos[:-1]).all():
                raise MalformedTrace(
                    f"worker {worker} epoch {epoch}: nanos not strictly increasing"
                )
            if len(nanos):
                lo, hi = int(nanos.min()), int(nanos.max())
                if part.span is None:
                    part.span = (lo, hi, worker)
                else:
                    plo, phi, pw = part.span
                    part.span = (
                        min(plo, lo),
                        max(phi, hi),
                        worker if hi > phi else pw,
                    )
            self._collect_messages(part, epoch, worker, arr)
            etype, operator, rc_edge = _classify_timeline(
                worker, epoch, kind, arr["nanos"], arr["op"], arr["records"]
            )
            part.local_edge_count += len(etype)
            if spec.with_metrics and len(etype):
                part.metric_rows.extend(
                    _local_metric_rows(epoch, worker, arr["nanos"], etype, rc_edge)
                )
            processing_mask = etype == int(EdgeType.PROCESSING)
            part.processed[worker] = int(rc_edge[processing_mask].sum())
            if inv.operator_max_ms is not None and len(etype):
                limit = inv.operator_max_ms * 1_000_000
                durations = nanos[1:] - nanos[:-1]
                hits = np.flatnonzero(processing_mask & (durations > limit))
                for i in hits.tolist():
                    part.violations.append(
                        InvariantViolation(
                            Rule.OPERATOR_MAX, epoch, int(durations[i]), worker,
                            worker, epoch, int(nanos[i]),
                            operator_id=int(operator[i]),
                            activity_type=EdgeType.PROCESSING,
                        )
                    )
            if spec.collect_edges or spec.khop_k is not None:
                if part.edges is None:
                    part.edges = []
                part.edges.extend(
                    _materialize_edges(worker, epoch, arr["nanos"], etype,
                                       operator, rc_edge)
                )
        return part

    def _collect_messages(self, part: _Partial, epoch: int, worker: int,
                          arr: np.ndarray) -> None:
        kind = arr["kind"]
        for code, bucket in (
            (_DATA_SENT, "data_sent"),
            (_DATA_RECEIVED, "data_recv"),
            (_PROGRESS_SENT, "ctrl_sent"),
            (_PROGRESS_RECEIVED, "ctrl_recv"),
        ):
            mask = kind == code
            if not mask.any():
                continue
            rows = arr[mask]
            part.messages[bucket].extend(
                zip(
                    rows["nanos"].tolist(),
                    [worker] * int(mask.sum()),
                    rows["channel"].tolist(),
                    rows["seq"].tolist(),
                    rows["remote"].tolist(),
                    rows["records"].tolist(),
                )
            )
            if code == _PROGRESS_SENT:
                part.progress_workers.add(worker)


_REC_DTYPE = np.dtype(
    [
        ("kind", "u1"),
        ("nanos", "<u8"),
        ("worker", "<u4"),
        ("op", "<u8"),
        ("channel", "<u8"),
        ("seq", "<u8"),
        ("remote", "<u4"),
        ("records", "<u8"),
    ]
)


def _msg_to_record(epoch: int, activity: ActivityKind, row: tuple) -> LogRecord:
    nanos, worker, channel, seq, remote, records = row
    return LogRecord(
        epoch=epoch, nanos=nanos, worker=worker, activity=activity,
        channel_id=None if channel == NO_U64 else channel,
        remote_worker=None if remote == NO_U32 else remote,
        msg_seq=seq, record_count=records,
    )


def _finalize(
    epoch: int, parts: List[_Partial], spec: AnalysisSpec, t0: int
) -> EpochResult:
    """Join messages, merge partials, and run the epoch-level analytics."""
    inv = spec.invariants
    data_sent: List[LogRecord] = []
    data_recv: List[LogRecord] = []
    ctrl_sent: List[LogRecord] = []
    ctrl_recv: List[LogRecord] = []
    for part in parts:
        data_sent += [_msg_to_record(epoch, ActivityKind.DATA_SENT, r)
                      for r in part.messages["data_sent"]]
        data_recv += [_msg_to_record(epoch, ActivityKind.DATA_RECEIVED, r)
                      for r in part.messages["data_recv"]]
        ctrl_sent += [_msg_to_record(epoch, ActivityKind.CONTROL_SENT, r)
                      for r in part.messages["ctrl_sent"]]
        ctrl_recv += [_msg_to_record(epoch, ActivityKind.CONTROL_RECEIVED, r)
                      for r in part.messages["ctrl_recv"]]
    data_edges, data_unmatched = build_data_edges(data_sent, data_recv)
    ctrl_edges, ctrl_unmatched = build_control_edges(ctrl_sent, ctrl_recv)
    remote_edges = data_edges + ctrl_edges

    result = EpochResult(
        epoch=epoch,
        event_count=sum(p.event_count for p in parts),
        local_edges=sum(p.local_edge_count for p in parts),
        data_edges=len(data_edges),
        control_edges=len(ctrl_edges),
        unmatched=len(data_unmatched) + len(ctrl_unmatched),
    )
    if spec.with_metrics:
        result.metrics_rows = merge_metrics(
            [p.metric_rows for p in parts] + [metrics(epoch, remote_edges)]
        )
    violations = [v for p in parts for v in p.violations]
    if inv.message_max_ms is not None:
        limit = inv.message_max_ms * 1_000_000
        for e in remote_edges:
            if e.duration_ns > limit:
                violations.append(
                    InvariantViolation(
                        Rule.MESSAGE_MAX, epoch, e.duration_ns, e.src_worker,
                        e.src_worker, epoch, e.src_nanos,
                        activity_type=e.edge_type,
                    )
                )
    if inv.epoch_max_ms is not None:
        spans = [p.span for p in parts if p.span is not None]
        if spans:
            lo = min(s[0] for s in spans)
            hi, hi_worker = max((s[1], s[2]) for s in spans)[:2]
            if hi - lo > inv.epoch_max_ms * 1_000_000:
                violations.append(
                    InvariantViolation(
                        Rule.EPOCH_MAX, epoch, hi - lo, hi_worker,
                        hi_worker, epoch, hi,
                    )
                )
    if inv.progress_max_ms is not None:
        limit = inv.progress_max_ms * 1_000_000
        per_dst: Dict[int, List[PagEdge]] = {}
        for e in ctrl_edges:
            per_dst.setdefault(e.dst_worker, []).append(e)
        for dst in sorted(per_dst):
            chain = sorted(per_dst[dst], key=lambda e: e.src_nanos)
            for prev, cur in zip(chain, chain[1:]):
                gap = cur.src_nanos - prev.src_nanos
                if gap > limit:
                    violations.append(
                        InvariantViolation(
                            Rule.PROGRESS_MAX, epoch, gap, cur.src_worker,
                            cur.src_worker, epoch, cur.src_nanos,
                            activity_type=EdgeType.CONTROL_MESSAGE,
                        )
                    )
    workers_seen = set().union(*(p.workers_seen for p in parts)) if parts else set()
    if len(workers_seen) >= 2:
        with_progress = set().union(*(p.progress_workers for p in parts))
        for w in sorted(workers_seen - with_progress):
            violations.append(
                InvariantViolation(Rule.PROGRESS_ABSENT, epoch, 0, w, w, epoch, 0)
            )
    result.violations = sorted(
        violations,
        key=lambda v: (v.rule.value, v.source_worker, v.edge_nanos, v.duration_ns),
    )

    carried: Dict[int, int] = {}
    for e in data_edges:
        carried[e.dst_worker] = carried.get(e.dst_worker, 0) + e.record_count
    for w in sorted(workers_seen):
        processed = sum(p.processed.get(w, 0) for p in parts)
        result.record_metrics[w] = (carried.get(w, 0), processed)

    if spec.collect_edges or spec.khop_k is not None:
        local_edges = [e for p in parts if p.edges for e in p.edges]
        all_edges = local_edges + remote_edges
        if spec.khop_k is not None:
            result.khop_edges = khops(all_edges, spec.khop_k)
            result.khop_weights = weight_hops(result.khop_edges)
        if spec.collect_edges:
            result.edges = all_edges
    result.elapsed_ns = time.perf_counter_ns() - t0
    return result


def _run_source(
    source: ReplaySource, spec: AnalysisSpec
) -> Iterator[Tuple[int, _Partial]]:
    """Drive one ReplaySource, yielding a partial per closed epoch."""
    proc = _TimelineProcessor(spec)
    while True:
        step = source.step_raw()
        if step is None:
            return
        epoch, payload, closed = step
        if payload is not None:
            proc.ingest_payload(epoch, payload)
        for e in closed:
            yield e, proc.finalize_epoch(e)


def run_inline(
    readers: Sequence[FrameReader],
    spec: AnalysisSpec,
    max_epochs_in_flight: int = 1,
) -> Iterator[EpochResult]:
    """Single-process engine over already-opened readers."""
    source = ReplaySource(list(readers), source_peers=len(readers),
                          max_epochs_in_flight=max_epochs_in_flight)
    t0 = time.perf_counter_ns()
    for epoch, part in _run_source(source, spec):
        yield _finalize(epoch, [part], spec, t0)
        t0 = time.perf_counter_ns()


def _child_main(paths: List[str], spec: AnalysisSpec, max_in_flight: int,
                out) -> None:
    try:
        readers: List[FrameReader] = [FileFrameReader(p) for p in paths]
        source = ReplaySource(readers, source_peers=len(readers),
                              max_epochs_in_flight=max_in_flight)
        for epoch, part in _run_source(source, spec):
            out.put(("epoch", part))
        out.put(("done", None))
    except BaseException as exc:  # surfaced in the coordinator
        out.put(("error", repr(exc)))
    # puts are synchronous (SimpleQueue): skip interpreter teardown
    os._exit(0)


def run_offline(
    trace_dir: str | Path,
    source_peers: int,
    spec: AnalysisSpec,
    profiler_workers: int = 1,
    max_epochs_in_flight: int = 1,
) -> Iterator[EpochResult]:
    """Analyze an offline trace directory, in order of epoch closure."""
    if profiler_workers <= 1:
        yield from run_inline(
            open_offline(trace_dir, source_peers), spec, max_epochs_in_flight
        )
        return
    paths = sorted(str(p) for p in Path(trace_dir).glob("worker_*_writer_*.st2"))
    if len(paths) != source_peers:
        raise ReplayError(
            f"{trace_dir} holds {len(paths)} streams, "
            f"--source-peers says {source_peers}"
        )
    n = min(profiler_workers, len(paths))
    assignment: List[List[str]] = [[] for _ in range(n)]
    for i, p in enumerate(paths):
        assignment[i % n].append(p)
    ctx = mp.get_context("fork")
    queue = ctx.SimpleQueue()
    procs = [
        ctx.Process(target=_child_main, args=(chunk, spec, max_epochs_in_flight, queue),
                    daemon=True)
        for chunk in assignment
    ]
    for p in procs:
        p.start()
    pending: Dict[int, List[_Partial]] = {}
    next_epoch: Optional[int] = None
    done = 0
    ready: Dict[int, List[_Partial]] = {}
    t0 = time.perf_counter_ns()
    try:
        while done < n:
            tag, payload = queue.get()
            if tag == "done":
                done += 1
                continue
            if tag == "error":
                raise RuntimeError(f"engine worker failed: {payload}")
            part: _Partial = payload
            bucket = pending.setdefault(part.epoch, [])
            bucket.append(part)
            if len(bucket) == n:
                ready[part.epoch] = pending.pop(part.epoch)
            if next_epoch is None and ready:
                next_epoch = min(ready)
            while next_epoch is not None and next_epoch in ready:
                yield _finalize(next_epoch, ready.pop(next_epoch), spec, t0)
                t0 = time.perf_counter_ns()
                next_epoch += 1
        for epoch in sorted(ready):
            yield _finalize(epoch, ready.pop(epoch), spec, t0)
            t0 = time.perf_counter_ns()
        if pending:
            raise RuntimeError(
                f"epochs {sorted(pending)} never completed on all engine workers"
            )
    finally:
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()


def run_online(
    interface: str,
    port: int,
    source_peers: int,
    spec: AnalysisSpec,
    max_epochs_in_flight: int = 1,
) -> Iterator[EpochResult]:
    """Analyze live TCP streams; accepts exactly source_peers connections.

    Runs the single-process engine: socket readers drain on feeder threads
    and the analysis interleaves per frame.
    """
    readers = open_online(interface, port, source_peers)
    yield from run_inline(readers, spec, max_epochs_in_flight)
