"""Per-epoch program activity graph construction.

Nodes are (worker, timestamp) points; edges are typed activities between
consecutive points of a worker's timeline plus cross-worker message edges.

Worker-local classification walks each timeline once, matching every
record with its predecessor. A segment inside a schedule interval is
Processing when the interval encloses any data record or its ScheduleEnd
reports a nonzero record count, Spinning otherwise; a gap outside every
interval is Waiting when it ends in a remote receive (the worker was
blocked on external input) and Busy otherwise. Cross-worker edges join
send and receive records by message identity: (channel, sender, sequence)
for data, broadcast fan-out per receiver for control.

Edges never span epochs: the epochal session window cuts the graph only
at epoch markers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .model import ActivityKind, LogRecord, Pair
from .ingest import MalformedTrace


class EdgeType(IntEnum):
    PROCESSING = 1
    SPINNING = 2
    WAITING = 3
    BUSY = 4
    DATA_MESSAGE = 5
    CONTROL_MESSAGE = 6

    @property
    def wire_name(self) -> str:
        return _WIRE_NAMES[self]


_WIRE_NAMES = {
    EdgeType.PROCESSING: "Processing",
    EdgeType.SPINNING: "Spinning",
    EdgeType.WAITING: "Waiting",
    EdgeType.BUSY: "Busy",
    EdgeType.DATA_MESSAGE: "DataMessage",
    EdgeType.CONTROL_MESSAGE: "ControlMessage",
}

LOCAL_TYPES = frozenset(
    {EdgeType.PROCESSING, EdgeType.SPINNING, EdgeType.WAITING, EdgeType.BUSY}
)
REMOTE_TYPES = frozenset({EdgeType.DATA_MESSAGE, EdgeType.CONTROL_MESSAGE})


class PagNode(NamedTuple):
    """Graph atom: a (worker, timestamp) point on a worker's timeline."""

    worker: int
    at: Pair


class PagEdge(NamedTuple):
    """One typed activity. Local edges stay on one worker's timeline;
    message edges bridge two workers within the same epoch."""

    src_worker: int
    src_epoch: int
    src_nanos: int
    dst_worker: int
    dst_epoch: int
    dst_nanos: int
    edge_type: EdgeType
    operator_id: Optional[int] = None
    record_count: int = 0

    @property
    def src(self) -> PagNode:
        return PagNode(self.src_worker, Pair(self.src_epoch, self.src_nanos))

    @property
    def dst(self) -> PagNode:
        return PagNode(self.dst_worker, Pair(self.dst_epoch, self.dst_nanos))

    @property
    def duration_ns(self) -> int:
        return self.dst_nanos - self.src_nanos

    @property
    def is_remote(self) -> bool:
        return self.edge_type in REMOTE_TYPES


class AmbiguousMatch(ValueError):
    """Two message records carried the same identity on one side."""


def edge_between(
    a: LogRecord, b: LogRecord, edge_type: EdgeType,
    operator_id: Optional[int] = None, record_count: int = 0,
) -> PagEdge:
    return PagEdge(
        a.worker, a.epoch, a.nanos, b.worker, b.epoch, b.nanos,
        edge_type, operator_id, record_count,
    )


def build_local_edges(records: Sequence[LogRecord]) -> List[PagEdge]:
    """Edges along one worker's single-epoch timeline: n records, n-1 edges."""
    n = len(records)
    if n < 2:
        return []
    worker = records[0].worker
    epoch = records[0].epoch
    for prev, cur in zip(records, records[1:]):
        if cur.worker != worker or cur.epoch != epoch:
            raise ValueError(
                "build_local_edges needs records of a single (worker, epoch)"
            )
        if cur.seq_no <= prev.seq_no or cur.nanos <= prev.nanos:
            raise ValueError(
                f"records out of order at seq {cur.seq_no} (worker {worker})"
            )

    # pass 1: schedule intervals [start, end] with their classification
    intervals: List[Tuple[int, int, int, bool]] = []  # start, end, op, processing
    start_idx: Optional[int] = None
    has_data = False
    for i, rec in enumerate(records):
        act = rec.activity
        if act == ActivityKind.SCHEDULE_START:
            if start_idx is not None:
                raise MalformedTrace(
                    f"worker {worker}: nested schedule at seq {rec.seq_no}"
                )
            start_idx = i
            has_data = False
        elif act == ActivityKind.SCHEDULE_END:
            if start_idx is None:
                raise MalformedTrace(
                    f"worker {worker}: ScheduleEnd without start at seq {rec.seq_no}"
                )
            intervals.append(
                (start_idx, i, rec.operator_id, has_data or rec.record_count > 0)
            )
            start_idx = None
        elif act in (ActivityKind.DATA_SENT, ActivityKind.DATA_RECEIVED):
            if start_idx is not None:
                has_data = True
    if start_idx is not None:
        # truncated trace: classify the dangling interval on data evidence
        intervals.append((start_idx, n - 1, records[start_idx].operator_id, has_data))

    edges: List[PagEdge] = []
    it = iter(intervals)
    current = next(it, None)
    for i in range(n - 1):
        while current is not None and i >= current[1]:
            current = next(it, None)
        nxt = records[i + 1]
        if current is not None and current[0] <= i < current[1]:
            _, end, op, processing = current
            if processing:
                # enclosed data records attribute their count to the edge
                # ending at them; the ScheduleEnd record is not a data record
                rc = 0
                if nxt.activity in (
                    ActivityKind.DATA_SENT, ActivityKind.DATA_RECEIVED
                ):
                    rc = nxt.record_count
                edges.append(
                    edge_between(records[i], nxt, EdgeType.PROCESSING, op, rc)
                )
            else:
                edges.append(edge_between(records[i], nxt, EdgeType.SPINNING, op))
        elif nxt.is_receive():
            edges.append(edge_between(records[i], nxt, EdgeType.WAITING))
        else:
            edges.append(edge_between(records[i], nxt, EdgeType.BUSY))
    return edges


def build_data_edges(
    sent: Iterable[LogRecord], received: Iterable[LogRecord]
) -> Tuple[List[PagEdge], List[LogRecord]]:
    """Match data sends with receives by (channel, sender, sequence).

    Returns (edges, unmatched records). A duplicate identity on either
    side is an AmbiguousMatch error.
    """
    by_key: Dict[Tuple, LogRecord] = {}
    for rec in sent:
        key = (rec.channel_id, rec.worker, rec.msg_seq)
        if key in by_key:
            raise AmbiguousMatch(f"duplicate DataMessage(sent) identity {key}")
        by_key[key] = rec
    edges: List[PagEdge] = []
    unmatched: List[LogRecord] = []
    seen: set = set()
    for rec in received:
        key = (rec.channel_id, rec.remote_worker, rec.msg_seq)
        if key in seen:
            raise AmbiguousMatch(f"duplicate DataMessage(received) identity {key}")
        peer = by_key.get(key)
        if peer is None or peer.worker == rec.worker:
            unmatched.append(rec)
            continue
        seen.add(key)
        edges.append(
            edge_between(peer, rec, EdgeType.DATA_MESSAGE,
                         record_count=peer.record_count)
        )
    for key, rec in by_key.items():
        if key not in seen:
            unmatched.append(rec)
    return edges, unmatched


def build_control_edges(
    sent: Iterable[LogRecord], received: Iterable[LogRecord]
) -> Tuple[List[PagEdge], List[LogRecord]]:
    """Fan broadcast progress out: one edge per receiver of each send."""
    by_key: Dict[Tuple, LogRecord] = {}
    unmatched: List[LogRecord] = []
    matched: set = set()
    for rec in sent:
        key = (rec.channel_id, rec.worker, rec.msg_seq)
        if key in by_key:
            unmatched.append(rec)
            continue
        by_key[key] = rec
    edges: List[PagEdge] = []
    for rec in received:
        key = (rec.channel_id, rec.remote_worker, rec.msg_seq)
        peer = by_key.get(key)
        if peer is None or peer.worker == rec.worker:
            unmatched.append(rec)
            continue
        matched.add(key)
        edges.append(edge_between(peer, rec, EdgeType.CONTROL_MESSAGE))
    return edges, unmatched


@dataclass
class PagResult:
    """An epoch's graph plus the message records that found no partner."""

    edges: List[PagEdge] = field(default_factory=list)
    unmatched: List[LogRecord] = field(default_factory=list)


def build_pag(records: Sequence[LogRecord]) -> PagResult:
    """Construct one epoch's full graph from its log records."""
    per_worker: Dict[int, List[LogRecord]] = {}
    data_sent: List[LogRecord] = []
    data_received: List[LogRecord] = []
    ctrl_sent: List[LogRecord] = []
    ctrl_received: List[LogRecord] = []
    for rec in records:
        per_worker.setdefault(rec.worker, []).append(rec)
        act = rec.activity
        if act == ActivityKind.DATA_SENT:
            data_sent.append(rec)
        elif act == ActivityKind.DATA_RECEIVED:
            data_received.append(rec)
        elif act == ActivityKind.CONTROL_SENT:
            ctrl_sent.append(rec)
        elif act == ActivityKind.CONTROL_RECEIVED:
            ctrl_received.append(rec)
    result = PagResult()
    for worker in sorted(per_worker):
        timeline = sorted(per_worker[worker], key=lambda r: r.seq_no)
        result.edges.extend(build_local_edges(timeline))
    data_edges, data_unmatched = build_data_edges(data_sent, data_received)
    ctrl_edges, ctrl_unmatched = build_control_edges(ctrl_sent, ctrl_received)
    result.edges.extend(data_edges)
    result.edges.extend(ctrl_edges)
    result.unmatched = data_unmatched + ctrl_unmatched
    return result
