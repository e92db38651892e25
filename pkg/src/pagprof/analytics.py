"""Analytics over the per-epoch edge stream.

Three families: aggregate metrics (group-by worker pair and activity
type), invariant checking with alert records, and the backward k-hops
graph pattern. Everything here is a deterministic set transformer over a
closed epoch; callers may partition and merge where noted.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

from .model import ActivityKind, LogRecord, Pair
from .pag import REMOTE_TYPES, EdgeType, PagEdge, PagNode


class MetricsRow(NamedTuple):
    """Per-epoch aggregate keyed by (from_worker, to_worker, activity_type)."""

    epoch: int
    from_worker: int
    to_worker: int
    activity_type: EdgeType
    count: int
    total_duration_ns: int
    total_records: int


def metrics(epoch: int, edges: Iterable[PagEdge]) -> List[MetricsRow]:
    """One row per occupied group; rows partition the edge multiset."""
    acc: Dict[Tuple[int, int, EdgeType], List[int]] = {}
    for e in edges:
        key = (e.src_worker, e.dst_worker, e.edge_type)
        cell = acc.get(key)
        if cell is None:
            acc[key] = [1, e.dst_nanos - e.src_nanos, e.record_count]
        else:
            cell[0] += 1
            cell[1] += e.dst_nanos - e.src_nanos
            cell[2] += e.record_count
    return [
        MetricsRow(epoch, f, t, ty, c, d, r)
        for (f, t, ty), (c, d, r) in sorted(acc.items())
    ]


def merge_metrics(parts: Iterable[Sequence[MetricsRow]]) -> List[MetricsRow]:
    """Merge partition-local rows into the full group-by (exact, associative)."""
    acc: Dict[Tuple[int, int, int, EdgeType], List[int]] = {}
    for rows in parts:
        for row in rows:
            key = (row.epoch, row.from_worker, row.to_worker, row.activity_type)
            cell = acc.get(key)
            if cell is None:
                acc[key] = [row.count, row.total_duration_ns, row.total_records]
            else:
                cell[0] += row.count
                cell[1] += row.total_duration_ns
                cell[2] += row.total_records
    return [
        MetricsRow(e, f, t, ty, c, d, r)
        for (e, f, t, ty), (c, d, r) in sorted(acc.items())
    ]


def metrics_csv_lines(rows: Iterable[MetricsRow]) -> str:
    """Header-less CSV: epoch,from,to,type,count,total_duration_ns,total_records."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for row in rows:
        writer.writerow(
            [row.epoch, row.from_worker, row.to_worker,
             row.activity_type.wire_name, row.count,
             row.total_duration_ns, row.total_records]
        )
    return out.getvalue()


class Rule(str, Enum):
    EPOCH_MAX = "EpochMax"
    MESSAGE_MAX = "MessageMax"
    OPERATOR_MAX = "OperatorMax"
    PROGRESS_MAX = "ProgressMax"
    PROGRESS_ABSENT = "ProgressAbsent"


@dataclass(frozen=True)
class InvariantConfig:
    """Temporal ceilings in milliseconds; an absent threshold disables its rule."""

    epoch_max_ms: Optional[int] = None
    message_max_ms: Optional[int] = None
    operator_max_ms: Optional[int] = None
    progress_max_ms: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("epoch_max_ms", "message_max_ms", "operator_max_ms",
                     "progress_max_ms"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")

    def any_temporal(self) -> bool:
        return any(
            v is not None
            for v in (self.epoch_max_ms, self.message_max_ms,
                      self.operator_max_ms, self.progress_max_ms)
        )


class InvariantViolation(NamedTuple):
    """One alert; edge identity is the offending edge's source node."""

    rule: Rule
    epoch: int
    duration_ns: int
    source_worker: int
    edge_worker: int
    edge_epoch: int
    edge_nanos: int
    operator_id: Optional[int] = None
    activity_type: Optional[EdgeType] = None

    @property
    def edge_id(self) -> PagNode:
        return PagNode(self.edge_worker, Pair(self.edge_epoch, self.edge_nanos))

    def format_alert(self) -> str:
        parts = [
            f"VIOLATION rule={self.rule.value}",
            f"epoch={self.epoch}",
            f"worker={self.source_worker}",
            f"duration_ns={self.duration_ns}",
            f"edge={self.edge_worker}@({self.edge_epoch},{self.edge_nanos})",
        ]
        if self.operator_id is not None:
            parts.append(f"operator={self.operator_id}")
        if self.activity_type is not None:
            parts.append(f"type={self.activity_type.wire_name}")
        return " ".join(parts)


def _ns(ms: int) -> int:
    return ms * 1_000_000


def check_invariants(
    epoch: int,
    edges: Sequence[PagEdge],
    progress_records: Sequence[LogRecord],
    cfg: InvariantConfig,
    workers: Optional[Set[int]] = None,
) -> List[InvariantViolation]:
    """Evaluate all enabled rules over one closed epoch.

    `workers` is the set of workers known to participate; derived from the
    edges and progress records when not given. The non-temporal
    progress-presence rule is always active on multi-worker epochs.
    Thresholds are strict: a duration equal to the ceiling passes.
    """
    out: List[InvariantViolation] = []
    if workers is None:
        workers = {e.src_worker for e in edges} | {e.dst_worker for e in edges}
        workers |= {r.worker for r in progress_records}

    if cfg.message_max_ms is not None:
        limit = _ns(cfg.message_max_ms)
        for e in edges:
            if e.edge_type in REMOTE_TYPES and e.duration_ns > limit:
                out.append(
                    InvariantViolation(
                        Rule.MESSAGE_MAX, epoch, e.duration_ns, e.src_worker,
                        e.src_worker, e.src_epoch, e.src_nanos,
                        activity_type=e.edge_type,
                    )
                )
    if cfg.operator_max_ms is not None:
        limit = _ns(cfg.operator_max_ms)
        for e in edges:
            if e.edge_type == EdgeType.PROCESSING and e.duration_ns > limit:
                out.append(
                    InvariantViolation(
                        Rule.OPERATOR_MAX, epoch, e.duration_ns, e.src_worker,
                        e.src_worker, e.src_epoch, e.src_nanos,
                        operator_id=e.operator_id,
                        activity_type=EdgeType.PROCESSING,
                    )
                )
    if cfg.epoch_max_ms is not None and edges:
        limit = _ns(cfg.epoch_max_ms)
        lo = min(min(e.src_nanos, e.dst_nanos) for e in edges)
        hi = max(max(e.src_nanos, e.dst_nanos) for e in edges)
        hi_worker = max(
            (e.dst_nanos, e.dst_worker) for e in edges
        )[1]
        if hi - lo > limit:
            out.append(
                InvariantViolation(
                    Rule.EPOCH_MAX, epoch, hi - lo, hi_worker,
                    hi_worker, epoch, hi,
                )
            )
    if cfg.progress_max_ms is not None:
        limit = _ns(cfg.progress_max_ms)
        per_dst: Dict[int, List[PagEdge]] = {}
        for e in edges:
            if e.edge_type == EdgeType.CONTROL_MESSAGE:
                per_dst.setdefault(e.dst_worker, []).append(e)
        for dst in sorted(per_dst):
            chain = sorted(per_dst[dst], key=lambda e: e.src_nanos)
            for prev, cur in zip(chain, chain[1:]):
                gap = cur.src_nanos - prev.src_nanos
                if gap > limit:
                    out.append(
                        InvariantViolation(
                            Rule.PROGRESS_MAX, epoch, gap, cur.src_worker,
                            cur.src_worker, cur.src_epoch, cur.src_nanos,
                            activity_type=EdgeType.CONTROL_MESSAGE,
                        )
                    )
    if len(workers) >= 2:
        with_progress = {
            r.worker for r in progress_records
            if r.activity == ActivityKind.CONTROL_SENT and r.epoch == epoch
        }
        for w in sorted(workers - with_progress):
            out.append(
                InvariantViolation(
                    Rule.PROGRESS_ABSENT, epoch, 0, w, w, epoch, 0,
                )
            )
    return out


class HopEdge(NamedTuple):
    """An edge reached by the backward traversal, tagged with its minimal depth."""

    hop: int
    edge: PagEdge


def _node_key(worker: int, nanos: int) -> Tuple[int, int]:
    return (worker, nanos)


def khops(edges: Sequence[PagEdge], k: int) -> List[HopEdge]:
    """Backward traversal from waiting-activity ends, up to depth k.

    Hop 1 seeds, for each waiting edge w: remote edges into w's endpoints;
    processing edges starting exactly at w's end, along with remote data
    edges into either endpoint of such a processing edge (data belonging
    to a wait only surfaces in the following processing activity). Local
    edges other than those processing edges never seed: the remaining
    local edges are the waits themselves. Every later hop joins the newest
    frontier's source nodes against all edges' destination nodes.
    """
    if k <= 0:
        return []
    waits = [e for e in edges if e.edge_type == EdgeType.WAITING]
    if not waits:
        return []
    by_dst: Dict[Tuple[int, int], List[PagEdge]] = {}
    remote_by_dst: Dict[Tuple[int, int], List[PagEdge]] = {}
    data_by_dst: Dict[Tuple[int, int], List[PagEdge]] = {}
    proc_by_src: Dict[Tuple[int, int], List[PagEdge]] = {}
    for e in edges:
        dst = _node_key(e.dst_worker, e.dst_nanos)
        by_dst.setdefault(dst, []).append(e)
        if e.edge_type in REMOTE_TYPES:
            remote_by_dst.setdefault(dst, []).append(e)
        if e.edge_type == EdgeType.DATA_MESSAGE:
            data_by_dst.setdefault(dst, []).append(e)
        if e.edge_type == EdgeType.PROCESSING:
            proc_by_src.setdefault(
                _node_key(e.src_worker, e.src_nanos), []
            ).append(e)

    seeds: Set[PagEdge] = set()
    for w in waits:
        w_dst = _node_key(w.dst_worker, w.dst_nanos)
        w_src = _node_key(w.src_worker, w.src_nanos)
        seeds.update(remote_by_dst.get(w_dst, ()))
        for p in proc_by_src.get(w_dst, ()):
            seeds.add(p)
            seeds.update(data_by_dst.get(_node_key(p.src_worker, p.src_nanos), ()))
            seeds.update(data_by_dst.get(_node_key(p.dst_worker, p.dst_nanos), ()))
        seeds.update(remote_by_dst.get(w_src, ()))

    depth: Dict[PagEdge, int] = {e: 1 for e in seeds}
    frontier = seeds
    for hop in range(2, k + 1):
        nxt: Set[PagEdge] = set()
        for e in frontier:
            for f in by_dst.get(_node_key(e.src_worker, e.src_nanos), ()):
                if f not in depth:
                    nxt.add(f)
        if not nxt:
            break
        for f in nxt:
            depth[f] = hop
        frontier = nxt
    return sorted(HopEdge(h, e) for e, h in depth.items())


class HopWeight(NamedTuple):
    """Per (hop, activity type): plain count and duration-weighted total."""

    hop: int
    activity_type: EdgeType
    count: int
    total_duration_ns: int


def weight_hops(hops: Iterable[HopEdge]) -> List[HopWeight]:
    acc: Dict[Tuple[int, EdgeType], List[int]] = {}
    for h in hops:
        key = (h.hop, h.edge.edge_type)
        cell = acc.get(key)
        if cell is None:
            acc[key] = [1, h.edge.duration_ns]
        else:
            cell[0] += 1
            cell[1] += h.edge.duration_ns
    return [
        HopWeight(hop, ty, c, d) for (hop, ty), (c, d) in sorted(acc.items())
    ]
