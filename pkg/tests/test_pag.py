"""PAG construction: classification hand-traces, joins, structural oracles."""

import random

import pytest

from pagprof.adapter import filter_events
from pagprof.ingest import blacklist_from_events, peel_ops, to_log_records
from pagprof.model import ActivityKind, LogRecord
from pagprof.pag import (
    LOCAL_TYPES,
    AmbiguousMatch,
    EdgeType,
    build_control_edges,
    build_data_edges,
    build_local_edges,
    build_pag,
)
from pagprof.simulator import simulate

from .test_simulator import random_contract_config, skew_config, small_config


def rec(activity, nanos, seq, worker=0, epoch=0, **kw):
    return LogRecord(epoch=epoch, nanos=nanos, worker=worker, activity=activity,
                     seq_no=seq, **kw)


def timeline(*specs):
    """Build an ordered single-worker timeline from (activity, kwargs)."""
    out = []
    for i, (activity, kw) in enumerate(specs):
        out.append(rec(activity, nanos=10 * (i + 1), seq=i, **kw))
    return out


def test_processing_interval_with_data_receive():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=5)),
        (ActivityKind.DATA_RECEIVED, dict(channel_id=1, msg_seq=0,
                                          remote_worker=1, record_count=10)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=5, record_count=10)),
    )
    edges = build_local_edges(records)
    assert [e.edge_type for e in edges] == [EdgeType.PROCESSING, EdgeType.PROCESSING]
    assert all(e.operator_id == 5 for e in edges)
    # the enclosed receive's records land on the edge that ends at it
    assert [e.record_count for e in edges] == [10, 0]


def test_spinning_interval():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=3)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=3, record_count=0)),
    )
    (edge,) = build_local_edges(records)
    assert edge.edge_type == EdgeType.SPINNING
    assert edge.operator_id == 3


def test_schedule_end_with_records_is_processing():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=3)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=3, record_count=40)),
    )
    (edge,) = build_local_edges(records)
    assert edge.edge_type == EdgeType.PROCESSING
    assert edge.record_count == 0  # no enclosed data records


def test_gap_ending_in_receive_is_waiting():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=1)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=1)),
        (ActivityKind.DATA_RECEIVED, dict(channel_id=2, msg_seq=0, remote_worker=1)),
    )
    edges = build_local_edges(records)
    assert edges[1].edge_type == EdgeType.WAITING
    assert edges[1].operator_id is None


def test_gap_ending_in_send_is_busy():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=1)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=1)),
        (ActivityKind.DATA_SENT, dict(channel_id=2, msg_seq=0, remote_worker=1)),
        (ActivityKind.CONTROL_RECEIVED, dict(channel_id=9, msg_seq=0, remote_worker=1)),
    )
    edges = build_local_edges(records)
    assert edges[1].edge_type == EdgeType.BUSY
    assert edges[2].edge_type == EdgeType.WAITING


def test_zero_or_one_record_no_edges():
    assert build_local_edges([]) == []
    assert build_local_edges(timeline(
        (ActivityKind.CONTROL_SENT, dict(channel_id=9, msg_seq=0)),
    )) == []


def test_unordered_input_rejected():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=1)),
        (ActivityKind.SCHEDULE_END, dict(operator_id=1)),
    )
    records = [records[1], records[0]]
    with pytest.raises(ValueError, match="out of order"):
        build_local_edges(records)


def test_mixed_worker_rejected():
    records = [
        rec(ActivityKind.CONTROL_SENT, 10, 0, worker=0, channel_id=9, msg_seq=0),
        rec(ActivityKind.CONTROL_SENT, 20, 1, worker=1, channel_id=9, msg_seq=0),
    ]
    with pytest.raises(ValueError, match="single"):
        build_local_edges(records)


def test_dangling_schedule_start_tolerated():
    records = timeline(
        (ActivityKind.SCHEDULE_START, dict(operator_id=1)),
        (ActivityKind.DATA_RECEIVED, dict(channel_id=1, msg_seq=0,
                                          remote_worker=1, record_count=5)),
    )
    (edge,) = build_local_edges(records)
    assert edge.edge_type == EdgeType.PROCESSING


def test_data_edge_direct_match():
    sent = rec(ActivityKind.DATA_SENT, 10, 0, worker=0, channel_id=1,
               msg_seq=7, remote_worker=1, record_count=500)
    recv = rec(ActivityKind.DATA_RECEIVED, 30, 0, worker=1, channel_id=1,
               msg_seq=7, remote_worker=0, record_count=500)
    edges, unmatched = build_data_edges([sent], [recv])
    assert unmatched == []
    (edge,) = edges
    assert (edge.src_worker, edge.dst_worker) == (0, 1)
    assert edge.edge_type == EdgeType.DATA_MESSAGE
    assert edge.record_count == 500
    assert edge.duration_ns == 20


def test_data_edges_no_receives_all_unmatched():
    sent = rec(ActivityKind.DATA_SENT, 10, 0, worker=0, channel_id=1,
               msg_seq=7, remote_worker=1)
    edges, unmatched = build_data_edges([sent], [])
    assert edges == []
    assert unmatched == [sent]


def test_data_edges_duplicate_key_ambiguous():
    a = rec(ActivityKind.DATA_SENT, 10, 0, worker=0, channel_id=1, msg_seq=7,
            remote_worker=1)
    b = rec(ActivityKind.DATA_SENT, 20, 1, worker=0, channel_id=1, msg_seq=7,
            remote_worker=2)
    with pytest.raises(AmbiguousMatch):
        build_data_edges([a, b], [])


def test_control_broadcast_fan_out():
    sent = rec(ActivityKind.CONTROL_SENT, 10, 0, worker=0, channel_id=9, msg_seq=4)
    recvs = [
        rec(ActivityKind.CONTROL_RECEIVED, 30 + w, 0, worker=w, channel_id=9,
            msg_seq=4, remote_worker=0)
        for w in (1, 2, 3)
    ]
    edges, unmatched = build_control_edges([sent], recvs)
    assert unmatched == []
    assert len(edges) == 3
    assert len({(e.src_worker, e.src_nanos) for e in edges}) == 1  # shared src
    assert {e.dst_worker for e in edges} == {1, 2, 3}


def test_control_send_without_receivers():
    sent = rec(ActivityKind.CONTROL_SENT, 10, 0, worker=0, channel_id=9, msg_seq=4)
    edges, unmatched = build_control_edges([sent], [])
    assert edges == []


def records_for_epoch(streams, epoch):
    """Filtered, peeled, normalized records of one epoch (test helper)."""
    all_events = [ev for s in streams for ev in s]
    bl = blacklist_from_events(all_events)
    per_worker = []
    for s in streams:
        peeled = peel_ops(filter_events(s), bl)
        per_worker.extend(to_log_records(peeled))
    return [r for r in per_worker if r.epoch == epoch]


def assert_pag_structure(records, edges):
    """Shared structural assertions: path coverage, counts, durations."""
    by_worker = {}
    for r in records:
        by_worker.setdefault(r.worker, []).append(r)
    local = [e for e in edges if e.edge_type in LOCAL_TYPES]
    data = [e for e in edges if e.edge_type == EdgeType.DATA_MESSAGE]
    ctrl = [e for e in edges if e.edge_type == EdgeType.CONTROL_MESSAGE]
    # (ii) edge count identity
    sends = [r for r in records if r.activity == ActivityKind.CONTROL_SENT]
    recvs = [r for r in records if r.activity == ActivityKind.CONTROL_RECEIVED]
    matched_data = len(data)
    assert len(local) == sum(max(len(rs) - 1, 0) for rs in by_worker.values())
    fan_out = 0
    sent_keys = {(s.channel_id, s.worker, s.msg_seq) for s in sends}
    for r in recvs:
        if (r.channel_id, r.remote_worker, r.msg_seq) in sent_keys:
            fan_out += 1
    assert len(ctrl) == fan_out
    # (i) per-worker local path coverage: interior nodes have degree 1/1
    for w, rs in by_worker.items():
        rs = sorted(rs, key=lambda r: r.seq_no)
        worker_local = sorted(
            ((e.src_nanos, e.dst_nanos) for e in local if e.src_worker == w)
        )
        assert len(worker_local) == max(len(rs) - 1, 0)
        for (a_src, a_dst), (b_src, b_dst) in zip(worker_local, worker_local[1:]):
            assert a_dst == b_src  # consecutive edges share the interior node
        if worker_local:
            assert worker_local[0][0] == rs[0].nanos
            assert worker_local[-1][1] == rs[-1].nanos
    # (iii) zero cross-epoch edges and (iv) nonnegative durations
    for e in edges:
        assert e.src_epoch == e.dst_epoch
        assert e.duration_ns >= 0
        if e.edge_type in LOCAL_TYPES:
            assert e.src_worker == e.dst_worker
        else:
            assert e.src_worker != e.dst_worker
    # no dangling remote endpoints: message records are path nodes
    record_nodes = {(r.worker, r.nanos) for r in records}
    for e in edges:
        if e.edge_type not in LOCAL_TYPES:
            assert (e.src_worker, e.src_nanos) in record_nodes
            assert (e.dst_worker, e.dst_nanos) in record_nodes


def test_pag_structure_on_simulated_epochs():
    rng = random.Random(0x5151)
    for _ in range(12):
        cfg = random_contract_config(rng)
        streams = simulate(cfg)
        for epoch in range(cfg.epochs):
            records = records_for_epoch(streams, epoch)
            result = build_pag(records)
            assert_pag_structure(records, result.edges)


def test_pag_single_worker_no_messages():
    cfg = small_config(workers=1, channels=[], epochs=1,
                       records_per_worker_per_epoch=50)
    streams = simulate(cfg)
    records = records_for_epoch(streams, 0)
    result = build_pag(records)
    assert len(result.edges) == len(records) - 1
    assert all(e.edge_type in LOCAL_TYPES for e in result.edges)


def test_pag_skew_epoch_data_edges_into_worker_zero():
    streams = simulate(skew_config())
    records = records_for_epoch(streams, 3)
    result = build_pag(records)
    data = [e for e in result.edges if e.edge_type == EdgeType.DATA_MESSAGE]
    assert data
    assert all(e.dst_worker == 0 for e in data)
    assert {e.src_worker for e in data} == {1, 2, 3}


def test_pag_deterministic():
    streams = simulate(small_config())
    records = records_for_epoch(streams, 1)
    a = build_pag(records)
    b = build_pag(list(records))
    assert a.edges == b.edges
    assert a.unmatched == b.unmatched


def test_pag_waiting_edges_exist_in_skew_epochs():
    streams = simulate(skew_config())
    records = records_for_epoch(streams, 2)
    edges = build_pag(records).edges
    waits = [e for e in edges if e.edge_type == EdgeType.WAITING]
    assert waits
    # senders show the long waits (blocked on the overloaded worker)
    long_waits = [e for e in waits if e.duration_ns > 1_000_000]
    assert long_waits
    assert {e.src_worker for e in long_waits} <= {1, 2, 3}
