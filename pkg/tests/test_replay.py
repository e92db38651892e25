"""Replay: bounded epochs in flight, frontier closure, order preservation."""

import itertools

import pytest

from pagprof.adapter import filter_events, write_offline
from pagprof.model import EventKind, Pair, RawEvent
from pagprof.replay import (
    FrameReader,
    ReplayError,
    ReplaySource,
    open_offline,
    replay_epochs,
)
from pagprof.simulator import simulate
from pagprof.wire import encode_batch

from .test_simulator import small_config

SETUP_KINDS = (EventKind.OPERATES, EventKind.CHANNELS)


class ListReader(FrameReader):
    """In-memory reader over pre-encoded frames."""

    def __init__(self, frames, name="list"):
        self.name = name
        self._frames = [f[4:] for f in frames]  # strip length prefix
        self._i = 0

    def next_payload(self):
        if self._i >= len(self._frames):
            return None
        self._i += 1
        return self._frames[self._i - 1]


def marker(epoch):
    return encode_batch(epoch, [])


def log_frame(epoch, worker, nanos_base, n=3):
    events = [
        RawEvent(Pair(epoch, nanos_base + k), worker, EventKind.SCHEDULE_START,
                 operator_id=1)
        for k in range(n)
    ]
    return encode_batch(epoch, events)


def terminate(epoch, worker, nanos):
    return encode_batch(
        epoch, [RawEvent(Pair(epoch, nanos), worker, EventKind.TERMINATE)]
    )


def test_single_empty_stream_closes_immediately():
    src = ReplaySource([ListReader([terminate(0, 0, 1)])], source_peers=1)
    steps = []
    while (step := src.replay_step()) is not None:
        steps.append(step)
    assert all(not s.events for s in steps)
    assert src.frontier == Pair(0, 0)


def test_epoch_exclusivity_under_bound_one():
    readers = [
        ListReader(
            [log_frame(e, w, 1000 * e + w) for e in range(4)]
            + [terminate(4, w, 10_000)],
            name=f"r{w}",
        )
        for w in range(2)
    ]
    # interleave markers: each reader sends log e, marker e, log e+1, ...
    readers = [
        ListReader(
            list(
                itertools.chain.from_iterable(
                    (log_frame(e, w, 1000 * e + w), marker(e)) for e in range(4)
                )
            )
            + [terminate(4, w, 10_000)],
            name=f"r{w}",
        )
        for w in range(2)
    ]
    src = ReplaySource(readers, source_peers=2, max_epochs_in_flight=1)
    seen_epochs = []
    closed = []
    while (step := src.replay_step()) is not None:
        if step.events:
            seen_epochs.append(step.epoch)
            # no event of epoch e+1 surfaces before epoch e closed
            assert step.epoch == (closed[-1] + 1 if closed else 0)
        closed.extend(step.closed)
    assert closed == [0, 1, 2, 3]
    assert seen_epochs == [0, 0, 1, 1, 2, 2, 3, 3]


def test_frontier_blocked_until_all_markers():
    r0 = ListReader([marker(0), terminate(1, 0, 99)], name="fast")
    r1 = ListReader([log_frame(0, 1, 10), marker(0), terminate(1, 1, 99)], name="slow")
    src = ReplaySource([r0, r1], source_peers=2)
    fronts = []
    while (step := src.replay_step()) is not None:
        fronts.append(step.frontier)
    # nondecreasing frontier, final closure
    assert all(a <= b for a, b in zip(fronts, fronts[1:]))
    assert fronts[-1] >= Pair(1, 0)


def test_marker_arrival_permutations_same_frontier():
    # 3 readers deliver markers for epochs 0..2 in any interleaving
    def run(order):
        frames = {w: [marker(e) for e in range(3)] for w in range(3)}
        readers = [ListReader(frames[w], name=f"r{w}") for w in range(3)]
        src = ReplaySource(readers, source_peers=3, max_epochs_in_flight=3)
        while src.replay_step() is not None:
            pass
        return src.frontier

    results = {run(p) for p in itertools.permutations(range(3))}
    assert results == {Pair(3, 0)}


def test_premature_eof_closes_open_epochs():
    r0 = ListReader([log_frame(0, 0, 10)], name="truncated")  # no marker, no terminate
    src = ReplaySource([r0], source_peers=1)
    closed = []
    while (step := src.replay_step()) is not None:
        closed.extend(step.closed)
    assert closed == [0]
    assert src.frontier >= Pair(1, 0)


def test_bounded_epochs_in_flight_two():
    readers = [
        ListReader(
            list(
                itertools.chain.from_iterable(
                    (log_frame(e, 0, 100 * e), marker(e)) for e in range(6)
                )
            ),
            name="r0",
        )
    ]
    src = ReplaySource(readers, source_peers=1, max_epochs_in_flight=2)
    max_open = 0
    while (step := src.replay_step()) is not None:
        max_open = max(max_open, len(src._open))
    assert max_open <= 2


def test_reader_count_mismatch():
    with pytest.raises(ReplayError, match="source_peers"):
        ReplaySource([ListReader([])], source_peers=2)


def test_close_epoch_before_markers_guarded():
    r0 = ListReader([marker(0)], name="r0")
    r1 = ListReader([log_frame(0, 1, 10)], name="r1")
    src = ReplaySource([r0, r1], source_peers=2)
    src.replay_step()  # admits one frame; r1 never delivers its marker
    with pytest.raises(ReplayError, match="before all markers"):
        src.close_epoch(1)


@pytest.mark.parametrize("lbf", [1, 2])
def test_reconstruction_from_offline_files(tmp_path, lbf):
    cfg = small_config(epochs=4)
    streams = simulate(cfg)
    write_offline(streams, lbf=lbf, dir_path=tmp_path)
    readers = open_offline(tmp_path, cfg.workers * lbf)
    src = ReplaySource(readers, source_peers=cfg.workers * lbf)
    replayed = {w: [] for w in range(cfg.workers)}
    epochs_closed = []
    for epoch, events in replay_epochs(src):
        epochs_closed.append(epoch)
        for ev in events:
            if ev.kind not in SETUP_KINDS:
                replayed[ev.local_worker].append(ev)
    assert epochs_closed == list(range(cfg.epochs))
    for w, stream in enumerate(streams):
        expected = [
            ev
            for ev in filter_events(stream)
            if ev.kind not in SETUP_KINDS + (EventKind.TERMINATE,)
        ]
        got = sorted(replayed[w], key=lambda ev: ev.at.nanos)
        assert got == expected


def test_open_offline_wrong_peer_count(tmp_path):
    cfg = small_config()
    write_offline(simulate(cfg), lbf=1, dir_path=tmp_path)
    with pytest.raises(ReplayError, match="source-peers"):
        open_offline(tmp_path, cfg.workers * 2)
