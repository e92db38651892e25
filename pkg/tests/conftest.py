"""Shared generators and strategies for the test suite."""

from __future__ import annotations

import random
from typing import List

from hypothesis import strategies as st

from pagprof.model import EventKind, Pair, RawEvent

U64 = 2**64 - 1
U32 = 2**32 - 1

pairs = st.builds(
    Pair,
    epoch=st.integers(min_value=0, max_value=U64),
    nanos=st.integers(min_value=0, max_value=U64),
)


@st.composite
def raw_events(draw, epoch: int | None = None):
    """Arbitrary wire-valid RawEvent; Pair.epoch fixed when given."""
    kind = draw(st.sampled_from(list(EventKind)))
    e = epoch if epoch is not None else draw(st.integers(0, U64))
    nanos = draw(st.integers(0, U64))
    worker = draw(st.integers(0, U32 - 1))
    op = None
    address = None
    chan = None
    seq = draw(st.integers(0, U64))
    remote = None
    rc = draw(st.integers(0, U64))
    src_op = None
    dst_op = None
    if kind in (EventKind.SCHEDULE_START, EventKind.SCHEDULE_END):
        op = draw(st.integers(0, U64 - 1))
    elif kind in (
        EventKind.DATA_SENT,
        EventKind.DATA_RECEIVED,
        EventKind.PROGRESS_SENT,
        EventKind.PROGRESS_RECEIVED,
    ):
        chan = draw(st.integers(0, U64 - 1))
        remote = draw(st.one_of(st.none(), st.integers(0, U32 - 1)))
    elif kind == EventKind.OPERATES:
        op = draw(st.integers(0, U64 - 1))
        address = tuple(
            draw(st.lists(st.integers(0, U32), min_size=1, max_size=6))
        )
    elif kind == EventKind.CHANNELS:
        chan = draw(st.integers(0, U64 - 1))
        src_op = draw(st.integers(0, U64 - 1))
        dst_op = draw(st.integers(0, U64 - 1))
    return RawEvent(
        at=Pair(e, nanos),
        local_worker=worker,
        kind=kind,
        operator_id=op,
        operator_address=address,
        channel_id=chan,
        seq_no=seq,
        remote_worker=remote,
        record_count=rc,
        src_operator=src_op,
        dst_operator=dst_op,
    )


def random_batch(rng: random.Random, epoch: int, size: int) -> List[RawEvent]:
    """Plain-random batch of wire-valid events (non-hypothesis paths)."""
    events = []
    for _ in range(size):
        kind = rng.choice(list(EventKind))
        op = address = chan = remote = src_op = dst_op = None
        if kind in (EventKind.SCHEDULE_START, EventKind.SCHEDULE_END):
            op = rng.randrange(1 << 32)
        elif kind in (
            EventKind.DATA_SENT,
            EventKind.DATA_RECEIVED,
            EventKind.PROGRESS_SENT,
            EventKind.PROGRESS_RECEIVED,
        ):
            chan = rng.randrange(1 << 16)
            remote = rng.randrange(1 << 8) if rng.random() < 0.9 else None
        elif kind == EventKind.OPERATES:
            op = rng.randrange(1 << 32)
            address = tuple(
                rng.randrange(1 << 16) for _ in range(rng.randint(1, 5))
            )
        elif kind == EventKind.CHANNELS:
            chan = rng.randrange(1 << 16)
            src_op = rng.randrange(1 << 32)
            dst_op = rng.randrange(1 << 32)
        events.append(
            RawEvent(
                at=Pair(epoch, rng.randrange(1 << 48)),
                local_worker=rng.randrange(1 << 8),
                kind=kind,
                operator_id=op,
                operator_address=address,
                channel_id=chan,
                seq_no=rng.randrange(1 << 32),
                remote_worker=remote,
                record_count=rng.randrange(1 << 20),
                src_operator=src_op,
                dst_operator=dst_op,
            )
        )
    return events
