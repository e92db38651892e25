"""Framed little-endian binary encoding of event batches.

Stream layout (files and sockets identical): repeated frames, each
``[u32 payload_length][payload]``. A payload is
``[u64 epoch][u32 event_count][records...]``. Every record starts with a
fixed 49-byte body::

    [u8 kind tag][u64 nanos][u32 local_worker][u64 operator_id | sentinel]
    [u64 channel_id | sentinel][u64 seq_no][u32 remote_worker | sentinel]
    [u64 record_count]

Operates records append ``[u8 addr_len][addr_len x u32]``; Channels records
append ``[u64 src_operator][u64 dst_operator]``. Absent optional fields are
the all-ones sentinel. Files use the ``.st2`` extension, one per writer.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .model import NO_U32, NO_U64, EventKind, Pair, RawEvent

_LEN = struct.Struct("<I")
_HEADER = struct.Struct("<QI")
_RECORD = struct.Struct("<BQIQQQIQ")
_ADDR_LEN = struct.Struct("<B")
_CHANNELS_EXTRA = struct.Struct("<QQ")

RECORD_SIZE = _RECORD.size  # 49
HEADER_SIZE = _HEADER.size  # 12

_VALID_TAGS = frozenset(int(k) for k in EventKind)

#: numpy view of the fixed record body, used by the bulk decode fast path.
RECORD_DTYPE = np.dtype(
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
assert RECORD_DTYPE.itemsize == RECORD_SIZE


class MalformedFrame(ValueError):
    """A frame violated the wire layout. Carries byte offset and cause."""

    def __init__(self, offset: int, cause: str):
        super().__init__(f"malformed frame at byte {offset}: {cause}")
        self.offset = offset
        self.cause = cause


def _opt64(value: Optional[int]) -> int:
    return NO_U64 if value is None else value


def _opt32(value: Optional[int]) -> int:
    return NO_U32 if value is None else value


def encode_batch(epoch: int, events: Sequence[RawEvent]) -> bytes:
    """Encode one batch of same-epoch events into a single frame.

    Raises ValueError if any event's Pair.epoch differs from `epoch`.
    """
    parts: List[bytes] = [_HEADER.pack(epoch, len(events))]
    for ev in events:
        if ev.at.epoch != epoch:
            raise ValueError(
                f"event epoch {ev.at.epoch} does not match batch epoch {epoch}"
            )
        parts.append(
            _RECORD.pack(
                int(ev.kind),
                ev.at.nanos,
                ev.local_worker,
                _opt64(ev.operator_id),
                _opt64(ev.channel_id),
                ev.seq_no,
                _opt32(ev.remote_worker),
                ev.record_count,
            )
        )
        if ev.kind == EventKind.OPERATES:
            addr = ev.operator_address
            if not addr:
                raise ValueError("Operates event without an operator_address")
            parts.append(_ADDR_LEN.pack(len(addr)))
            parts.append(struct.pack(f"<{len(addr)}I", *addr))
        elif ev.kind == EventKind.CHANNELS:
            parts.append(
                _CHANNELS_EXTRA.pack(_opt64(ev.src_operator), _opt64(ev.dst_operator))
            )
    payload = b"".join(parts)
    return _LEN.pack(len(payload)) + payload


def decode_batch(frame: bytes) -> Tuple[int, List[RawEvent]]:
    """Decode one frame (length prefix included); exact inverse of encode_batch."""
    if len(frame) < _LEN.size:
        raise MalformedFrame(0, f"truncated length prefix ({len(frame)} bytes)")
    (payload_len,) = _LEN.unpack_from(frame, 0)
    if len(frame) - _LEN.size != payload_len:
        raise MalformedFrame(
            _LEN.size,
            f"payload length mismatch: header says {payload_len}, "
            f"got {len(frame) - _LEN.size}",
        )
    epoch, events = decode_payload(frame[_LEN.size :], base_offset=_LEN.size)
    return epoch, events


def decode_payload(payload: bytes, base_offset: int = 0) -> Tuple[int, List[RawEvent]]:
    """Decode a frame payload (no length prefix)."""
    if len(payload) < HEADER_SIZE:
        raise MalformedFrame(base_offset, "truncated payload header")
    epoch, count = _HEADER.unpack_from(payload, 0)
    events: List[RawEvent] = []
    off = HEADER_SIZE
    for _ in range(count):
        if off + RECORD_SIZE > len(payload):
            raise MalformedFrame(base_offset + off, "truncated record body")
        tag, nanos, worker, op, chan, seq, remote, rc = _RECORD.unpack_from(
            payload, off
        )
        if tag not in _VALID_TAGS:
            raise MalformedFrame(base_offset + off, f"unknown kind tag {tag}")
        off += RECORD_SIZE
        kind = EventKind(tag)
        address: Optional[Tuple[int, ...]] = None
        src_op: Optional[int] = None
        dst_op: Optional[int] = None
        if kind == EventKind.OPERATES:
            if off + 1 > len(payload):
                raise MalformedFrame(base_offset + off, "truncated address length")
            (alen,) = _ADDR_LEN.unpack_from(payload, off)
            off += 1
            if off + 4 * alen > len(payload):
                raise MalformedFrame(base_offset + off, "truncated address elements")
            address = struct.unpack_from(f"<{alen}I", payload, off)
            off += 4 * alen
        elif kind == EventKind.CHANNELS:
            if off + _CHANNELS_EXTRA.size > len(payload):
                raise MalformedFrame(base_offset + off, "truncated channel endpoints")
            s, d = _CHANNELS_EXTRA.unpack_from(payload, off)
            src_op = None if s == NO_U64 else s
            dst_op = None if d == NO_U64 else d
            off += _CHANNELS_EXTRA.size
        events.append(
            RawEvent(
                at=Pair(epoch, nanos),
                local_worker=worker,
                kind=kind,
                operator_id=None if op == NO_U64 else op,
                operator_address=address,
                channel_id=None if chan == NO_U64 else chan,
                seq_no=seq,
                remote_worker=None if remote == NO_U32 else remote,
                record_count=rc,
                src_operator=src_op,
                dst_operator=dst_op,
            )
        )
    if off != len(payload):
        raise MalformedFrame(
            base_offset + off, f"{len(payload) - off} trailing bytes after last record"
        )
    return epoch, events


def is_fixed_stride(payload: bytes) -> bool:
    """True when every record in the payload is the fixed 49-byte body.

    Holds exactly when the payload length matches header + count * body,
    i.e. the frame contains no Operates/Channels records.
    """
    if len(payload) < HEADER_SIZE:
        return False
    (count,) = struct.unpack_from("<I", payload, 8)
    return len(payload) == HEADER_SIZE + count * RECORD_SIZE


def decode_payload_array(payload: bytes) -> Tuple[int, np.ndarray]:
    """Bulk-decode a fixed-stride payload into a structured array.

    Only valid when is_fixed_stride(payload); callers fall back to
    decode_payload otherwise. Sentinels are left as raw integers.
    """
    (epoch,) = struct.unpack_from("<Q", payload, 0)
    body = np.frombuffer(payload, RECORD_DTYPE, offset=HEADER_SIZE)
    bad = ~np.isin(body["kind"], np.fromiter(_VALID_TAGS, dtype=np.uint8))
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise MalformedFrame(
            HEADER_SIZE + idx * RECORD_SIZE,
            f"unknown kind tag {int(body['kind'][idx])}",
        )
    return epoch, body


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Read one frame's payload from a byte stream.

    Returns None on clean end-of-stream (no bytes available). Raises
    MalformedFrame if the stream ends mid-frame.
    """
    head = stream.read(_LEN.size)
    if not head:
        return None
    if len(head) < _LEN.size:
        raise MalformedFrame(0, "truncated length prefix at end of stream")
    (payload_len,) = _LEN.unpack(head)
    payload = stream.read(payload_len)
    if len(payload) < payload_len:
        raise MalformedFrame(
            _LEN.size, f"stream ended {payload_len - len(payload)} bytes short"
        )
    return payload


def iter_frames(stream: BinaryIO) -> Iterator[Tuple[int, List[RawEvent]]]:
    """Yield (epoch, events) for every frame in a byte stream."""
    while True:
        payload = read_frame(stream)
        if payload is None:
            return
        yield decode_payload(payload)
