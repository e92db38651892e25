"""Replays workers x lbf framed event streams into the profiler.

A ReplaySource merges its readers' frames into an epoch-ordered flow with
an explicit frontier. One step admits at most one frame and then yields,
so downstream stages interleave instead of degenerating into batch mode.
Epochs in flight are bounded: a frame for a new epoch is held back while
the bound is reached, and an epoch closes only once every reader has
delivered its zero-event marker frame for it.

End-of-stream handling: a Terminate-bearing frame (or a clean EOF) retires
the reader and stands in for all of its outstanding markers; a truncated
stream surfaces a decode error naming the reader.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, List, Optional, Tuple

from .model import EventKind, Pair, RawEvent
from .wire import HEADER_SIZE, MalformedFrame, decode_payload, read_frame


class ReplayError(RuntimeError):
    """Decode or protocol failure, carrying the reader's identity."""


class FrameReader:
    """One framed byte stream (file or socket)."""

    name: str

    def next_payload(self) -> Optional[bytes]:
        """Next frame payload, or None at end of stream."""
        raise NotImplementedError

    def close(self) -> None:
        pass


class FileFrameReader(FrameReader):
    def __init__(self, path: str | Path):
        self.name = str(path)
        self._f: Optional[IO[bytes]] = open(path, "rb")

    def next_payload(self) -> Optional[bytes]:
        if self._f is None:
            return None
        payload = read_frame(self._f)
        if payload is None:
            self.close()
        return payload

    def close(self) -> None:
        if self._f is not None:
            self._f.close()
            self._f = None


class SocketFrameReader(FrameReader):
    """Reads frames off an accepted connection on a feeder thread.

    The feeder keeps the socket drained so a blocked peer only ever waits
    on TCP back-pressure, never on the merge order chosen by replay.
    """

    def __init__(self, conn: socket.socket, name: str):
        self.name = name
        self._queue: "queue.Queue[object]" = queue.Queue()
        self._conn = conn
        self._thread = threading.Thread(target=self._feed, name=f"reader-{name}", daemon=True)
        self._thread.start()

    def _feed(self) -> None:
        f = self._conn.makefile("rb")
        try:
            while True:
                payload = read_frame(f)
                self._queue.put(payload)
                if payload is None:
                    return
        except MalformedFrame as exc:
            self._queue.put(exc)
        finally:
            f.close()

    def next_payload(self) -> Optional[bytes]:
        item = self._queue.get()
        if isinstance(item, MalformedFrame):
            raise item
        return item

    def close(self) -> None:
        self._conn.close()


def open_offline(dir_path: str | Path, source_peers: int) -> List[FrameReader]:
    """Open the worker_<w>_writer_<i>.st2 files under a trace directory."""
    directory = Path(dir_path)
    paths = sorted(directory.glob("worker_*_writer_*.st2"))
    if len(paths) != source_peers:
        raise ReplayError(
            f"{directory} holds {len(paths)} streams, --source-peers says {source_peers}"
        )
    return [FileFrameReader(p) for p in paths]


def open_online(interface: str, port: int, source_peers: int) -> List[FrameReader]:
    """Listen on interface:port and accept exactly source_peers connections."""
    server = socket.create_server((interface, port), backlog=source_peers)
    readers: List[FrameReader] = []
    try:
        for i in range(source_peers):
            conn, addr = server.accept()
            readers.append(SocketFrameReader(conn, name=f"conn-{i}-{addr[0]}:{addr[1]}"))
    finally:
        server.close()
    return readers


@dataclass
class StepResult:
    """One admitted frame: its epoch, decoded events, any epochs closed."""

    epoch: int
    events: List[RawEvent]
    closed: List[int]
    frontier: Pair


@dataclass
class ReplaySource:
    readers: List[FrameReader]
    source_peers: int
    max_epochs_in_flight: int = 1

    _pending: List[Optional[bytes]] = field(default_factory=list, repr=False)
    _done: List[bool] = field(default_factory=list, repr=False)
    _markers: Dict[int, set] = field(default_factory=dict, repr=False)
    _open: set = field(default_factory=set, repr=False)
    _closed_up_to: int = 0

    def __post_init__(self) -> None:
        if len(self.readers) != self.source_peers:
            raise ReplayError(
                f"{len(self.readers)} readers opened, source_peers says {self.source_peers}"
            )
        if self.max_epochs_in_flight < 1:
            raise ReplayError("max_epochs_in_flight must be >= 1")
        self._pending = [None] * len(self.readers)
        self._done = [False] * len(self.readers)

    @property
    def frontier(self) -> Pair:
        return Pair(self._closed_up_to, 0)

    def _fill(self, i: int) -> None:
        if self._done[i] or self._pending[i] is not None:
            return
        try:
            payload = self.readers[i].next_payload()
        except MalformedFrame as exc:
            raise ReplayError(f"reader {self.readers[i].name}: {exc}") from exc
        if payload is None:
            self._retire(i)
        else:
            self._pending[i] = payload

    def _retire(self, i: int) -> None:
        """Reader ended: it counts as having delivered every open marker."""
        self._done[i] = True
        self._pending[i] = None
        self.readers[i].close()

    def _peek(self, payload: bytes) -> Tuple[int, int, int]:
        """(epoch, event_count, first_nanos) without full decode."""
        epoch, count = struct.unpack_from("<QI", payload, 0)
        nanos = 0
        if count:
            (nanos,) = struct.unpack_from("<Q", payload, HEADER_SIZE + 1)
        return epoch, count, nanos

    def _admissible(self, epoch: int) -> bool:
        if epoch in self._open:
            return True
        return len(self._open) < self.max_epochs_in_flight and epoch >= self._closed_up_to

    def _marker_complete(self, epoch: int) -> bool:
        seen = self._markers.get(epoch, set())
        return all(self._done[i] or i in seen for i in range(len(self.readers)))

    def close_epoch(self, epoch: int) -> Pair:
        """Record closure of `epoch`; callable once its markers are complete."""
        if not self._marker_complete(epoch):
            raise ReplayError(f"close_epoch({epoch}) before all markers arrived")
        self._open.discard(epoch)
        self._markers.pop(epoch, None)
        if epoch >= self._closed_up_to:
            self._closed_up_to = epoch + 1
        return self.frontier

    def _drain_closures(self, newly: List[int]) -> None:
        # epochs close in order; markers for later epochs may already be in
        while True:
            e = self._closed_up_to
            if (e in self._open or e in self._markers) and self._marker_complete(e):
                self.close_epoch(e)
                newly.append(e)
            else:
                return

    def step_raw(self) -> Optional[Tuple[int, Optional[bytes], List[int]]]:
        """Admit at most one frame without decoding its events.

        Returns (epoch, payload-or-None, closed) where payload is None for
        pure protocol steps (markers, terminates, end-of-streams), or None
        itself when every reader has ended. Frames are merged in (epoch,
        marker-last, nanos, reader) order among admissible candidates;
        frames beyond the epochs-in-flight bound stay pending.
        """
        for i in range(len(self.readers)):
            self._fill(i)
        closed: List[int] = []
        if all(self._done):
            # end of all streams: anything still open closes now
            self._drain_closures(closed)
            for e in sorted(self._open):
                self._open.discard(e)
                self._markers.pop(e, None)
                self._closed_up_to = max(self._closed_up_to, e + 1)
                closed.append(e)
            if closed:
                return (closed[-1], None, closed)
            return None
        best = None
        for i, payload in enumerate(self._pending):
            if payload is None:
                continue
            epoch, count, nanos = self._peek(payload)
            if not self._admissible(epoch):
                continue
            key = (epoch, count == 0, nanos, i)
            if best is None or key < best[0]:
                best = (key, i, epoch, count)
        if best is None:
            # every pending frame is beyond the bound: close what we can
            self._drain_closures(closed)
            if not closed:
                raise ReplayError(
                    "replay stalled: epochs in flight exhausted with no closable epoch"
                )
            return (closed[-1], None, closed)
        _, i, epoch, count = best
        payload = self._pending[i]
        self._pending[i] = None
        assert payload is not None
        if count == 0:
            self._markers.setdefault(epoch, set()).add(i)
            payload = None
        elif count == 1 and payload[HEADER_SIZE] == int(EventKind.TERMINATE):
            # stream end: consume the terminate, retire the reader
            self._retire(i)
            payload = None
        else:
            self._open.add(epoch)
        self._drain_closures(closed)
        return (epoch, payload, closed)

    def replay_step(self) -> Optional[StepResult]:
        """Admit at most one frame, then yield control.

        Returns None when every reader has ended; otherwise the decoded
        events of the admitted frame (empty for protocol-only steps) plus
        any epochs the step closed.
        """
        raw = self.step_raw()
        if raw is None:
            return None
        epoch, payload, closed = raw
        events: List[RawEvent] = []
        if payload is not None:
            try:
                _, events = decode_payload(payload)
            except MalformedFrame as exc:
                raise ReplayError(f"frame for epoch {epoch}: {exc}") from exc
        return StepResult(epoch, events, closed, self.frontier)

    def close(self) -> None:
        for r in self.readers:
            r.close()


def replay_step(src: ReplaySource) -> Optional[StepResult]:
    """Module-level convenience mirroring ReplaySource.replay_step."""
    return src.replay_step()


def replay_epochs(src: ReplaySource):
    """Iterate (epoch, events) with events grouped per closed epoch.

    Events are delivered in admitted order; an epoch's list is final when
    yielded. Convenience driver for single-process consumers.
    """
    buffers: Dict[int, List[RawEvent]] = {}
    while True:
        step = src.replay_step()
        if step is None:
            return
        if step.events:
            buffers.setdefault(step.epoch, []).extend(step.events)
        for e in step.closed:
            yield e, buffers.pop(e, [])
