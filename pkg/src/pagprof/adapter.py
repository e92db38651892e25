"""Boundary between the source computation and the profiler.

Filters events down to what the activity graph needs, routes batches to
load-balanced writers, and ships them as framed streams to files or TCP
sockets. With a load balance factor (lbf) of k, every source worker owns k
writers; the profiler side must expect workers x lbf streams.

Routing per batch kind: stream-progress markers and the epoch-0 dataflow
setup are broadcast to all of a worker's writers, log batches go to the
single writer `epoch % lbf`, cycling each epoch. Markers are frames with
zero events for the epoch they close; every reader needs them to advance
its frontier.
"""

from __future__ import annotations

import os
import socket
import threading
from enum import Enum
from pathlib import Path
from typing import Dict, List, Sequence, Set, Tuple

from .model import MESSAGE_KINDS, EventKind, RawEvent
from .wire import encode_batch

#: Events per frame; one frame is the replayer's yield granularity.
FRAME_EVENTS = 8192

#: Environment variable consulted for the online endpoint when no explicit
#: address is given.
ADDR_ENV_VAR = "SNAILTRAIL_ADDR"

_SETUP_KINDS = (EventKind.OPERATES, EventKind.CHANNELS)


class BatchKind(Enum):
    PROGRESS = "progress"
    SETUP = "setup"
    LOG = "log"


class AdapterError(RuntimeError):
    """Writer-side failure, carrying worker/writer identity."""


def filter_events(events: Sequence[RawEvent]) -> List[RawEvent]:
    """Drop events irrelevant to graph construction.

    Keeps schedules, cross-worker data/control messages, dataflow setup,
    and the epoch/stream markers; removes worker-local messages. Order is
    preserved.
    """
    out = []
    for ev in events:
        if ev.kind in MESSAGE_KINDS and ev.remote_worker == ev.local_worker:
            continue
        out.append(ev)
    return out


def route_batch(kind: BatchKind, epoch: int, lbf: int) -> Set[int]:
    """Writer indices a batch goes to; see module docstring for the policy."""
    if lbf < 1:
        raise ValueError("load balance factor must be >= 1")
    if kind == BatchKind.SETUP:
        if epoch != 0:
            raise AdapterError(
                f"dataflow setup must precede the stream (got setup at epoch {epoch})"
            )
        return set(range(lbf))
    if kind == BatchKind.PROGRESS:
        return set(range(lbf))
    return {epoch % lbf}


def writer_frames(stream: Sequence[RawEvent], lbf: int) -> List[List[bytes]]:
    """Split one worker's (already filtered) stream into per-writer frames.

    Returns lbf frame lists. Setup is broadcast first, each epoch's log
    events go to their round-robin writer followed by a broadcast marker
    frame, and the Terminate event is broadcast last.
    """
    frames: List[List[bytes]] = [[] for _ in range(lbf)]

    def broadcast(frame: bytes) -> None:
        for sink in frames:
            sink.append(frame)

    setup = [ev for ev in stream if ev.kind in _SETUP_KINDS]
    if setup:
        frame = encode_batch(setup[0].at.epoch, setup)
        for i in route_batch(BatchKind.SETUP, setup[0].at.epoch, lbf):
            frames[i].append(frame)

    by_epoch: Dict[int, List[RawEvent]] = {}
    terminate: List[RawEvent] = []
    for ev in stream:
        if ev.kind in _SETUP_KINDS:
            continue
        if ev.kind == EventKind.TERMINATE:
            terminate.append(ev)
            continue
        by_epoch.setdefault(ev.at.epoch, []).append(ev)

    for epoch in sorted(by_epoch):
        events = by_epoch[epoch]
        (writer,) = route_batch(BatchKind.LOG, epoch, lbf)
        for i in range(0, len(events), FRAME_EVENTS):
            frames[writer].append(encode_batch(epoch, events[i : i + FRAME_EVENTS]))
        broadcast(encode_batch(epoch, []))  # frontier marker

    for ev in terminate:
        broadcast(encode_batch(ev.at.epoch, [ev]))
    return frames


def stream_file_name(worker: int, writer: int) -> str:
    return f"worker_{worker}_writer_{writer}.st2"


def write_offline(
    streams: Sequence[Sequence[RawEvent]], lbf: int, dir_path: str | Path
) -> List[Path]:
    """Filter and serialize per-worker streams to `dir_path`.

    Creates workers x lbf files named worker_<w>_writer_<i>.st2. Returns
    the created paths.
    """
    directory = Path(dir_path)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for w, stream in enumerate(streams):
        per_writer = writer_frames(filter_events(stream), lbf)
        for i, frames in enumerate(per_writer):
            path = directory / stream_file_name(w, i)
            try:
                with open(path, "wb") as f:
                    for frame in frames:
                        f.write(frame)
            except OSError as exc:
                raise AdapterError(f"cannot write {path}: {exc}") from exc
            paths.append(path)
    return paths


def resolve_address(address: str | None, port: int | None) -> Tuple[str, int]:
    """Pick the online endpoint: explicit flags win, else SNAILTRAIL_ADDR."""
    if address is not None and port is not None:
        return address, port
    env = os.environ.get(ADDR_ENV_VAR)
    if env is None:
        raise AdapterError(
            f"no endpoint: pass an address and port or set {ADDR_ENV_VAR}"
        )
    host, _, p = env.rpartition(":")
    if not host or not p.isdigit():
        raise AdapterError(f"{ADDR_ENV_VAR}={env!r} is not host:port")
    if address is not None:
        host = address
    return host, int(p)


def write_online(
    streams: Sequence[Sequence[RawEvent]],
    lbf: int,
    address: str | None = None,
    port: int | None = None,
) -> None:
    """Push per-worker streams over TCP, one connection per (worker, writer).

    Connects to the profiler at the resolved endpoint; sends block when the
    peer's buffer is full (back-pressure, never dropped). Each worker runs
    its own writing agent; a connection is closed right after its final
    (Terminate-bearing) frame.
    """
    host, p = resolve_address(address, port)
    failures: List[BaseException] = []

    def agent(worker: int, stream: Sequence[RawEvent]) -> None:
        per_writer = writer_frames(filter_events(stream), lbf)
        conns: List[socket.socket] = []
        try:
            for i in range(lbf):
                try:
                    conns.append(socket.create_connection((host, p)))
                except OSError as exc:
                    raise AdapterError(
                        f"worker {worker} writer {i}: cannot connect to "
                        f"{host}:{p}: {exc}"
                    ) from exc
            for i, frames in enumerate(per_writer):
                try:
                    for frame in frames:
                        conns[i].sendall(frame)
                except OSError as exc:
                    raise AdapterError(
                        f"worker {worker} writer {i}: send failed: {exc}"
                    ) from exc
        except BaseException as exc:
            failures.append(exc)
        finally:
            for c in conns:
                c.close()

    threads = [
        threading.Thread(target=agent, args=(w, s), name=f"writer-agent-{w}")
        for w, s in enumerate(streams)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
