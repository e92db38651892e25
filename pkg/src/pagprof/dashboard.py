"""Dashboard backend: buffers per-epoch analysis bundles, serves them to
browser clients over a WebSocket JSON protocol, and pushes invariant
violations unsolicited.

The analytics producer and the socket server are decoupled through the
epoch buffer; serving never blocks ingestion. Every outbound frame goes
through a bounded per-client queue: when a client cannot keep up, its
oldest undelivered frame is dropped (drop-slowest). Frame schemas live in
docs/protocol.md and are pinned by fixture tests on both sides of the
wire.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from typing import Any, Dict, Iterable, List, Optional

from websockets.asyncio.server import serve

from .analytics import HopEdge, HopWeight, InvariantViolation, MetricsRow
from .pag import PagEdge
from .pipeline import EpochResult

logger = logging.getLogger(__name__)

BUNDLE_KINDS = ("pag", "metrics", "khops", "records")

#: Outbound frames a slow client may have in flight before the oldest drops.
CLIENT_QUEUE_LIMIT = 256


def edge_to_json(edge: PagEdge) -> Dict[str, Any]:
    return {
        "src": {"w": edge.src_worker, "epoch": edge.src_epoch,
                "nanos": edge.src_nanos},
        "dst": {"w": edge.dst_worker, "epoch": edge.dst_epoch,
                "nanos": edge.dst_nanos},
        "type": edge.edge_type.wire_name,
        "op": edge.operator_id,
        "rc": edge.record_count,
    }


def metrics_row_to_json(row: MetricsRow) -> Dict[str, Any]:
    return {
        "from_worker": row.from_worker,
        "to_worker": row.to_worker,
        "activity_type": row.activity_type.wire_name,
        "count": row.count,
        "total_duration_ns": row.total_duration_ns,
        "total_records": row.total_records,
    }


def hop_to_json(hop: HopEdge) -> Dict[str, Any]:
    return {"hop": hop.hop, "edge": edge_to_json(hop.edge)}


def hop_weight_to_json(w: HopWeight) -> Dict[str, Any]:
    return {
        "hop": w.hop,
        "activity_type": w.activity_type.wire_name,
        "count": w.count,
        "total_duration_ns": w.total_duration_ns,
    }


def violation_to_json(v: InvariantViolation) -> Dict[str, Any]:
    return {
        "type": "invariant_violation",
        "rule": v.rule.value,
        "epoch": v.epoch,
        "duration_ns": v.duration_ns,
        "worker": v.source_worker,
        "edge": {"w": v.edge_worker, "epoch": v.edge_epoch, "nanos": v.edge_nanos},
        "operator": v.operator_id,
        "activity_type": (
            None if v.activity_type is None else v.activity_type.wire_name
        ),
    }


def result_to_bundles(result: EpochResult) -> Dict[str, Any]:
    """Split one engine result into the four dashboard bundle kinds."""
    return {
        "pag": [edge_to_json(e) for e in result.edges or []],
        "metrics": [metrics_row_to_json(r) for r in result.metrics_rows],
        "khops": {
            "edges": [hop_to_json(h) for h in result.khop_edges or []],
            "summary": [hop_weight_to_json(w) for w in result.khop_weights or []],
        },
        "records": [
            {"worker": w, "carried": carried, "processed": processed}
            for w, (carried, processed) in sorted(result.record_metrics.items())
        ],
    }


class EpochBuffer:
    """Epoch-keyed bundle store with bounded retention plus the alert log.

    An epoch is served only once all four bundle kinds arrived and the
    epoch was marked closed. Violations append to a cross-epoch log so
    late-joining clients can catch up within the retention window.
    """

    def __init__(self, retention: int = 1000):
        if retention < 1:
            raise ValueError("retention must be >= 1")
        self.retention = retention
        self._bundles: Dict[int, Dict[str, Any]] = {}
        self._closed: set = set()
        self._violations: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def ingest_result(self, epoch: int, kind: str, payload: Any) -> None:
        if kind not in BUNDLE_KINDS:
            raise ValueError(f"unknown bundle kind {kind!r}")
        with self._lock:
            bundle = self._bundles.setdefault(epoch, {})
            if kind in bundle:
                logger.warning("bundle %s for epoch %d overwritten", kind, epoch)
            bundle[kind] = payload
            self._evict(epoch)

    def mark_closed(self, epoch: int) -> None:
        with self._lock:
            self._closed.add(epoch)

    def add_violation(self, violation: Dict[str, Any]) -> None:
        with self._lock:
            self._violations.append(violation)

    def _evict(self, newest: int) -> None:
        floor = newest - self.retention
        if floor <= 0:
            return
        for e in [e for e in self._bundles if e <= floor]:
            del self._bundles[e]
            self._closed.discard(e)
        self._violations = [v for v in self._violations if v["epoch"] > floor]

    def complete(self, epoch: int) -> bool:
        with self._lock:
            bundle = self._bundles.get(epoch)
            return (
                epoch in self._closed
                and bundle is not None
                and all(k in bundle for k in BUNDLE_KINDS)
            )

    def get(self, epoch: int) -> Optional[Dict[str, Any]]:
        if not self.complete(epoch):
            return None
        with self._lock:
            return dict(self._bundles[epoch])

    def latest_closed(self) -> Optional[int]:
        with self._lock:
            served = [e for e in self._closed if e in self._bundles]
            return max(served) if served else None

    def violations(self) -> List[Dict[str, Any]]:
        with self._lock:
            return list(self._violations)


def handle_request(buffer: EpochBuffer, text: str) -> Dict[str, Any]:
    """Answer one client frame; protocol errors are answered in-band."""
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        return {"type": "error", "reason": f"not JSON: {exc.msg}"}
    if not isinstance(msg, dict):
        return {"type": "error", "reason": "frame must be a JSON object"}
    if msg.get("type") != "get_epoch":
        return {"type": "error", "reason": f"unknown request type {msg.get('type')!r}"}
    epoch = msg.get("epoch")
    if not isinstance(epoch, int) or isinstance(epoch, bool) or epoch < 0:
        return {"type": "error", "reason": "epoch must be a nonnegative integer"}
    bundle = buffer.get(epoch)
    if bundle is None:
        return {
            "type": "epoch_data",
            "epoch": epoch,
            "available": False,
            "latest": buffer.latest_closed(),
        }
    return {
        "type": "epoch_data",
        "epoch": epoch,
        "available": True,
        "pag": bundle["pag"],
        "metrics": bundle["metrics"],
        "khops": bundle["khops"],
        "records": bundle["records"],
    }


class DashboardServer:
    """WebSocket server thread around an EpochBuffer.

    `ingest` may be called from any thread; violation frames broadcast to
    every open connection in emission order.
    """

    def __init__(self, interface: str = "127.0.0.1", port: int = 0,
                 retention: int = 1000):
        self.buffer = EpochBuffer(retention)
        self._interface = interface
        self._requested_port = port
        self.port: Optional[int] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._thread: Optional[threading.Thread] = None
        self._clients: Dict[int, asyncio.Queue] = {}
        self._next_client = 0
        self._ready = threading.Event()
        self._stop: Optional[asyncio.Future] = None

    # -- client plumbing (event loop thread) --------------------------------

    async def _handler(self, conn) -> None:
        client_id = self._next_client
        self._next_client += 1
        out: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        self._clients[client_id] = out
        for v in self.buffer.violations():
            self._offer(out, json.dumps(v))

        async def sender():
            while True:
                frame = await out.get()
                await conn.send(frame)

        task = asyncio.create_task(sender())
        try:
            async for message in conn:
                reply = handle_request(self.buffer, message)
                self._offer(out, json.dumps(reply))
        except Exception:
            pass
        finally:
            task.cancel()
            self._clients.pop(client_id, None)

    @staticmethod
    def _offer(out: asyncio.Queue, frame: str) -> None:
        while True:
            try:
                out.put_nowait(frame)
                return
            except asyncio.QueueFull:
                try:
                    out.get_nowait()  # drop-slowest: shed the oldest frame
                except asyncio.QueueEmpty:
                    pass

    def _broadcast(self, frame: str) -> None:
        for out in list(self._clients.values()):
            self._offer(out, frame)

    async def _main(self) -> None:
        self._stop = asyncio.get_running_loop().create_future()
        async with serve(self._handler, self._interface,
                         self._requested_port) as server:
            self.port = next(iter(server.sockets)).getsockname()[1]
            self._loop = asyncio.get_running_loop()
            self._ready.set()
            await self._stop

    # -- public surface (any thread) -----------------------------------------

    def start(self) -> int:
        self._thread = threading.Thread(
            target=lambda: asyncio.run(self._main()), name="dashboard", daemon=True
        )
        self._thread.start()
        self._ready.wait()
        assert self.port is not None
        return self.port

    def ingest(self, result: EpochResult) -> None:
        """Buffer one closed epoch's bundles and push its violations."""
        bundles = result_to_bundles(result)
        for kind in BUNDLE_KINDS:
            self.buffer.ingest_result(result.epoch, kind, bundles[kind])
        self.buffer.mark_closed(result.epoch)
        for v in result.violations:
            self.push_violation(v)

    def push_violation(self, violation: InvariantViolation) -> None:
        frame = violation_to_json(violation)
        self.buffer.add_violation(frame)
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._broadcast, json.dumps(frame))

    def stop(self) -> None:
        if self._loop is not None and self._stop is not None:
            self._loop.call_soon_threadsafe(
                lambda: self._stop.set_result(None)
                if not self._stop.done() else None
            )
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve_dashboard(results: Iterable[EpochResult], interface: str,
                    ws_port: int) -> None:
    """CLI driver: start the server, feed it epochs, then keep serving."""
    server = DashboardServer(interface, ws_port)
    port = server.start()
    print(f"dashboard backend listening on ws://{interface}:{port}", flush=True)
    try:
        for result in results:
            server.ingest(result)
            print(
                f"epoch {result.epoch} buffered "
                f"({result.edge_count} edges, {len(result.violations)} alerts)",
                flush=True,
            )
        print("trace complete; dashboard stays up (ctrl-c to exit)", flush=True)
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
