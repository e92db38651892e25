// WebSocket wrapper: one connection, one in-flight epoch request at a
// time, exponential-backoff reconnect that restores live-follow.

import { ServerFrame, encodeGetEpoch, parseServerFrame } from "./protocol.js";

export interface SocketHooks {
  onFrame(frame: ServerFrame): void;
  onOpen?(): void;
  onClose?(): void;
}

type WebSocketLike = Pick<WebSocket, "send" | "close" | "readyState"> & {
  onopen: ((ev: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
};

export type WebSocketFactory = (url: string) => WebSocketLike;

const OPEN = 1;

export class DashboardSocket {
  private ws: WebSocketLike | null = null;
  private attempts = 0;
  private inFlight: number | null = null;
  private queued: number | null = null;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly hooks: SocketHooks,
    private readonly factory: WebSocketFactory = (u) =>
      new WebSocket(u) as unknown as WebSocketLike,
  ) {}

  connect(): void {
    this.closed = false;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.inFlight = null;
      this.hooks.onOpen?.();
      this.flush();
    };
    ws.onmessage = (ev) => {
      let frame: ServerFrame;
      try {
        frame = parseServerFrame(String(ev.data));
      } catch (err) {
        console.warn("dropping malformed frame", err);
        return;
      }
      if (frame.type === "epoch_data") {
        this.inFlight = null;
      }
      this.hooks.onFrame(frame);
      this.flush();
    };
    ws.onclose = () => {
      this.hooks.onClose?.();
      this.inFlight = null;
      if (!this.closed) {
        this.reconnect();
      }
    };
    ws.onerror = () => {};
  }

  private reconnect(): void {
    const delay = Math.min(250 * 2 ** this.attempts, 10_000);
    this.attempts += 1;
    setTimeout(() => {
      if (!this.closed) {
        this.connect();
      }
    }, delay);
  }

  /** Ask for an epoch; the dashboard requests one epoch at a time, so a
   * request issued while another is pending replaces the queued one. */
  requestEpoch(epoch: number): void {
    this.queued = epoch;
    this.flush();
  }

  private flush(): void {
    if (
      this.queued === null ||
      this.inFlight !== null ||
      this.ws === null ||
      this.ws.readyState !== OPEN
    ) {
      return;
    }
    const epoch = this.queued;
    this.queued = null;
    this.inFlight = epoch;
    this.ws.send(encodeGetEpoch(epoch));
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
