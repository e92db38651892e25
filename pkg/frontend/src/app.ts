// Dashboard wiring: socket frames and user interaction both funnel
// through the view state; every state change re-renders the affected
// views. The backend address comes from the `backend` query parameter,
// defaulting to ws://<host>:8455.

import { activityTypeSchema, ServerFrame } from "./protocol.js";
import { renderCharts } from "./render/charts.js";
import { focusEdge, renderPag } from "./render/pag.js";
import { DashboardSocket, WebSocketFactory } from "./socket.js";
import {
  AlertRow,
  ViewState,
  applyAlert,
  applyEpochData,
  clickAlert,
  initialState,
  resumeLiveFollow,
  selectEpoch,
  setKhopDepth,
  setPerWorker,
  toggleHiddenType,
} from "./state.js";

function backendUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return (
    params.get("backend") ??
    `ws://${window.location.hostname || "127.0.0.1"}:8455`
  );
}

export class App {
  state: ViewState = initialState();
  private socket: DashboardSocket;
  private pagView: HTMLElement;
  private chartsView: HTMLElement;
  private alertsView: HTMLElement;
  private statusView: HTMLElement;
  private pendingScroll: string | null = null;

  constructor(
    private readonly root: Document,
    url: string,
    wsFactory?: WebSocketFactory,
  ) {
    this.pagView = root.getElementById("pag")!;
    this.chartsView = root.getElementById("charts")!;
    this.alertsView = root.getElementById("alerts")!;
    this.statusView = root.getElementById("status")!;
    const hooks = {
      onFrame: (frame: ServerFrame) => this.onFrame(frame),
      onOpen: () => {
        this.statusView.textContent = `connected to ${url}`;
        // reconnects restore live-follow; alert rows dedupe on replay
        const resumed = resumeLiveFollow(this.state);
        this.state = resumed.state;
        this.socket.requestEpoch(resumed.fetch ?? this.state.selectedEpoch);
      },
      onClose: () => {
        this.statusView.textContent = "disconnected, retrying";
      },
    };
    this.socket = wsFactory
      ? new DashboardSocket(url, hooks, wsFactory)
      : new DashboardSocket(url, hooks);
    this.bindControls();
  }

  start(): void {
    this.socket.connect();
  }

  private onFrame(frame: ServerFrame): void {
    if (frame.type === "invariant_violation") {
      const { state, added } = applyAlert(this.state, frame);
      this.state = state;
      if (added) {
        this.renderAlerts();
      }
      return;
    }
    if (frame.type === "error") {
      console.warn("server error:", frame.reason);
      return;
    }
    const { state, refetch } = applyEpochData(this.state, frame);
    this.state = state;
    if (refetch !== null) {
      this.socket.requestEpoch(refetch);
    }
    this.renderMain();
  }

  private renderMain(): void {
    renderPag(this.pagView, this.state.bundle, this.state);
    renderCharts(this.chartsView, this.state.bundle, this.state);
    const epochBox = this.root.getElementById("epoch-input") as HTMLInputElement;
    if (epochBox && this.root.activeElement !== epochBox) {
      epochBox.value = String(this.state.selectedEpoch);
    }
    if (this.pendingScroll !== null) {
      if (focusEdge(this.pagView, this.pendingScroll)) {
        this.pendingScroll = null;
      }
    }
  }

  private renderAlerts(): void {
    this.alertsView.textContent = "";
    for (const alert of this.state.alerts) {
      const row = this.root.createElement("tr");
      row.className = "alert-row";
      row.setAttribute("data-edge-key", alert.edgeKey);
      row.setAttribute("data-rule", alert.rule);
      const cells = [
        alert.rule,
        String(alert.epoch),
        String(alert.durationNs),
        String(alert.worker),
        alert.edgeKey,
        alert.operator === null ? "-" : String(alert.operator),
        alert.activityType ?? "-",
      ];
      for (const text of cells) {
        const td = this.root.createElement("td");
        td.textContent = text;
        row.appendChild(td);
      }
      row.addEventListener("click", () => this.onAlertClick(alert));
      this.alertsView.appendChild(row);
    }
  }

  onAlertClick(alert: AlertRow): void {
    const { state, fetch, scrollTo } = clickAlert(this.state, alert);
    this.state = state;
    this.pendingScroll = scrollTo;
    this.socket.requestEpoch(fetch);
    this.renderMain();
  }

  private bindControls(): void {
    const epochBox = this.root.getElementById("epoch-input") as HTMLInputElement;
    epochBox?.addEventListener("change", () => {
      const epoch = Number.parseInt(epochBox.value, 10);
      if (Number.isNaN(epoch) || epoch < 0) {
        return;
      }
      const { state, fetch } = selectEpoch(this.state, epoch);
      this.state = state;
      this.socket.requestEpoch(fetch);
      this.renderMain();
    });
    this.root.getElementById("live-follow")?.addEventListener("click", () => {
      const { state, fetch } = resumeLiveFollow(this.state);
      this.state = state;
      if (fetch !== null) {
        this.socket.requestEpoch(fetch);
      }
      this.renderMain();
    });
    const depthBox = this.root.getElementById("khop-depth") as HTMLInputElement;
    depthBox?.addEventListener("change", () => {
      const raw = depthBox.value.trim();
      const depth = raw === "" ? null : Number.parseInt(raw, 10);
      this.state = setKhopDepth(
        this.state, depth !== null && Number.isNaN(depth) ? null : depth,
      );
      this.renderMain();
    });
    const perWorker = this.root.getElementById("per-worker") as HTMLInputElement;
    perWorker?.addEventListener("change", () => {
      this.state = setPerWorker(this.state, perWorker.checked);
      this.renderMain();
    });
    for (const type of activityTypeSchema.options) {
      const box = this.root.getElementById(`hide-${type}`) as HTMLInputElement;
      box?.addEventListener("change", () => {
        this.state = toggleHiddenType(this.state, type);
        this.renderMain();
      });
    }
  }
}

if (typeof window !== "undefined" && window.document.getElementById("pag")) {
  const app = new App(window.document, backendUrl());
  app.start();
}
