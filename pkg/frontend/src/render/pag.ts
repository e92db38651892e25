// Graph timeline: one horizontal lane per worker, local edges along the
// lane, remote edges as inter-lane arrows. Hover metadata via <title>,
// zoom/scroll via viewBox, k-hop tinting via the `khop` class.

import { EpochData, PagEdge, nodeKey } from "../protocol.js";
import { ViewState } from "../state.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const LANE_HEIGHT = 56;
const MARGIN_X = 40;
const WIDTH = 1200;

export function edgeElementKey(edge: PagEdge): string {
  return nodeKey(edge.src);
}

function tooltip(edge: PagEdge): string {
  const duration = edge.dst.nanos - edge.src.nanos;
  const parts = [
    `${edge.type} w${edge.src.w} -> w${edge.dst.w}`,
    `duration ${duration} ns`,
  ];
  if (edge.op !== null) {
    parts.push(`operator ${edge.op}`);
  }
  if (edge.rc > 0) {
    parts.push(`${edge.rc} records`);
  }
  return parts.join("\n");
}

/** Render the timeline into `container`; returns drawn element count. */
export function renderPag(
  container: HTMLElement,
  bundle: EpochData | null,
  state: ViewState,
): number {
  const doc = container.ownerDocument;
  container.textContent = "";
  if (!bundle || bundle.pag.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "empty-state";
    empty.textContent = bundle
      ? `epoch ${bundle.epoch} holds no activities`
      : "no epoch loaded yet";
    container.appendChild(empty);
    return 0;
  }

  const workers = [...new Set(bundle.pag.flatMap((e) => [e.src.w, e.dst.w]))]
    .sort((a, b) => a - b);
  const lane = new Map(workers.map((w, i) => [w, (i + 0.5) * LANE_HEIGHT]));
  let lo = Infinity;
  let hi = -Infinity;
  for (const e of bundle.pag) {
    lo = Math.min(lo, e.src.nanos);
    hi = Math.max(hi, e.dst.nanos);
  }
  const span = Math.max(hi - lo, 1);
  const x = (nanos: number) =>
    MARGIN_X + ((nanos - lo) / span) * (WIDTH - 2 * MARGIN_X);

  const highlighted = new Set<string>();
  if (state.khopDepth !== null) {
    for (const h of bundle.khops.edges) {
      if (h.hop <= state.khopDepth) {
        highlighted.add(edgeIdentity(h.edge));
      }
    }
  }

  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${workers.length * LANE_HEIGHT}`);
  svg.setAttribute("class", "pag-svg");
  svg.setAttribute("preserveAspectRatio", "none");

  for (const w of workers) {
    const label = doc.createElementNS(SVG_NS, "text");
    label.setAttribute("x", "4");
    label.setAttribute("y", String(lane.get(w)! - 6));
    label.setAttribute("class", "lane-label");
    label.textContent = `w${w}`;
    svg.appendChild(label);
    const rail = doc.createElementNS(SVG_NS, "line");
    rail.setAttribute("x1", String(MARGIN_X));
    rail.setAttribute("x2", String(WIDTH - MARGIN_X));
    rail.setAttribute("y1", String(lane.get(w)!));
    rail.setAttribute("y2", String(lane.get(w)!));
    rail.setAttribute("class", "lane-rail");
    svg.appendChild(rail);
  }

  let drawn = 0;
  for (const edge of bundle.pag) {
    if (state.hiddenTypes.has(edge.type)) {
      continue;
    }
    const el = doc.createElementNS(SVG_NS, "line");
    el.setAttribute("x1", String(x(edge.src.nanos)));
    el.setAttribute("x2", String(x(edge.dst.nanos)));
    el.setAttribute("y1", String(lane.get(edge.src.w)!));
    el.setAttribute("y2", String(lane.get(edge.dst.w)!));
    const classes = ["edge", edge.type, edge.src.w === edge.dst.w ? "local" : "remote"];
    if (highlighted.has(edgeIdentity(edge))) {
      classes.push("khop");
    }
    el.setAttribute("class", classes.join(" "));
    el.setAttribute("data-type", edge.type);
    el.setAttribute("data-edge-key", edgeElementKey(edge));
    const title = doc.createElementNS(SVG_NS, "title");
    title.textContent = tooltip(edge);
    el.appendChild(title);
    svg.appendChild(el);
    drawn += 1;
  }
  container.appendChild(svg);
  attachZoom(svg, WIDTH, workers.length * LANE_HEIGHT);
  return drawn;
}

function edgeIdentity(edge: PagEdge): string {
  return `${nodeKey(edge.src)}>${nodeKey(edge.dst)}|${edge.type}`;
}

/** Wheel zooms around the cursor, dragging scrolls; pure viewBox math. */
function attachZoom(svg: SVGSVGElement, width: number, height: number): void {
  let view = { x: 0, y: 0, w: width, h: height };
  const apply = () =>
    svg.setAttribute("viewBox", `${view.x} ${view.y} ${view.w} ${view.h}`);
  svg.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const factor = (ev as WheelEvent).deltaY > 0 ? 1.2 : 1 / 1.2;
    const cx = view.x + view.w / 2;
    view.w = Math.min(width, view.w * factor);
    view.x = Math.max(0, Math.min(width - view.w, cx - view.w / 2));
    apply();
  });
  let dragging: { x: number; viewX: number } | null = null;
  svg.addEventListener("mousedown", (ev) => {
    dragging = { x: (ev as MouseEvent).clientX, viewX: view.x };
  });
  svg.addEventListener("mousemove", (ev) => {
    if (!dragging) {
      return;
    }
    const dx = ((ev as MouseEvent).clientX - dragging.x) * (view.w / width);
    view.x = Math.max(0, Math.min(width - view.w, dragging.viewX - dx));
    apply();
  });
  svg.addEventListener("mouseup", () => {
    dragging = null;
  });
}

/** Scroll the PAG view to an edge (alert navigation target). */
export function focusEdge(container: HTMLElement, edgeKey: string): boolean {
  const el = container.querySelector(`[data-edge-key="${edgeKey}"]`);
  if (!el) {
    return false;
  }
  el.classList.add("flash");
  (el as unknown as { scrollIntoView?: () => void }).scrollIntoView?.();
  return true;
}
