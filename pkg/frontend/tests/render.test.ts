// Rendering: filter exactness, k-hop highlighting, aggregation identity.

import { beforeEach, describe, expect, it } from "vitest";

import { EpochData, epochDataAvailableSchema } from "../src/protocol.js";
import { renderCharts } from "../src/render/charts.js";
import { focusEdge, renderPag } from "../src/render/pag.js";
import { initialState, ViewState } from "../src/state.js";
import { loadFixture } from "./fixtures.js";

const bundle = epochDataAvailableSchema.parse(loadFixture("epoch_data.json"));

let container: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = "<div id='view'></div>";
  container = document.getElementById("view")!;
});

function stateWith(overrides: Partial<ViewState>): ViewState {
  return { ...initialState(), ...overrides };
}

describe("renderPag", () => {
  it("renders an empty state without crashing on zero edges", () => {
    const empty: EpochData = { ...bundle, pag: [] };
    expect(renderPag(container, empty, initialState())).toBe(0);
    expect(container.querySelector(".empty-state")).not.toBeNull();
    renderPag(container, null, initialState());
    expect(container.querySelector(".empty-state")).not.toBeNull();
  });

  it("draws one element per edge with metadata tooltips", () => {
    const drawn = renderPag(container, bundle, initialState());
    expect(drawn).toBe(bundle.pag.length);
    const edges = container.querySelectorAll(".edge");
    expect(edges.length).toBe(bundle.pag.length);
    expect(container.querySelectorAll(".edge title").length).toBe(
      bundle.pag.length,
    );
  });

  it("hidden types remove exactly the filtered edge elements", () => {
    renderPag(container, bundle, stateWith({ hiddenTypes: new Set(["Waiting"]) }));
    expect(container.querySelectorAll('[data-type="Waiting"]').length).toBe(0);
    const expected = bundle.pag.filter((e) => e.type !== "Waiting").length;
    expect(container.querySelectorAll(".edge").length).toBe(expected);
    // every other type keeps its exact element count
    for (const type of ["Processing", "Busy", "DataMessage"]) {
      const want = bundle.pag.filter((e) => e.type === type).length;
      expect(container.querySelectorAll(`[data-type="${type}"]`).length).toBe(want);
    }
  });

  it("highlights exactly the k-hop edges at depth <= d", () => {
    renderPag(container, bundle, stateWith({ khopDepth: 1 }));
    const highlighted = container.querySelectorAll(".edge.khop").length;
    const keys = new Set(
      bundle.khops.edges
        .filter((h) => h.hop <= 1)
        .map((h) => `${h.edge.src.w}@${h.edge.src.epoch}:${h.edge.src.nanos}`),
    );
    const drawnHighlighted = new Set(
      [...container.querySelectorAll(".edge.khop")].map((el) =>
        el.getAttribute("data-edge-key"),
      ),
    );
    expect(drawnHighlighted).toEqual(keys);
    expect(highlighted).toBeGreaterThan(0);
  });

  it("focusEdge finds and flags the alert's edge element", () => {
    renderPag(container, bundle, initialState());
    const key = bundle.pag[0]!;
    const target = `${key.src.w}@${key.src.epoch}:${key.src.nanos}`;
    expect(focusEdge(container, target)).toBe(true);
    expect(container.querySelector(".flash")).not.toBeNull();
    expect(focusEdge(container, "99@0:1")).toBe(false);
  });
});

describe("renderCharts", () => {
  it("renders the four panels", () => {
    renderCharts(container, bundle, initialState());
    for (const id of ["panel-khops", "panel-activity", "panel-cross",
                      "panel-records"]) {
      expect(container.querySelector(`#${id}`)).not.toBeNull();
    }
  });

  it("aggregate bars equal the sum of per-worker bars", () => {
    renderCharts(container, bundle, stateWith({ perWorker: true }));
    const perWorker = [...container.querySelectorAll(
      "#panel-activity .bar-fill[data-series='count']",
    )];
    const sums = new Map<string, number>();
    for (const el of perWorker) {
      const type = el.getAttribute("data-label")!.split(" ")[1]!;
      sums.set(type, (sums.get(type) ?? 0) + Number(el.getAttribute("data-value")));
    }
    renderCharts(container, bundle, stateWith({ perWorker: false }));
    for (const el of container.querySelectorAll(
      "#panel-activity .bar-fill[data-series='count']",
    )) {
      const type = el.getAttribute("data-label")!;
      expect(Number(el.getAttribute("data-value"))).toBe(sums.get(type));
    }
  });

  it("cross metrics only show remote message types", () => {
    renderCharts(container, bundle, stateWith({ perWorker: true }));
    const labels = [...container.querySelectorAll("#panel-cross .bar-fill")]
      .map((el) => el.getAttribute("data-label")!);
    expect(labels.length).toBeGreaterThan(0);
    for (const label of labels) {
      expect(/DataMessage|ControlMessage/.test(label)).toBe(true);
    }
  });

  it("khops panel respects the selected depth", () => {
    renderCharts(container, bundle, stateWith({ khopDepth: 1 }));
    const atOne = [...container.querySelectorAll(
      "#panel-khops .bar-fill[data-series='unweighted']",
    )].reduce((acc, el) => acc + Number(el.getAttribute("data-value")), 0);
    const expected = bundle.khops.summary
      .filter((s) => s.hop <= 1)
      .reduce((acc, s) => acc + s.count, 0);
    expect(atOne).toBe(expected);
  });

  it("renders empty panels without errors on empty metrics", () => {
    const empty: EpochData = {
      ...bundle,
      metrics: [],
      khops: { edges: [], summary: [] },
      records: [],
    };
    renderCharts(container, empty, initialState());
    expect(container.querySelectorAll(".panel").length).toBe(4);
  });
});
