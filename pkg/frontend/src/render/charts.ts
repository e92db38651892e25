// The four chart panels: K-Hops, Activity Metrics, Cross Metrics, Record
// Metrics. Bars carry data-* attributes so tests can read back exactly
// what is displayed. The only client-side arithmetic is summation for
// the aggregate toggle; every value originates in a payload field.

import { EpochData, REMOTE_TYPES } from "../protocol.js";
import { ViewState } from "../state.js";

interface Bar {
  label: string;
  value: number;
  series: string;
}

function renderPanel(
  container: HTMLElement,
  id: string,
  title: string,
  bars: Bar[],
): void {
  const doc = container.ownerDocument;
  const panel = doc.createElement("section");
  panel.className = "panel";
  panel.id = id;
  const heading = doc.createElement("h3");
  heading.textContent = title;
  panel.appendChild(heading);
  const max = bars.reduce((m, b) => Math.max(m, b.value), 0);
  const list = doc.createElement("div");
  list.className = "bars";
  for (const bar of bars) {
    const row = doc.createElement("div");
    row.className = "bar-row";
    const label = doc.createElement("span");
    label.className = "bar-label";
    label.textContent = bar.label;
    const track = doc.createElement("div");
    track.className = "bar-track";
    const fill = doc.createElement("div");
    fill.className = `bar-fill ${bar.series}`;
    fill.setAttribute("data-label", bar.label);
    fill.setAttribute("data-series", bar.series);
    fill.setAttribute("data-value", String(bar.value));
    fill.style.width = max > 0 ? `${(bar.value / max) * 100}%` : "0%";
    const value = doc.createElement("span");
    value.className = "bar-value";
    value.textContent = String(bar.value);
    track.appendChild(fill);
    row.append(label, track, value);
    list.appendChild(row);
  }
  if (bars.length === 0) {
    const empty = doc.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "nothing to show";
    list.appendChild(empty);
  }
  panel.appendChild(list);
  container.appendChild(panel);
}

function khopBars(bundle: EpochData, state: ViewState): Bar[] {
  const depth = state.khopDepth ?? Infinity;
  const counts = new Map<string, number>();
  const weights = new Map<string, number>();
  for (const s of bundle.khops.summary) {
    if (s.hop > depth || state.hiddenTypes.has(s.activity_type)) {
      continue;
    }
    counts.set(s.activity_type, (counts.get(s.activity_type) ?? 0) + s.count);
    weights.set(
      s.activity_type,
      (weights.get(s.activity_type) ?? 0) + s.total_duration_ns,
    );
  }
  const bars: Bar[] = [];
  for (const [type, count] of [...counts].sort()) {
    bars.push({ label: type, value: count, series: "unweighted" });
    bars.push({ label: type, value: weights.get(type) ?? 0, series: "weighted" });
  }
  return bars;
}

function activityBars(bundle: EpochData, state: ViewState): Bar[] {
  const bars: Bar[] = [];
  const rows = bundle.metrics.filter(
    (r) => !state.hiddenTypes.has(r.activity_type),
  );
  if (state.perWorker) {
    for (const r of [...rows].sort((a, b) =>
      a.from_worker - b.from_worker ||
      a.activity_type.localeCompare(b.activity_type),
    )) {
      bars.push({
        label: `w${r.from_worker} ${r.activity_type}`,
        value: r.count,
        series: "count",
      });
      bars.push({
        label: `w${r.from_worker} ${r.activity_type}`,
        value: r.total_duration_ns,
        series: "duration",
      });
    }
    return bars;
  }
  const counts = new Map<string, number>();
  const durations = new Map<string, number>();
  for (const r of rows) {
    counts.set(r.activity_type, (counts.get(r.activity_type) ?? 0) + r.count);
    durations.set(
      r.activity_type,
      (durations.get(r.activity_type) ?? 0) + r.total_duration_ns,
    );
  }
  for (const [type, count] of [...counts].sort()) {
    bars.push({ label: type, value: count, series: "count" });
    bars.push({ label: type, value: durations.get(type) ?? 0, series: "duration" });
  }
  return bars;
}

function crossBars(bundle: EpochData, state: ViewState): Bar[] {
  const rows = bundle.metrics.filter(
    (r) =>
      REMOTE_TYPES.has(r.activity_type) &&
      !state.hiddenTypes.has(r.activity_type),
  );
  const bars: Bar[] = [];
  if (state.perWorker) {
    for (const r of [...rows].sort((a, b) =>
      a.from_worker - b.from_worker || a.to_worker - b.to_worker ||
      a.activity_type.localeCompare(b.activity_type),
    )) {
      const label = `w${r.from_worker}>w${r.to_worker} ${r.activity_type}`;
      bars.push({ label, value: r.count, series: "count" });
      bars.push({ label, value: r.total_duration_ns, series: "duration" });
    }
    return bars;
  }
  const counts = new Map<string, number>();
  const durations = new Map<string, number>();
  for (const r of rows) {
    counts.set(r.activity_type, (counts.get(r.activity_type) ?? 0) + r.count);
    durations.set(
      r.activity_type,
      (durations.get(r.activity_type) ?? 0) + r.total_duration_ns,
    );
  }
  for (const [type, count] of [...counts].sort()) {
    bars.push({ label: type, value: count, series: "count" });
    bars.push({ label: type, value: durations.get(type) ?? 0, series: "duration" });
  }
  return bars;
}

function recordBars(bundle: EpochData, state: ViewState): Bar[] {
  const bars: Bar[] = [];
  if (state.perWorker) {
    for (const r of [...bundle.records].sort((a, b) => a.worker - b.worker)) {
      bars.push({ label: `w${r.worker}`, value: r.carried, series: "carried" });
      bars.push({ label: `w${r.worker}`, value: r.processed, series: "processed" });
    }
    return bars;
  }
  let carried = 0;
  let processed = 0;
  for (const r of bundle.records) {
    carried += r.carried;
    processed += r.processed;
  }
  bars.push({ label: "all workers", value: carried, series: "carried" });
  bars.push({ label: "all workers", value: processed, series: "processed" });
  return bars;
}

export function renderCharts(
  container: HTMLElement,
  bundle: EpochData | null,
  state: ViewState,
): void {
  container.textContent = "";
  if (!bundle) {
    const empty = container.ownerDocument.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no epoch loaded yet";
    container.appendChild(empty);
    return;
  }
  renderPanel(container, "panel-khops", "K-Hops", khopBars(bundle, state));
  renderPanel(
    container, "panel-activity", "Activity Metrics", activityBars(bundle, state),
  );
  renderPanel(container, "panel-cross", "Cross Metrics", crossBars(bundle, state));
  renderPanel(container, "panel-records", "Record Metrics", recordBars(bundle, state));
}
