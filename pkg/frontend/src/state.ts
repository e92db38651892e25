// View state and its pure transition functions.
//
// The frontend never re-derives analysis results: every number on screen
// comes from a server payload field, with client-side work limited to
// summation for the aggregate toggle and set-membership for filters.

import {
  ActivityType,
  EpochData,
  EpochUnavailable,
  Violation,
  nodeKey,
} from "./protocol.js";

export interface AlertRow {
  rule: Violation["rule"];
  epoch: number;
  durationNs: number;
  worker: number;
  edgeKey: string;
  operator: number | null;
  activityType: ActivityType | null;
}

export interface ViewState {
  selectedEpoch: number;
  liveFollow: boolean;
  /** null disables highlighting; otherwise hops at depth <= value tint. */
  khopDepth: number | null;
  hiddenTypes: Set<ActivityType>;
  perWorker: boolean;
  alerts: AlertRow[];
  latestClosed: number | null;
  bundle: EpochData | null;
}

export function initialState(): ViewState {
  return {
    selectedEpoch: 0,
    liveFollow: true,
    khopDepth: null,
    hiddenTypes: new Set(),
    perWorker: false,
    alerts: [],
    latestClosed: null,
    bundle: null,
  };
}

export function alertDedupeKey(a: AlertRow): string {
  return `${a.rule}|${a.edgeKey}`;
}

/** Append a pushed violation; replayed frames after a reconnect dedupe
 * by edge identity plus rule, so rows are never shown twice. */
export function applyAlert(
  state: ViewState,
  frame: Violation,
): { state: ViewState; added: boolean } {
  const row: AlertRow = {
    rule: frame.rule,
    epoch: frame.epoch,
    durationNs: frame.duration_ns,
    worker: frame.worker,
    edgeKey: nodeKey(frame.edge),
    operator: frame.operator,
    activityType: frame.activity_type,
  };
  const key = alertDedupeKey(row);
  if (state.alerts.some((a) => alertDedupeKey(a) === key)) {
    return { state, added: false };
  }
  return { state: { ...state, alerts: [...state.alerts, row] }, added: true };
}

/** Fold in an epoch_data reply; `refetch` asks the caller to issue a new
 * get_epoch (live-follow when the server reports a newer closed epoch). */
export function applyEpochData(
  state: ViewState,
  frame: EpochData | EpochUnavailable,
): { state: ViewState; refetch: number | null } {
  if (frame.available) {
    const latest = Math.max(state.latestClosed ?? -1, frame.epoch);
    const next = { ...state, latestClosed: latest };
    if (frame.epoch === state.selectedEpoch) {
      next.bundle = frame;
    }
    return { state: next, refetch: null };
  }
  const latest = frame.latest;
  const next = { ...state, latestClosed: latest ?? state.latestClosed };
  if (
    state.liveFollow &&
    latest !== null &&
    latest !== state.selectedEpoch &&
    frame.epoch === state.selectedEpoch
  ) {
    return { state: { ...next, selectedEpoch: latest }, refetch: latest };
  }
  return { state: next, refetch: null };
}

/** User picked an epoch explicitly; manual selection leaves live-follow. */
export function selectEpoch(
  state: ViewState,
  epoch: number,
): { state: ViewState; fetch: number } {
  return {
    state: { ...state, selectedEpoch: epoch, liveFollow: false, bundle: null },
    fetch: epoch,
  };
}

/** Clicking an alert navigates to its epoch and targets its edge. */
export function clickAlert(
  state: ViewState,
  alert: AlertRow,
): { state: ViewState; fetch: number; scrollTo: string } {
  const next = selectEpoch(state, alert.epoch);
  return { state: next.state, fetch: next.fetch, scrollTo: alert.edgeKey };
}

export function toggleHiddenType(
  state: ViewState,
  type: ActivityType,
): ViewState {
  const hidden = new Set(state.hiddenTypes);
  if (hidden.has(type)) {
    hidden.delete(type);
  } else {
    hidden.add(type);
  }
  return { ...state, hiddenTypes: hidden };
}

export function setKhopDepth(state: ViewState, depth: number | null): ViewState {
  return { ...state, khopDepth: depth };
}

export function setPerWorker(state: ViewState, perWorker: boolean): ViewState {
  return { ...state, perWorker };
}

export function resumeLiveFollow(state: ViewState): {
  state: ViewState;
  fetch: number | null;
} {
  const target = state.latestClosed;
  return {
    state: {
      ...state,
      liveFollow: true,
      selectedEpoch: target ?? state.selectedEpoch,
    },
    fetch: target,
  };
}
