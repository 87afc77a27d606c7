/** Client state and pure transitions.
 *
 * The store never owns authoritative data: the queue and series always
 * come from the server, statuses change only after a server ack, and a
 * page reload rebuilds everything from GETs.
 */

import type { AnomalyDto, QueueFilters, SeriesPayload } from "./types.js";

export interface Banner {
  kind: "error" | "info";
  text: string;
}

export interface Selection {
  lo: number; // 1-based day index, inclusive
  hi: number;
}

export interface AppState {
  runId: string;
  filters: QueueFilters;
  queue: AnomalyDto[];
  queueTotal: number;
  cursor: number;
  series: SeriesPayload | null;
  overlayVisible: boolean;
  selection: Selection | null;
  banner: Banner | null;
  stale: boolean;
  rerunState: "idle" | "running" | "done" | "failed";
}

export function initialState(): AppState {
  return {
    runId: "",
    filters: { status: "Detected" },
    queue: [],
    queueTotal: 0,
    cursor: 0,
    series: null,
    overlayVisible: true,
    selection: null,
    banner: null,
    stale: false,
    rerunState: "idle",
  };
}

export function withQueue(state: AppState, items: AnomalyDto[], total: number,
                          runId: string): AppState {
  const cursor = Math.min(state.cursor, Math.max(0, items.length - 1));
  return { ...state, queue: items, queueTotal: total, runId, cursor,
           stale: false, banner: null };
}

export function withQueueFailure(state: AppState, message: string): AppState {
  // keep showing what we had, but label it stale and raise a banner
  return { ...state, stale: true,
           banner: { kind: "error", text: `service unreachable: ${message}` } };
}

export function moveCursor(state: AppState, delta: number): AppState {
  if (state.queue.length === 0) return state;
  const cursor = Math.min(state.queue.length - 1, Math.max(0, state.cursor + delta));
  return { ...state, cursor };
}

export function currentAnomaly(state: AppState): AnomalyDto | null {
  return state.queue[state.cursor] ?? null;
}

export function withSeries(state: AppState, series: SeriesPayload): AppState {
  return { ...state, series, selection: null };
}

export function toggleOverlay(state: AppState): AppState {
  return { ...state, overlayVisible: !state.overlayVisible };
}

export function overlayAvailable(state: AppState): boolean {
  const overlay = state.series?.overlay;
  return !!overlay && !overlay.error && Array.isArray(overlay.increments);
}

/** Server acknowledged a decision: swap the record, never invent status. */
export function withDecisionAck(state: AppState, updated: AnomalyDto): AppState {
  const queue = state.queue.map((item) => (item.id === updated.id ? updated : item));
  const series = state.series
    ? {
        ...state.series,
        anomalies: state.series.anomalies.map((a) =>
          a.id === updated.id ? updated : a),
      }
    : null;
  return { ...state, queue, series,
           banner: { kind: "info", text: `${updated.id}: ${updated.status}` } };
}

export function withBanner(state: AppState, banner: Banner | null): AppState {
  return { ...state, banner };
}

export function withRerunState(state: AppState,
                               rerunState: AppState["rerunState"]): AppState {
  return { ...state, rerunState };
}

/**
 * Validate and apply a drag selection for the period override.  The range
 * must be contiguous, inside the series, and must exclude the flagged day
 * of the anomaly under review.
 */
export function applySelection(state: AppState, lo: number, hi: number,
                               flaggedDay: number | null): AppState {
  if (hi < lo) [lo, hi] = [hi, lo];
  const n = state.series?.increments.length ?? 0;
  lo = Math.max(1, lo);
  hi = Math.min(n, hi);
  if (n === 0 || hi < lo) {
    return { ...state, selection: null };
  }
  if (flaggedDay !== null && lo <= flaggedDay && flaggedDay <= hi) {
    return {
      ...state,
      selection: null,
      banner: { kind: "error",
                text: `selection must exclude the flagged day (t=${flaggedDay})` },
    };
  }
  return { ...state, selection: { lo, hi }, banner: null };
}

export function clearSelection(state: AppState): AppState {
  return { ...state, selection: null };
}
