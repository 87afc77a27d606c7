/** DTOs mirroring the review service JSON contract. */

export type AnomalyKind = "OdViolation" | "PointAnomaly" | "ChangePoint";
export type AnomalyStatus = "Detected" | "Confirmed" | "Dismissed" | "Repaired";
export type Verdict = "Confirm" | "Dismiss";

export interface AnomalyDto {
  id: string;
  level: string;
  fips: string | null;
  county: string | null;
  state: string | null;
  metric: string;
  source: string;
  kind: AnomalyKind;
  t_index: number;
  date: string;
  magnitude: number;
  detail: Record<string, unknown>;
  status: AnomalyStatus;
}

export interface AnomalyPage {
  run_id: string;
  total: number;
  offset: number;
  limit: number;
  items: AnomalyDto[];
}

export interface OverlayDto {
  pending_ids: string[];
  increments?: number[];
  cumulative?: number[];
  estimates?: Record<string, number>;
  error?: string;
}

export interface SeriesPayload {
  run_id: string;
  key: { level: string; id: string; county: string | null; state: string | null };
  metric: string;
  source: string;
  start_date: string;
  raw: number[];
  increments: number[];
  repaired: number[] | null;
  anomalies: AnomalyDto[];
  overlay: OverlayDto | null;
}

export interface RunInfo {
  run_id: string;
  level: string;
  metrics: string[];
  sources: string[];
  anomalies: number;
}

export interface RerunStatus {
  state: "idle" | "running" | "done" | "failed";
  run_id: string;
  error: string | null;
}

export interface DecisionBody {
  verdict: Verdict;
  period_override?: [number, number];
  method_override?: string;
  manual_value?: number;
  note?: string;
  actor?: string;
}

export interface QueueFilters {
  status?: AnomalyStatus;
  kind?: AnomalyKind;
  state?: string;
  metric?: string;
  source?: string;
}

/** Anomaly id of the anomaly a key identifies, e.g. "New Jersey". */
export function anomalyPlace(a: AnomalyDto): string {
  return a.county ? `${a.county}, ${a.state}` : (a.state ?? "US");
}
