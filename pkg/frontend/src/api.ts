/** Typed client for the review service; every mutation is a single POST. */

import type {
  AnomalyDto,
  AnomalyPage,
  DecisionBody,
  QueueFilters,
  RerunStatus,
  RunInfo,
  SeriesPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  runInfo(): Promise<RunInfo> {
    return this.request<RunInfo>("/api/run");
  }

  anomalies(filters: QueueFilters, limit = 200, offset = 0): Promise<AnomalyPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value) params.set(key, value);
    }
    params.set("limit", String(limit));
    params.set("offset", String(offset));
    return this.request<AnomalyPage>(`/api/anomalies?${params.toString()}`);
  }

  series(keyId: string, metric: string, source?: string): Promise<SeriesPayload> {
    const suffix = source ? `?source=${encodeURIComponent(source)}` : "";
    return this.request<SeriesPayload>(
      `/api/series/${encodeURIComponent(keyId)}/${encodeURIComponent(metric)}${suffix}`,
    );
  }

  decide(anomalyId: string, body: DecisionBody): Promise<AnomalyDto> {
    return this.request<AnomalyDto>(
      `/api/anomalies/${encodeURIComponent(anomalyId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }

  rerun(): Promise<{ state: string; progress: string }> {
    return this.request("/api/pipeline/rerun", { method: "POST" });
  }

  rerunStatus(): Promise<RerunStatus> {
    return this.request<RerunStatus>("/api/pipeline/rerun/status");
  }

  /** Poll the rerun endpoint until it settles. */
  async awaitRerun(intervalMs = 400, timeoutMs = 120_000): Promise<RerunStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.rerunStatus();
      if (status.state === "done" || status.state === "failed") return status;
      if (Date.now() > deadline) throw new ApiError(0, "rerun timed out");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
