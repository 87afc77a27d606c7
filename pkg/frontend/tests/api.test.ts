import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("builds anomaly queries from filters", async () => {
    const calls: string[] = [];
    const client = new ApiClient("", async (url) => {
      calls.push(url);
      return jsonResponse({ run_id: "r", total: 0, offset: 0, limit: 200, items: [] });
    });
    await client.anomalies({ status: "Detected", kind: "PointAnomaly" }, 50, 10);
    expect(calls[0]).toBe(
      "/api/anomalies?status=Detected&kind=PointAnomaly&limit=50&offset=10");
  });

  it("url-encodes series keys", async () => {
    const calls: string[] = [];
    const client = new ApiClient("", async (url) => {
      calls.push(url);
      return jsonResponse({});
    });
    await client.series("New Jersey", "death", "NYT");
    expect(calls[0]).toBe("/api/series/New%20Jersey/death?source=NYT");
  });

  it("POSTs decisions as a single mutation", async () => {
    const seen: { url: string; init?: RequestInit }[] = [];
    const client = new ApiClient("", async (url, init) => {
      seen.push({ url, init });
      return jsonResponse({ id: "a1", status: "Confirmed" });
    });
    await client.decide("a1", { verdict: "Confirm", period_override: [3, 9] });
    expect(seen).toHaveLength(1);
    expect(seen[0]!.init?.method).toBe("POST");
    expect(JSON.parse(String(seen[0]!.init?.body))).toEqual({
      verdict: "Confirm", period_override: [3, 9],
    });
  });

  it("surfaces HTTP errors with status and detail", async () => {
    const client = new ApiClient("", async () =>
      jsonResponse({ detail: "anomaly already repaired in this run" }, 409));
    await expect(client.decide("a1", { verdict: "Dismiss" }))
      .rejects.toMatchObject({ status: 409, message: "anomaly already repaired in this run" });
  });

  it("wraps network failures as status 0", async () => {
    const client = new ApiClient("", async () => {
      throw new TypeError("fetch failed");
    });
    const error = await client.runInfo().catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(0);
  });

  it("polls rerun status until it settles", async () => {
    const states = ["running", "running", "done"];
    let i = 0;
    const client = new ApiClient("", async (url) => {
      expect(url).toBe("/api/pipeline/rerun/status");
      return jsonResponse({ state: states[Math.min(i++, 2)], run_id: "r2", error: null });
    });
    const status = await client.awaitRerun(1);
    expect(status.state).toBe("done");
    expect(i).toBe(3);
  });
});
