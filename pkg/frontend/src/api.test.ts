import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "./api.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("fetches pending cards with the limit parameter", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse([{ record_id: "r1" }]));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient();
    const cards = await client.fetchPending(5);
    expect(cards).toEqual([{ record_id: "r1" }]);
    expect(fetchMock).toHaveBeenCalledWith("/api/pending?limit=5");
  });

  it("posts review decisions as JSON", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ record_id: "r1" }));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient();
    await client.submitReview("r1", { decision: "accept", annotator_id: "a" });
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/api/review/r1");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body)).toEqual({ decision: "accept", annotator_id: "a" });
  });

  it("maps 409 to an ApiError carrying the status", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValue(jsonResponse({ detail: "already reviewed" }, 409));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient();
    await expect(
      client.submitReview("r1", { decision: "accept", annotator_id: "a" }),
    ).rejects.toMatchObject({ status: 409, message: "already reviewed" });
  });

  it("issues only GET requests apart from the review POST", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ dataset: {}, review: {} }));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient();
    await client.fetchStats();
    await client.fetchPending(1).catch(() => undefined);
    for (const [, init] of fetchMock.mock.calls) {
      expect(init?.method ?? "GET").toBe("GET");
    }
  });

  it("wraps non-JSON failures in ApiError", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValue(new Response("boom", { status: 500, statusText: "Server Error" }));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient();
    await expect(client.fetchPending(1)).rejects.toBeInstanceOf(ApiError);
  });
});
