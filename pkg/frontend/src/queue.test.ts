import { beforeEach, describe, expect, it } from "vitest";

import { ApiError, DecisionBody, ReviewCard } from "./api.js";
import { ReviewQueue } from "./queue.js";

function card(recordId: string): ReviewCard {
  return {
    record_id: recordId,
    image_id: `img-${recordId}`,
    conflict_type: "object",
    question: `Question ${recordId}?`,
    answer: `Answer ${recordId}.`,
    review_status: "pending",
    image_url: null,
    provenance: {
      base_question: "Base?",
      base_answer: "Base.",
      components_modified: [],
      prompts_used: [],
    },
    edited_question: null,
    edited_answer: null,
  };
}

/** In-memory stand-in for the review service with one-shot semantics. */
class FakeServer {
  posts: { recordId: string; body: DecisionBody }[] = [];
  statuses = new Map<string, string>();
  failNextWith: number | null = null;

  constructor(private cards: ReviewCard[]) {
    for (const entry of cards) this.statuses.set(entry.record_id, "pending");
  }

  fetchPending = async (limit: number): Promise<ReviewCard[]> =>
    this.cards
      .filter((entry) => this.statuses.get(entry.record_id) === "pending")
      .slice(0, limit);

  submitReview = async (recordId: string, body: DecisionBody): Promise<ReviewCard> => {
    if (this.failNextWith !== null) {
      const status = this.failNextWith;
      this.failNextWith = null;
      throw new ApiError(status, "injected failure");
    }
    this.posts.push({ recordId, body });
    if (this.statuses.get(recordId) !== "pending") {
      throw new ApiError(409, "already reviewed");
    }
    this.statuses.set(recordId, body.decision === "edit" ? "edited" : `${body.decision}ed`);
    return { ...card(recordId), review_status: "accepted" };
  };
}

describe("ReviewQueue", () => {
  let server: FakeServer;
  let shown: (ReviewCard | null)[];
  let toasts: { message: string; kind: string }[];
  let queue: ReviewQueue;

  beforeEach(() => {
    server = new FakeServer(Array.from({ length: 10 }, (_, i) => card(`r${i}`)));
    shown = [];
    toasts = [];
    queue = new ReviewQueue(server, "ann-1", {
      onCard: (c) => shown.push(c),
      onToast: (message, kind) => toasts.push({ message, kind }),
    });
  });

  it("drives the full accept/reject/edit round trip", async () => {
    await queue.refill();
    for (let i = 0; i < 4; i++) await queue.decide("accept");
    for (let i = 0; i < 3; i++) await queue.decide("reject");
    for (let i = 0; i < 3; i++) {
      await queue.decide("edit", { edited_answer: `fixed ${i}` });
    }
    expect(server.posts).toHaveLength(10);
    const decisions = server.posts.map((p) => p.body.decision);
    expect(decisions.filter((d) => d === "accept")).toHaveLength(4);
    expect(decisions.filter((d) => d === "reject")).toHaveLength(3);
    expect(decisions.filter((d) => d === "edit")).toHaveLength(3);
    await queue.refill();
    expect(queue.current()).toBeNull();
  });

  it("advances optimistically before the POST resolves", async () => {
    await queue.refill();
    const before = queue.current()?.record_id;
    const pending = queue.decide("accept");
    expect(queue.current()?.record_id).not.toBe(before);
    await pending;
  });

  it("marks 409 conflicts and keeps advancing", async () => {
    await queue.refill();
    server.statuses.set("r0", "accepted"); // another tab reviewed it first
    const outcome = await queue.decide("accept");
    expect(outcome).toBe("already-reviewed");
    expect(toasts.some((t) => t.message.includes("already reviewed"))).toBe(true);
    expect(queue.current()?.record_id).toBe("r1");
  });

  it("rolls back on non-conflict failures", async () => {
    await queue.refill();
    server.failNextWith = 500;
    const outcome = await queue.decide("accept");
    expect(outcome).toBe("failed");
    expect(queue.current()?.record_id).toBe("r0");
    expect(toasts.at(-1)?.kind).toBe("error");
  });

  it("refuses empty edits locally, mirroring the server 422", async () => {
    await queue.refill();
    const outcome = await queue.decide("edit", {});
    expect(outcome).toBe("invalid");
    expect(server.posts).toHaveLength(0);
    expect(queue.current()?.record_id).toBe("r0");
  });

  it("reports null when the server has nothing pending", async () => {
    server = new FakeServer([]);
    queue = new ReviewQueue(server, "ann-1", {
      onCard: (c) => shown.push(c),
      onToast: () => undefined,
    });
    await queue.refill();
    await queue.refill();
    expect(shown.at(-1)).toBeNull();
    expect(queue.current()).toBeNull();
  });
});
