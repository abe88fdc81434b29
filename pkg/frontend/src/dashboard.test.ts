import { describe, expect, it } from "vitest";

import { StatsPayload } from "./api.js";
import { buildDashboard } from "./dashboard.js";

function payload(overrides: Partial<StatsPayload["review"]> = {}): StatsPayload {
  return {
    dataset: {
      n: 10,
      type_counts: { object: 5, attribute: 3, relationship: 2 },
      type_fractions: { object: 0.5, attribute: 0.3, relationship: 0.2 },
      review_status_counts: { pending: 0, accepted: 4, rejected: 3, edited: 3 },
      mean_question_tokens: 6.1,
      mean_answer_tokens: 8.0,
    },
    review: {
      pending: 0,
      accepted: 4,
      rejected: 3,
      edited: 3,
      reviewed_fraction: 1.0,
      ...overrides,
    },
  };
}

describe("buildDashboard", () => {
  it("renders the served counts verbatim", () => {
    const view = buildDashboard(payload());
    expect(view.total).toBe(10);
    expect([view.accepted, view.rejected, view.edited]).toEqual([4, 3, 3]);
    expect(view.pending).toBe(0);
  });

  it("zero state", () => {
    const view = buildDashboard({
      dataset: {
        n: 0,
        type_counts: { object: 0, attribute: 0, relationship: 0 },
        type_fractions: { object: 0, attribute: 0, relationship: 0 },
        review_status_counts: { pending: 0, accepted: 0, rejected: 0, edited: 0 },
        mean_question_tokens: 0,
        mean_answer_tokens: 0,
      },
      review: { pending: 0, accepted: 0, rejected: 0, edited: 0, reviewed_fraction: 0 },
    });
    expect(view.total).toBe(0);
    expect(view.reviewedPercent).toBe("0.0%");
  });

  it("mid-progress percentages come only from served fractions", () => {
    const view = buildDashboard(payload({ pending: 5, reviewed_fraction: 0.5 }));
    expect(view.reviewedPercent).toBe("50.0%");
    expect(view.typeRows).toEqual([
      { kind: "attribute", count: 3, percent: "30.0%" },
      { kind: "object", count: 5, percent: "50.0%" },
      { kind: "relationship", count: 2, percent: "20.0%" },
    ]);
  });
});
