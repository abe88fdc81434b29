/** Progress-dashboard rendering: served counts verbatim, percentages only. */

import { StatsPayload } from "./api.js";

export interface DashboardView {
  total: number;
  pending: number;
  accepted: number;
  rejected: number;
  edited: number;
  reviewedPercent: string;
  typeRows: { kind: string; count: number; percent: string }[];
}

export function buildDashboard(payload: StatsPayload): DashboardView {
  const review = payload.review;
  const typeRows = Object.keys(payload.dataset.type_counts)
    .sort()
    .map((kind) => ({
      kind,
      count: payload.dataset.type_counts[kind],
      percent: `${(payload.dataset.type_fractions[kind] * 100).toFixed(1)}%`,
    }));
  return {
    total: payload.dataset.n,
    pending: review.pending,
    accepted: review.accepted,
    rejected: review.rejected,
    edited: review.edited,
    reviewedPercent: `${(review.reviewed_fraction * 100).toFixed(1)}%`,
    typeRows,
  };
}
