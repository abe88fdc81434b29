/** Typed client for the review-service JSON endpoints.
 *
 * The UI talks to exactly three routes; POST /api/review/{id} is the only
 * state-changing request it ever issues.
 */

export interface ReviewCard {
  record_id: string;
  image_id: string;
  conflict_type: "object" | "attribute" | "relationship";
  question: string;
  answer: string;
  review_status: "pending" | "accepted" | "rejected" | "edited";
  image_url: string | null;
  provenance: {
    base_question: string;
    base_answer: string;
    components_modified: string[];
    prompts_used: string[];
  };
  edited_question: string | null;
  edited_answer: string | null;
}

export type Decision = "accept" | "reject" | "edit";

export interface DecisionBody {
  decision: Decision;
  annotator_id: string;
  edited_question?: string;
  edited_answer?: string;
}

export interface ReviewProgress {
  pending: number;
  accepted: number;
  rejected: number;
  edited: number;
  reviewed_fraction: number;
}

export interface StatsPayload {
  dataset: {
    n: number;
    type_counts: Record<string, number>;
    type_fractions: Record<string, number>;
    review_status_counts: Record<string, number>;
    mean_question_tokens: number;
    mean_answer_tokens: number;
  };
  review: ReviewProgress;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async fetchPending(limit: number): Promise<ReviewCard[]> {
    const response = await fetch(`${this.baseUrl}/api/pending?limit=${limit}`);
    return parseOrThrow<ReviewCard[]>(response);
  }

  async submitReview(recordId: string, body: DecisionBody): Promise<ReviewCard> {
    const response = await fetch(
      `${this.baseUrl}/api/review/${encodeURIComponent(recordId)}`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    return parseOrThrow<ReviewCard>(response);
  }

  async fetchStats(): Promise<StatsPayload> {
    const response = await fetch(`${this.baseUrl}/api/stats`);
    return parseOrThrow<StatsPayload>(response);
  }
}
