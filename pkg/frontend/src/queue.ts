/** Review-queue state machine, kept free of DOM so it unit-tests directly.
 *
 * Decisions advance the queue optimistically. A 409 means another tab or
 * annotator got there first: the card is reported as already reviewed and the
 * advance stands. Any other failure rolls the queue back to the same card.
 */

import { ApiClient, ApiError, Decision, DecisionBody, ReviewCard } from "./api.js";

export type DecisionOutcome = "applied" | "already-reviewed" | "failed" | "invalid";

export interface QueueEvents {
  onCard(card: ReviewCard | null): void;
  onToast(message: string, kind: "info" | "error"): void;
}

export interface EditFields {
  edited_question?: string;
  edited_answer?: string;
}

const REFILL_BATCH = 20;

export class ReviewQueue {
  private cards: ReviewCard[] = [];
  private position = 0;
  private drained = false;

  constructor(
    private readonly api: Pick<ApiClient, "fetchPending" | "submitReview">,
    private readonly annotatorId: string,
    private readonly events: QueueEvents,
  ) {}

  current(): ReviewCard | null {
    return this.cards[this.position] ?? null;
  }

  remaining(): number {
    return Math.max(this.cards.length - this.position, 0);
  }

  async refill(): Promise<void> {
    if (this.drained && this.remaining() === 0) {
      this.events.onCard(null);
      return;
    }
    if (this.remaining() > 0) {
      this.events.onCard(this.current());
      return;
    }
    const seen = new Set(this.cards.map((card) => card.record_id));
    const fetched = await this.api.fetchPending(REFILL_BATCH);
    const fresh = fetched.filter((card) => !seen.has(card.record_id));
    if (fresh.length === 0) {
      this.drained = true;
    }
    this.cards.push(...fresh);
    this.events.onCard(this.current());
  }

  /** Submit a decision for the current card and advance optimistically. */
  async decide(decision: Decision, edits: EditFields = {}): Promise<DecisionOutcome> {
    const card = this.current();
    if (card === null) return "invalid";
    if (decision === "edit" && !edits.edited_question && !edits.edited_answer) {
      this.events.onToast("edit needs a changed question or answer", "error");
      return "invalid";
    }
    const body: DecisionBody = {
      decision,
      annotator_id: this.annotatorId,
      ...edits,
    };
    this.position += 1;
    this.events.onCard(this.current());
    try {
      await this.api.submitReview(card.record_id, body);
      return "applied";
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.events.onToast(`${card.record_id} was already reviewed`, "info");
        return "already-reviewed";
      }
      this.position -= 1;
      this.events.onCard(this.current());
      const message = error instanceof Error ? error.message : String(error);
      this.events.onToast(`decision failed: ${message}`, "error");
      return "failed";
    }
  }
}
