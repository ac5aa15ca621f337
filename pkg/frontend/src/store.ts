// Queue state and submission logic, UI-framework free so it can be tested
// headlessly. Submissions are optimistic: the cursor advances immediately,
// rolls back if the server rejects the judgment, and queues the submission
// locally when the network is down (flushed later).

import { AccuracyByDomain, ApiClient, ApiError, Label, QueueItem } from "./api.js";

export const KEY_LABELS: Record<string, Label> = {
  "1": "correct",
  "2": "partially_correct",
  "3": "incorrect",
};

export type SubmitOutcome = "submitted" | "queued_offline" | "rolled_back" | "ignored";

interface PendingSubmission {
  itemId: string;
  label: Label;
}

export interface DomainProgress {
  judged: number;
  total: number;
}

export class ReviewStore {
  items: QueueItem[] = [];
  cursor = 0;
  /** Queue-wide problem (network down); the queue itself is preserved. */
  banner: string | null = null;
  /** Per-item rejection message. */
  toast: string | null = null;
  accuracy: AccuracyByDomain = {};

  private offline: PendingSubmission[] = [];
  private seenTokens = new Set<string>();

  constructor(private readonly api: ApiClient, public readonly annotator: string) {}

  get allDone(): boolean {
    return this.items.length > 0 && this.items.every((it) => it.status === "judged");
  }

  current(): QueueItem | null {
    if (this.cursor < 0 || this.cursor >= this.items.length) return null;
    return this.items[this.cursor];
  }

  private firstPendingIndex(from = 0): number {
    for (let i = from; i < this.items.length; i++) {
      if (this.items[i].status === "pending") return i;
    }
    return this.items.length;
  }

  async loadQueue(filters?: { domain?: string; status?: string }): Promise<void> {
    try {
      this.items = await this.api.fetchQueue(filters);
      this.cursor = this.firstPendingIndex();
      this.banner = null;
    } catch (err) {
      // show the retry banner, keep whatever queue we had
      this.banner =
        err instanceof ApiError
          ? `Queue fetch failed (${err.status}); retrying will not lose work.`
          : "Cannot reach the annotation service; retrying will not lose work.";
    }
  }

  /**
   * Handle one labeling keypress. The caller passes a token unique to the
   * physical keypress; replays of the same token never produce a second
   * submission.
   */
  async submitLabel(key: string, token: string): Promise<SubmitOutcome> {
    const label = KEY_LABELS[key];
    if (!label) return "ignored";
    if (this.seenTokens.has(token)) return "ignored";
    const item = this.current();
    if (item === null || item.status !== "pending") return "ignored";
    this.seenTokens.add(token);

    const index = this.cursor;
    item.status = "judged";
    this.cursor = this.firstPendingIndex(index);
    this.toast = null;

    try {
      await this.api.submitJudgment(item.item_id, label, this.annotator);
      return "submitted";
    } catch (err) {
      if (err instanceof ApiError) {
        // server rejected it: put the item back and return to it
        item.status = "pending";
        this.cursor = index;
        this.toast = `Server rejected ${item.item_id}: ${err.message}`;
        this.seenTokens.delete(token);
        return "rolled_back";
      }
      // offline: keep the optimistic advance, flush later
      this.offline.push({ itemId: item.item_id, label });
      this.banner = `Offline: ${this.offline.length} submission(s) queued.`;
      return "queued_offline";
    }
  }

  get offlineCount(): number {
    return this.offline.length;
  }

  /** Re-send queued offline submissions; stops at the first network failure. */
  async flushOffline(): Promise<number> {
    let flushed = 0;
    while (this.offline.length > 0) {
      const next = this.offline[0];
      try {
        await this.api.submitJudgment(next.itemId, next.label, this.annotator);
      } catch (err) {
        if (err instanceof ApiError) {
          // rejected by the server: drop it and surface the problem
          this.toast = `Server rejected queued ${next.itemId}: ${err.message}`;
          this.offline.shift();
          continue;
        }
        break;
      }
      this.offline.shift();
      flushed += 1;
    }
    if (this.offline.length === 0) this.banner = null;
    return flushed;
  }

  async refreshAccuracy(): Promise<AccuracyByDomain> {
    this.accuracy = await this.api.fetchAccuracy();
    return this.accuracy;
  }

  progress(): Record<string, DomainProgress> {
    const byDomain: Record<string, DomainProgress> = {};
    for (const item of this.items) {
      const entry = (byDomain[item.domain] ??= { judged: 0, total: 0 });
      entry.total += 1;
      if (item.status === "judged") entry.judged += 1;
    }
    return byDomain;
  }
}
