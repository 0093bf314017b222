// Annotation queue controller: one item at a time, four choices, a lease
// countdown, and an offline retry buffer so no decision is silently lost.

import { ApiClient, ApiError } from './api.js';
import type { LabelToken, QueueItem } from './types.js';

export type Choice = 'TRUE' | 'FALSE' | 'INFO_NOT_VISIBLE' | 'UNUSABLE';

export const CHOICE_TOKENS: Record<Exclude<Choice, 'UNUSABLE'>, LabelToken> = {
  TRUE: 1,
  FALSE: -1,
  INFO_NOT_VISIBLE: 0,
};

// keys 1/2/3/4 map to the four choices, in display order
export function choiceForKey(key: string): Choice | null {
  switch (key) {
    case '1': return 'TRUE';
    case '2': return 'FALSE';
    case '3': return 'INFO_NOT_VISIBLE';
    case '4': return 'UNUSABLE';
    default: return null;
  }
}

export interface PendingSubmission {
  item: QueueItem;
  choice: Choice;
  annotator: string;
}

export interface QueueViewState {
  item: QueueItem | null;
  drained: boolean;
  leaseRemaining: number;     // seconds; submission disabled at 0
  notice: string | null;
  pendingRetries: number;
}

export class QueueController {
  private state: QueueViewState = {
    item: null,
    drained: false,
    leaseRemaining: 0,
    notice: null,
    pendingRetries: 0,
  };
  private retryBuffer: PendingSubmission[] = [];
  private leasedAt = 0;

  constructor(
    private api: ApiClient,
    private queue: string,
    private annotator: string,
    private now: () => number = () => Date.now(),
  ) {}

  get view(): QueueViewState {
    return { ...this.state, pendingRetries: this.retryBuffer.length };
  }

  get sessionId(): string {
    return this.queue.slice(0, this.queue.lastIndexOf(':'));
  }

  get pass(): string {
    return this.queue.slice(this.queue.lastIndexOf(':') + 1);
  }

  leaseRemaining(): number {
    if (!this.state.item) return 0;
    const elapsed = (this.now() - this.leasedAt) / 1000;
    return Math.max(0, this.state.item.lease_seconds - elapsed);
  }

  canSubmit(): boolean {
    return this.state.item !== null && this.leaseRemaining() > 0;
  }

  async loadNext(): Promise<QueueViewState> {
    const item = await this.api.nextItem(this.queue, this.annotator);
    this.leasedAt = this.now();
    this.state = {
      ...this.state,
      item,
      drained: item === null,
      leaseRemaining: item ? item.lease_seconds : 0,
    };
    return this.view;
  }

  /** Submit the current item; on network failure the decision is buffered. */
  async choose(choice: Choice): Promise<QueueViewState> {
    const item = this.state.item;
    if (!item) return this.view;
    if (!this.canSubmit()) {
      // lease ran out: the item goes back to the queue server-side
      this.state = { ...this.state, item: null, notice: 'lease expired; item returned to queue' };
      return this.loadNext();
    }
    try {
      await this.submit({ item, choice, annotator: this.annotator });
      this.state = { ...this.state, notice: null };
    } catch (err) {
      if (err instanceof ApiError) throw err; // domain refusal: surface it
      this.retryBuffer.push({ item, choice, annotator: this.annotator });
      this.state = { ...this.state, notice: 'offline: decision buffered for retry' };
    }
    return this.loadNext();
  }

  private async submit(p: PendingSubmission): Promise<void> {
    if (p.choice === 'UNUSABLE') {
      await this.api.markUnusable(p.item.image_id, p.annotator);
      return;
    }
    await this.api.submitSessionLabel(
      p.item.session_id, p.item.annotation_pass, p.item.image_id,
      CHOICE_TOKENS[p.choice], p.annotator,
    );
  }

  /** Flush the offline buffer; returns how many submissions are still stuck. */
  async retryPending(): Promise<number> {
    const stuck: PendingSubmission[] = [];
    for (const pending of this.retryBuffer) {
      try {
        await this.submit(pending);
      } catch (err) {
        if (!(err instanceof ApiError)) stuck.push(pending);
        // ApiError: the server refused (e.g. session closed); drop, not silent:
        // the notice reports what happened
      }
    }
    this.retryBuffer = stuck;
    this.state = {
      ...this.state,
      notice: stuck.length ? `still offline: ${stuck.length} buffered` : null,
    };
    return stuck.length;
  }
}
