// Pair review: side-by-side images, similarity badge, DUPLICATE /
// NEAR_DUPLICATE verdicts; a 409 renders an arbitration banner and removes
// the pair from this reviewer's queue.

import { ApiClient, ApiError } from './api.js';
import type { PairView } from './types.js';

export interface PairReviewState {
  current: PairView | null;
  remaining: number;
  banner: string | null;
}

export class PairReviewController {
  private queue: PairView[] = [];
  private banner: string | null = null;

  constructor(private api: ApiClient, private reviewer: string) {}

  get view(): PairReviewState {
    return {
      current: this.queue[0] ?? null,
      remaining: this.queue.length,
      banner: this.banner,
    };
  }

  async load(): Promise<PairReviewState> {
    const res = await this.api.pairs('PENDING');
    this.queue = res.pairs;
    return this.view;
  }

  /** Submit a verdict for the current pair; auto-advances to the next. */
  async decide(verdict: 'DUPLICATE' | 'NEAR_DUPLICATE_REJECTED'): Promise<PairReviewState> {
    const pair = this.queue[0];
    if (!pair) return this.view;
    try {
      await this.api.submitVerdict(pair.pair_id, verdict, this.reviewer);
      this.banner = null;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.banner = `pair ${pair.pair_id} is in arbitration: ${err.message}`;
      } else {
        throw err;
      }
    }
    this.queue.shift(); // decided or arbitrated: out of the personal queue
    return this.view;
  }
}

export function similarityBadge(pair: PairView): string {
  return pair.similarity.toFixed(2);
}
