// Reconciliation view model. Side-by-side pass values are only available
// once the session has left OPEN; while annotating, each pass sees only
// its own labels.

import { ApiClient, ApiError } from './api.js';
import type { LabelToken, SessionView } from './types.js';

export interface DisagreementRow {
  imageId: string;
  passA: LabelToken;
  passB: LabelToken;
  consensus: LabelToken | null;
}

export interface ReconcileState {
  status: SessionView['status'];
  rows: DisagreementRow[];
  unresolved: number;
  closeError: string | null;
  closeErrorIds: string[];
}

export class ReconcileController {
  private state: ReconcileState = {
    status: 'OPEN',
    rows: [],
    unresolved: 0,
    closeError: null,
    closeErrorIds: [],
  };

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private resolver: string,
  ) {}

  get view(): ReconcileState {
    return { ...this.state, rows: [...this.state.rows] };
  }

  async load(): Promise<ReconcileState> {
    const session = await this.api.sessionView(this.sessionId, 'reconcile');
    const rows: DisagreementRow[] = (session.disagreements ?? []).map((imageId) => ({
      imageId,
      passA: session.pass_a![imageId],
      passB: session.pass_b![imageId],
      consensus: session.consensus?.[imageId] ?? null,
    }));
    this.state = {
      status: session.status,
      rows,
      unresolved: rows.filter((r) => r.consensus === null).length,
      closeError: null,
      closeErrorIds: [],
    };
    return this.view;
  }

  async resolve(imageId: string, value: LabelToken): Promise<ReconcileState> {
    await this.api.resolveDisagreement(this.sessionId, imageId, value, this.resolver);
    return this.load();
  }

  /** Close the session; a 409 surfaces the unresolved ids in the view. */
  async close(): Promise<ReconcileState> {
    try {
      await this.api.closeSession(this.sessionId);
      return this.load();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state = {
          ...this.state,
          closeError: `${err.code}: ${err.message}`,
          closeErrorIds: (err.detail.image_ids as string[]) ?? [],
        };
        return this.view;
      }
      throw err;
    }
  }
}
