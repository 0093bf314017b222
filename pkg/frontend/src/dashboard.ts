// Workflow dashboard view model: pool sizes, one card per agreement bin,
// audited errors against the target line, and the action buttons' enabled
// state. All numbers come straight from the status endpoint.

import { ApiClient } from './api.js';
import type { BinView, WorkflowStatus } from './types.js';

export interface BinCard {
  votes: number;
  size: number;
  decision: BinView['decision'];
  auditedErrorPct: string;   // "-" until audited
  overTarget: boolean;
  auditEnabled: boolean;
  manualEnabled: boolean;
}

export interface DashboardView {
  status: WorkflowStatus['status'];
  round: number;
  cleaned: number;
  uncleaned: number;
  estimatedErrorPct: string;
  targetErrorPct: string;
  cards: BinCard[];
  stepEnabled: boolean;
  exportEnabled: boolean;
}

export function toDashboardView(status: WorkflowStatus,
                                smallBinThreshold = 2000): DashboardView {
  const terminal = status.status !== 'RUNNING';
  const cards: BinCard[] = status.bins.map((b) => ({
    votes: b.votes,
    size: b.size,
    decision: b.decision,
    auditedErrorPct: b.audited_error === null ? '-'
      : `${(100 * b.audited_error).toFixed(1)}%`,
    overTarget: b.audited_error !== null && b.audited_error > status.target_error,
    auditEnabled: !terminal && b.decision === 'UNDECIDED' && b.size > 0,
    manualEnabled: !terminal
      && (b.decision === 'UNDECIDED' || b.decision === 'NEXT_ROUND')
      && b.size > 0 && b.size <= smallBinThreshold,
  }));
  return {
    status: status.status,
    round: status.round,
    cleaned: status.cleaned,
    uncleaned: status.uncleaned,
    estimatedErrorPct: `${(100 * status.estimated_error).toFixed(2)}%`,
    targetErrorPct: `${(100 * status.target_error).toFixed(1)}%`,
    cards,
    stepEnabled: !terminal,
    exportEnabled: status.status === 'CONVERGED',
  };
}

export class DashboardController {
  private current: DashboardView | null = null;

  constructor(private api: ApiClient, private workflowId: string) {}

  get view(): DashboardView | null {
    return this.current;
  }

  async refresh(): Promise<DashboardView> {
    this.current = toDashboardView(await this.api.workflowStatus(this.workflowId));
    return this.current;
  }

  /** Triggered by the step button; refreshes only this dashboard's data. */
  async runRound(): Promise<DashboardView> {
    await this.api.runRound(this.workflowId);
    return this.refresh();
  }

  async auditBin(votes: number, labels: Record<string, boolean>): Promise<DashboardView> {
    await this.api.auditBin(this.workflowId, votes, labels);
    return this.refresh();
  }

  async manualBin(votes: number, labels: Record<string, boolean>): Promise<DashboardView> {
    await this.api.manualBin(this.workflowId, votes, labels);
    return this.refresh();
  }
}
