import { describe, expect, it } from 'vitest';

import { toDashboardView } from '../src/dashboard.js';
import type { WorkflowStatus } from '../src/types.js';

function status(overrides: Partial<WorkflowStatus> = {}): WorkflowStatus {
  return {
    workflow_id: 'w1',
    attribute: 'MSO',
    status: 'RUNNING',
    round: 1,
    target_error: 0.05,
    k: 3,
    cleaned: 120,
    uncleaned: 880,
    estimated_error: 0.012,
    bins: [
      { votes: 0, size: 400, decision: 'UNDECIDED', audited_error: null, audited_ci: null },
      { votes: 1, size: 30, decision: 'UNDECIDED', audited_error: null, audited_ci: null },
      { votes: 2, size: 50, decision: 'NEXT_ROUND', audited_error: 0.12, audited_ci: [0.06, 0.2] },
      { votes: 3, size: 400, decision: 'ACCEPTED', audited_error: 0.02, audited_ci: [0.0, 0.07] },
    ],
    history: [],
    ...overrides,
  };
}

describe('toDashboardView', () => {
  it('renders k+1 bin cards', () => {
    const view = toDashboardView(status());
    expect(view.cards).toHaveLength(4);
    expect(view.cards.map((c) => c.votes)).toEqual([0, 1, 2, 3]);
  });

  it('marks audited errors against the target line', () => {
    const view = toDashboardView(status());
    expect(view.cards[2].overTarget).toBe(true);
    expect(view.cards[3].overTarget).toBe(false);
    expect(view.cards[3].auditedErrorPct).toBe('2.0%');
    expect(view.cards[0].auditedErrorPct).toBe('-');
  });

  it('enables audit only for undecided nonempty bins', () => {
    const view = toDashboardView(status());
    expect(view.cards[0].auditEnabled).toBe(true);
    expect(view.cards[2].auditEnabled).toBe(false); // already routed
    expect(view.cards[3].auditEnabled).toBe(false); // accepted
  });

  it('enables manual labeling only under the size threshold', () => {
    const view = toDashboardView(status(), 100);
    expect(view.cards[0].manualEnabled).toBe(false); // 400 > 100
    expect(view.cards[1].manualEnabled).toBe(true);
    expect(view.cards[2].manualEnabled).toBe(true);  // NEXT_ROUND may be hand-labelled
  });

  it('disables actions on terminal states and enables export on CONVERGED', () => {
    const converged = toDashboardView(status({ status: 'CONVERGED', uncleaned: 0 }));
    expect(converged.stepEnabled).toBe(false);
    expect(converged.exportEnabled).toBe(true);
    expect(converged.cards.every((c) => !c.auditEnabled && !c.manualEnabled)).toBe(true);

    const exhausted = toDashboardView(status({ status: 'EXHAUSTED' }));
    expect(exhausted.stepEnabled).toBe(false);
    expect(exhausted.exportEnabled).toBe(false);
  });

  it('formats the status numbers it was given, no client-side math', () => {
    const view = toDashboardView(status());
    expect(view.estimatedErrorPct).toBe('1.20%');
    expect(view.targetErrorPct).toBe('5.0%');
    expect(view.cleaned).toBe(120);
    expect(view.uncleaned).toBe(880);
  });
});
