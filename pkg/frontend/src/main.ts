// DOM wiring. Controllers own all state; this file only renders their view
// objects and forwards events.

import { ApiClient } from './api.js';
import { toDashboardView, DashboardController } from './dashboard.js';
import { PairReviewController, similarityBadge } from './pairs.js';
import { QueueController, choiceForKey, type Choice } from './queue.js';
import { ReconcileController } from './reconcile.js';

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

function params() {
  const q = new URLSearchParams(location.search);
  return {
    base: q.get('api') ?? '',
    project: q.get('project') ?? 'demo',
    annotator: q.get('annotator') ?? 'anonymous',
    queue: q.get('queue'),
    session: q.get('session'),
    workflow: q.get('workflow'),
    view: q.get('view') ?? 'annotate',
  };
}

function renderQueue(ctl: QueueController) {
  const state = ctl.view;
  const img = $<HTMLImageElement>('#queue-image');
  const meta = $('#queue-meta');
  const notice = $('#queue-notice');
  notice.textContent = state.notice ?? '';
  if (state.drained || !state.item) {
    meta.textContent = 'queue drained — nothing to label';
    img.removeAttribute('src');
    return;
  }
  img.src = state.item.image_url;
  meta.textContent = `${state.item.attribute} — ${state.item.image_id}`;
  $('#queue-guideline').textContent = state.item.guideline;
  const countdown = $('#queue-countdown');
  const tick = () => {
    const left = ctl.leaseRemaining();
    countdown.textContent = `${Math.ceil(left)}s`;
    document.querySelectorAll<HTMLButtonElement>('.choice').forEach((b) => {
      b.disabled = !ctl.canSubmit();
    });
    if (left > 0) setTimeout(tick, 1000);
  };
  tick();
}

async function startAnnotate() {
  const p = params();
  if (!p.queue) throw new Error('annotate view needs ?queue=<session>:<pass>');
  const api = new ApiClient(p.base, p.project);
  const ctl = new QueueController(api, p.queue, p.annotator);

  const submit = async (choice: Choice) => {
    await ctl.choose(choice);
    renderQueue(ctl);
  };
  document.querySelectorAll<HTMLButtonElement>('.choice').forEach((btn) => {
    btn.addEventListener('click', () => void submit(btn.dataset.choice as Choice));
  });
  document.addEventListener('keydown', (ev) => {
    const choice = choiceForKey(ev.key);
    if (choice && ctl.canSubmit()) void submit(choice);
  });
  window.addEventListener('online', () => void ctl.retryPending());
  await ctl.loadNext();
  renderQueue(ctl);
}

function renderPairs(ctl: PairReviewController) {
  const state = ctl.view;
  $('#pair-banner').textContent = state.banner ?? '';
  $('#pair-remaining').textContent = `${state.remaining} pending`;
  const current = state.current;
  if (!current) {
    $('#pair-similarity').textContent = 'review queue drained';
    return;
  }
  $<HTMLImageElement>('#pair-image-a').src = imageUrl(current.image_a);
  $<HTMLImageElement>('#pair-image-b').src = imageUrl(current.image_b);
  $('#pair-similarity').textContent = `similarity ${similarityBadge(current)}`;
}

function imageUrl(imageId: string) {
  const p = params();
  return `${p.base}/api/v1/projects/${p.project}/images/${imageId}`;
}

async function startPairs() {
  const p = params();
  const ctl = new PairReviewController(new ApiClient(p.base, p.project), p.annotator);
  $('#verdict-duplicate').addEventListener('click', async () => {
    await ctl.decide('DUPLICATE');
    renderPairs(ctl);
  });
  $('#verdict-near').addEventListener('click', async () => {
    await ctl.decide('NEAR_DUPLICATE_REJECTED');
    renderPairs(ctl);
  });
  await ctl.load();
  renderPairs(ctl);
}

function renderReconcile(ctl: ReconcileController) {
  const state = ctl.view;
  $('#reconcile-status').textContent = state.status;
  $('#reconcile-error').textContent = state.closeError
    ? `${state.closeError} (${state.closeErrorIds.join(', ')})`
    : '';
  const tbody = $('#reconcile-rows');
  tbody.innerHTML = '';
  for (const row of state.rows) {
    const tr = document.createElement('tr');
    tr.innerHTML = `<td>${row.imageId}</td><td>${row.passA}</td>`
      + `<td>${row.passB}</td><td>${row.consensus ?? '—'}</td>`;
    tbody.appendChild(tr);
  }
}

async function startReconcile() {
  const p = params();
  if (!p.session) throw new Error('reconcile view needs ?session=<id>');
  const ctl = new ReconcileController(new ApiClient(p.base, p.project), p.session, p.annotator);
  $('#reconcile-close').addEventListener('click', async () => {
    await ctl.close();
    renderReconcile(ctl);
  });
  await ctl.load();
  renderReconcile(ctl);
}

function renderDashboard(ctl: DashboardController) {
  const view = ctl.view;
  if (!view) return;
  $('#wf-status').textContent =
    `${view.status} — round ${view.round}, cleaned ${view.cleaned}, `
    + `uncleaned ${view.uncleaned}, est. error ${view.estimatedErrorPct} `
    + `(target ${view.targetErrorPct})`;
  $<HTMLButtonElement>('#wf-step').disabled = !view.stepEnabled;
  $<HTMLButtonElement>('#wf-export').disabled = !view.exportEnabled;
  const cards = $('#wf-bins');
  cards.innerHTML = '';
  for (const card of view.cards) {
    const div = document.createElement('div');
    div.className = `bin-card ${card.overTarget ? 'over-target' : ''}`;
    div.innerHTML = `<h3>${card.votes} votes</h3>`
      + `<p>${card.size} images</p>`
      + `<p>${card.decision}</p>`
      + `<p>audited: ${card.auditedErrorPct}</p>`;
    cards.appendChild(div);
  }
}

async function startDashboard() {
  const p = params();
  if (!p.workflow) throw new Error('dashboard view needs ?workflow=<id>');
  const api = new ApiClient(p.base, p.project);
  const ctl = new DashboardController(api, p.workflow);
  $('#wf-step').addEventListener('click', async () => {
    await ctl.runRound();
    renderDashboard(ctl);
  });
  $('#wf-export').addEventListener('click', async () => {
    const out = await api.exportLabels();
    $('#wf-status').textContent = `exported to ${out.path}`;
  });
  await ctl.refresh();
  renderDashboard(ctl);
}

export { toDashboardView }; // re-export for tests

const starters: Record<string, () => Promise<void>> = {
  annotate: startAnnotate,
  pairs: startPairs,
  reconcile: startReconcile,
  dashboard: startDashboard,
};

if (typeof document !== 'undefined' && document.body?.dataset.app === 'labelforge') {
  const view = params().view;
  document.querySelectorAll<HTMLElement>('.view').forEach((el) => {
    el.hidden = el.id !== `view-${view}`;
  });
  void starters[view]?.();
}
