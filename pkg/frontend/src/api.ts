// Thin typed client over the labelforge HTTP service.

import type {
  ApiErrorBody,
  LabelToken,
  PairView,
  ProjectSummary,
  QueueItem,
  SessionView,
  WorkflowStatus,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly projectId: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T | null> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers: body === undefined ? {} : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (res.status === 204) return null;
    if (!res.ok) {
      let parsed: ApiErrorBody | null = null;
      try {
        parsed = (await res.json()) as ApiErrorBody;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(
        res.status,
        parsed?.error?.code ?? 'HTTP_ERROR',
        parsed?.error?.message ?? `${method} ${path} -> ${res.status}`,
        parsed?.error?.detail ?? {},
      );
    }
    return (await res.json()) as T;
  }

  private get<T>(path: string) {
    return this.request<T>('GET', path);
  }

  private post<T>(path: string, body: unknown) {
    return this.request<T>('POST', path, body);
  }

  private p(path: string) {
    return `/projects/${encodeURIComponent(this.projectId)}${path}`;
  }

  summary() {
    return this.get<ProjectSummary>(this.p('')) as Promise<ProjectSummary>;
  }

  // annotation queue: null means the queue is drained (204)
  nextItem(queue: string, annotator: string) {
    const qs = `queue=${encodeURIComponent(queue)}&annotator=${encodeURIComponent(annotator)}`;
    return this.get<QueueItem>(this.p(`/annotations/next?${qs}`));
  }

  submitSessionLabel(sessionId: string, pass: string, imageId: string,
                     value: LabelToken, annotator: string) {
    return this.post(this.p(`/audit/sessions/${sessionId}/labels`), {
      annotation_pass: pass,
      image_id: imageId,
      value,
      annotator,
    });
  }

  applyLabel(imageId: string, attribute: string, value: LabelToken, source: string) {
    return this.post(this.p('/annotations'), {
      image_id: imageId,
      attribute,
      value,
      source,
    });
  }

  markUnusable(imageId: string, source: string) {
    return this.post(this.p('/annotations/unusable'), { image_id: imageId, source });
  }

  sessionView(sessionId: string, view?: string, annotator?: string) {
    const qs = new URLSearchParams();
    if (view) qs.set('view', view);
    if (annotator) qs.set('annotator', annotator);
    const suffix = qs.size ? `?${qs}` : '';
    return this.get<SessionView>(this.p(`/audit/sessions/${sessionId}${suffix}`)) as
      Promise<SessionView>;
  }

  resolveDisagreement(sessionId: string, imageId: string, value: LabelToken, resolver: string) {
    return this.post(this.p(`/audit/sessions/${sessionId}/reconcile`), {
      image_id: imageId,
      value,
      resolver,
    });
  }

  closeSession(sessionId: string) {
    return this.post(this.p(`/audit/sessions/${sessionId}/close`), {});
  }

  pairs(verdict?: string) {
    const suffix = verdict ? `?verdict=${verdict}` : '';
    return this.get<{ pairs: PairView[]; total: number }>(this.p(`/pairs${suffix}`)) as
      Promise<{ pairs: PairView[]; total: number }>;
  }

  submitVerdict(pairId: string, verdict: string, reviewer: string) {
    return this.post(this.p('/pairs'), { pair_id: pairId, verdict, reviewer });
  }

  workflowStatus(workflowId: string) {
    return this.get<WorkflowStatus>(this.p(`/workflow/${workflowId}/status`)) as
      Promise<WorkflowStatus>;
  }

  runRound(workflowId: string) {
    return this.post(this.p(`/workflow/${workflowId}/round`), {});
  }

  binSample(workflowId: string, votes: number) {
    return this.get<{ votes: number; sample: string[] }>(
      this.p(`/workflow/${workflowId}/bins/${votes}/sample`),
    ) as Promise<{ votes: number; sample: string[] }>;
  }

  auditBin(workflowId: string, votes: number, labels: Record<string, boolean>) {
    return this.post(this.p(`/workflow/${workflowId}/bins/${votes}/audit`), { labels });
  }

  manualBin(workflowId: string, votes: number, labels: Record<string, boolean>) {
    return this.post(this.p(`/workflow/${workflowId}/bins/${votes}/manual`), { labels });
  }

  exportLabels() {
    return this.post<{ path: string; sidecar: string | null }>(this.p('/export'), {}) as
      Promise<{ path: string; sidecar: string | null }>;
  }
}
