// Payload shapes of the /api/v1 service. The UI never computes metrics
// itself; every number shown comes from one of these responses.

export type LabelToken = 1 | -1 | 0;

export interface QueueItem {
  queue: string;
  session_id: string;
  annotation_pass: string;
  image_id: string;
  attribute: string;
  guideline: string;
  image_url: string;
  lease_seconds: number;
}

export interface SessionView {
  attribute: string;
  target_value: LabelToken;
  status: 'OPEN' | 'RECONCILING' | 'CLOSED';
  sample_size: number;
  sample_ids: string[];
  labels?: Record<string, LabelToken>;
  pass_a?: Record<string, LabelToken>;
  pass_b?: Record<string, LabelToken>;
  consensus?: Record<string, LabelToken>;
  disagreements?: string[];
}

export interface PairView {
  pair_id: string;
  image_a: string;
  image_b: string;
  similarity: number;
  verdict: 'PENDING' | 'DUPLICATE' | 'NEAR_DUPLICATE_REJECTED';
  reviewer: string | null;
  arbitration: boolean;
}

export interface BinView {
  votes: number;
  size: number;
  decision: 'UNDECIDED' | 'ACCEPTED' | 'MANUAL_LABEL' | 'NEXT_ROUND';
  audited_error: number | null;
  audited_ci: [number, number] | null;
}

export interface WorkflowStatus {
  workflow_id: string;
  attribute: string;
  status: 'RUNNING' | 'CONVERGED' | 'EXHAUSTED';
  round: number;
  target_error: number;
  k: number;
  cleaned: number;
  uncleaned: number;
  estimated_error: number;
  bins: BinView[];
  history: Array<Record<string, unknown>>;
}

export interface ProjectSummary {
  project_id: string;
  images: number;
  unusable: number;
  attributes: string[];
  sessions: string[];
  workflows: string[];
  guidelines: Record<string, string>;
}

export interface ApiErrorBody {
  error: { code: string; message: string; detail: Record<string, unknown> };
}
