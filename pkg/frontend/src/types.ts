/** JSON payloads of the review service, mirrored verbatim. */

export type Phase = "idle" | "training" | "awaiting_labels" | "stopped";

export type Label = "good" | "bad" | "neutral";

/** One free topic of the current candidate, as served inside /session. */
export interface TopicCard {
  topic: number;
  coherence: number;
  intratext: number | null;
  size: number;
  degenerate: boolean;
  top_tokens: string[];
  role: string;
  auto_label: Label | null;
  human_label: Label | null;
  effective_label: Label | null;
}

/** /topics/{id} adds the head of the topic's word distribution. */
export interface TopicDetail extends TopicCard {
  phi_head: { token: string; p: number }[];
}

export interface Thresholds {
  theta_good: number;
  theta_bad: number;
  source: string;
}

export interface BankCounts {
  good: number;
  bad: number;
  total: number;
}

/** GET /session body. */
export interface SessionState {
  phase: Phase;
  stop_reason: string | null;
  iteration: number;
  iterations_done: number;
  progress: number | null;
  num_topics: number;
  criterion: string;
  good_quota: number;
  max_iterations: number;
  thresholds: Thresholds;
  bank: BankCounts;
  cards: TopicCard[];
  job: string | null;
}

export interface TopicRecordRow {
  topic: number;
  role: string;
  coherence: number;
  intratext: number | null;
  size: number;
  degenerate: boolean;
  label: Label | null;
}

export interface StopDecision {
  stop: boolean;
  reason: string | null;
}

/** One element of the GET /history list; one committed iteration. */
export interface IterationRecord {
  iteration: number;
  seed: number;
  n_fixed: number;
  labels: Record<string, Label>;
  good_added: number;
  bad_added: number;
  bank_good_total: number;
  bank_bad_total: number;
  metrics: Record<string, number | null>;
  topics: TopicRecordRow[];
  fixed_fidelity_min: number | null;
  stop: StopDecision;
}
