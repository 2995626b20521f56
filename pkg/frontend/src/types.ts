// Wire types for the gateway's canonical records. Field names and
// nullability mirror the JSON the server emits; keep them in sync with
// the backend serializers rather than "improving" them here.

export type Stage = "decomposition" | "retrieval" | "generation" | "final";
export type PipelineStage = Exclude<Stage, "final">;
export type StageStatus = "clean" | "dirty" | "error";
export type Actor = "human" | "shadow_agent" | "template_replay";
export type RelevanceLabel = "relevant" | "partially_relevant" | "irrelevant";
export type ValidationState = "fresh" | "user_validated" | "user_corrected" | "flagged";
export type Tone = "neutral" | "formal" | "casual";
export type Verbosity = "brief" | "normal" | "detailed";
export type Layout = "prose" | "bullets";
export type RateValue = "like" | "dislike";

export const PIPELINE_STAGES: PipelineStage[] = ["decomposition", "retrieval", "generation"];

export interface StyleRecord {
  tone: Tone;
  verbosity: Verbosity;
  layout: Layout;
}

export interface UserQueryRecord {
  type: "user_query";
  query_id: string;
  user_id: string;
  text: string;
  submitted_at: string;
}

export interface SubQueryRecord {
  type: "sub_query";
  sub_id: string;
  text: string;
  constraints: [string, string][];
  position: number;
  provenance: string;
}

export interface QueryPlanRecord {
  type: "query_plan";
  plan_version: number;
  parent_version: number | null;
  sub_queries: SubQueryRecord[];
}

export interface RankedEntryRecord {
  chunk_id: string;
  score: number;
  rank: number;
  label: RelevanceLabel | null;
  pin: number | null;
}

export interface RankedListRecord {
  type: "ranked_list";
  entries: RankedEntryRecord[];
}

export interface RetrievalFilterRecord {
  type: "retrieval_filter";
  time_from: string | null;
  time_to: string | null;
  domain_allow: string[] | null;
  domain_block: string[] | null;
}

export interface EvidenceSetRecord {
  type: "evidence_set";
  per_subquery: Record<string, RankedListRecord>;
  active_filter: RetrievalFilterRecord;
}

export interface AnswerSectionRecord {
  type: "answer_section";
  section_id: string;
  text: string;
  citations: string[];
  validation_state: ValidationState;
  correction_note: string | null;
}

export interface AnswerRecord {
  type: "answer";
  sections: AnswerSectionRecord[];
  style: StyleRecord;
}

export interface SessionRecord {
  type: "session_state";
  session_id: string;
  query: UserQueryRecord;
  plan: QueryPlanRecord;
  evidence: EvidenceSetRecord;
  answer: AnswerRecord;
  stage_status: Record<PipelineStage, StageStatus>;
  log_offset: number;
  next_sub_ordinal: number;
  labels: Record<string, Record<string, RelevanceLabel>>;
  pins: Record<string, Record<string, number>>;
}

// -- feedback actions, one variant per taxonomy entry

export type ActionKind =
  | "add_sub_query"
  | "remove_sub_query"
  | "reorder_sub_queries"
  | "refine_constraint"
  | "annotate_relevance"
  | "rerank_evidence"
  | "set_filter"
  | "correct_fact"
  | "edit_section"
  | "adjust_style"
  | "rate";

export type ActionRecord =
  | { kind: "add_sub_query"; text: string; insert_position: number; constraints: [string, string][] }
  | { kind: "remove_sub_query"; sub_id: string }
  | { kind: "reorder_sub_queries"; order: string[] }
  | { kind: "refine_constraint"; sub_id: string; key: string; value: string }
  | { kind: "annotate_relevance"; sub_id: string; chunk_id: string; label: RelevanceLabel }
  | { kind: "rerank_evidence"; sub_id: string; chunk_id: string; new_rank: number }
  | { kind: "set_filter"; filter: RetrievalFilterRecord }
  | { kind: "correct_fact"; section_id: string; note: string }
  | { kind: "edit_section"; section_id: string; new_text: string }
  | { kind: "adjust_style"; style: StyleRecord }
  | { kind: "rate"; value: RateValue; comment: string | null };

// What the console POSTs: the server fills event_id and occurred_at.
export interface FeedbackEventBody {
  session_id: string;
  seq: number;
  stage: Stage;
  actor: Actor;
  action: ActionRecord;
}

export interface FeedbackEventRecord extends FeedbackEventBody {
  type: "feedback_event";
  event_id: string;
  occurred_at: string;
}

// -- the event log, as served by GET /sessions/{id}/events

export type LogRecord =
  | { type: "session_opened"; seq: number; session_id: string; query: UserQueryRecord }
  | { type: "bootstrap_plan"; seq: number; session_id: string; plan: QueryPlanRecord }
  | { type: "bootstrap_evidence"; seq: number; session_id: string; evidence: EvidenceSetRecord }
  | { type: "bootstrap_answer"; seq: number; session_id: string; answer: AnswerRecord }
  | FeedbackEventRecord
  | {
      type: "proposal_rejected";
      seq: number;
      session_id: string;
      proposal_id: string;
      stage: Stage;
      action: ActionRecord;
      rationale: string;
    };

export interface ProposalRecord {
  type: "proposal";
  proposal_id: string;
  session_id: string;
  log_offset: number;
  stage: Stage;
  event: FeedbackEventRecord;
  rationale: string;
  confidence: number;
  status: "pending" | "accepted" | "rejected" | "expired";
}

export interface TemplateRecord {
  type: "debug_template";
  template_id: string;
  author_id: string;
  title: string;
  query_pattern: string[];
  steps: { kind: ActionKind; [extra: string]: unknown }[];
  price_credits: number;
  created_at: string;
  metrics: { views: number; downloads: number; resolutions: number };
  match_score?: number;
}

// -- endpoint payloads

export interface SessionPayload {
  session: SessionRecord;
}

export interface FeedbackPayload {
  applied_seq: number;
  session: SessionRecord;
}

export interface StagePayload {
  stage: PipelineStage;
  status: StageStatus;
  output: QueryPlanRecord | EvidenceSetRecord | AnswerRecord;
}

export interface ProposalsPayload {
  proposals: ProposalRecord[];
}

export interface ConfirmPayload {
  proposal: ProposalRecord;
  session: SessionRecord;
}

export interface EventsPayload {
  events: LogRecord[];
  log_offset: number;
}

export interface TemplatesPayload {
  templates: TemplateRecord[];
}

export interface ApplyPayload {
  report: { step: number; kind: ActionKind; status: "applied" | "skipped"; reason: string | null }[];
  session: SessionRecord;
}
