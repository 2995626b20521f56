// View state for one session tab. The server is the only source of
// stage output; the view adds ephemeral marks on top (optimistic dirty
// flags, banners, buffered out-of-order pushes) that every refresh
// clears.

import type { Gesture } from "./gestures.js";
import type {
  LogRecord,
  PipelineStage,
  ProposalRecord,
  SessionRecord,
  Stage,
  StageStatus,
} from "./types.js";
import { PIPELINE_STAGES } from "./types.js";

const STAGE_ORDER: Record<Stage, number> = {
  decomposition: 0,
  retrieval: 1,
  generation: 2,
  final: 3,
};

export type Mode = "debug" | "shadow";

export interface Banner {
  kind: "error" | "retry";
  code: string | null;
  message: string;
}

export interface EditDiff {
  sectionId: string;
  before: string;
  after: string;
}

export interface SessionView {
  session: SessionRecord | null;
  timeline: LogRecord[];
  feedCursor: number;
  buffer: Map<number, LogRecord>;
  locallyDirty: Set<PipelineStage>;
  proposals: ProposalRecord[];
  banner: Banner | null;
  pendingRetry: Gesture | null;
  mode: Mode;
  editDiffs: EditDiff[];
  // True when the panels show data the server may have moved past
  // (a refresh failed). Rendered as a stale mark, never as fresh.
  stale: boolean;
}

export function emptyView(): SessionView {
  return {
    session: null,
    timeline: [],
    feedCursor: 0,
    buffer: new Map(),
    locallyDirty: new Set(),
    proposals: [],
    banner: null,
    pendingRetry: null,
    mode: "debug",
    editDiffs: [],
    stale: false,
  };
}

export function acceptSession(view: SessionView, record: SessionRecord): void {
  view.session = record;
  view.locallyDirty.clear();
  view.stale = false;
}

export function markDownstream(view: SessionView, stage: Stage): void {
  for (const s of PIPELINE_STAGES) {
    if (STAGE_ORDER[s] > STAGE_ORDER[stage]) {
      view.locallyDirty.add(s);
    }
  }
}

export function panelStatus(view: SessionView, stage: PipelineStage): { status: StageStatus; dirty: boolean } {
  const status = view.session?.stage_status[stage] ?? "clean";
  return { status, dirty: status === "dirty" || view.locallyDirty.has(stage) };
}

export type IngestResult = "applied" | "buffered" | "duplicate";

// Feed records arrive in whatever order the transport delivers them;
// apply contiguously from feedCursor and park the rest.
export function ingest(view: SessionView, record: LogRecord): IngestResult {
  if (record.seq <= view.feedCursor) {
    return "duplicate";
  }
  if (record.seq > view.feedCursor + 1) {
    view.buffer.set(record.seq, record);
    return "buffered";
  }
  applyRecord(view, record);
  let next = view.buffer.get(view.feedCursor + 1);
  while (next !== undefined) {
    view.buffer.delete(next.seq);
    applyRecord(view, next);
    next = view.buffer.get(view.feedCursor + 1);
  }
  return "applied";
}

function applyRecord(view: SessionView, record: LogRecord): void {
  view.timeline.push(record);
  view.feedCursor = record.seq;
  // A feedback event beyond the rendered snapshot means the panels are
  // behind; mark its downstream until the next refresh lands.
  if (record.type === "feedback_event" && view.session && record.seq > view.session.log_offset) {
    markDownstream(view, record.stage);
  }
}

export interface TimelineEntry {
  seq: number;
  badge: "human" | "shadow agent" | "template" | "system";
  label: string;
}

export function timelineEntries(view: SessionView): TimelineEntry[] {
  return view.timeline.map((record) => {
    switch (record.type) {
      case "session_opened":
        return { seq: record.seq, badge: "system" as const, label: `session opened: ${record.query.text}` };
      case "bootstrap_plan":
        return { seq: record.seq, badge: "system" as const, label: "plan drafted" };
      case "bootstrap_evidence":
        return { seq: record.seq, badge: "system" as const, label: "evidence retrieved" };
      case "bootstrap_answer":
        return { seq: record.seq, badge: "system" as const, label: "answer generated" };
      case "proposal_rejected":
        return {
          seq: record.seq,
          badge: "human" as const,
          label: `rejected proposal: ${record.action.kind} (${record.stage})`,
        };
      case "feedback_event": {
        const badge =
          record.actor === "human" ? ("human" as const)
          : record.actor === "shadow_agent" ? ("shadow agent" as const)
          : ("template" as const);
        return { seq: record.seq, badge, label: `${record.action.kind} (${record.stage})` };
      }
    }
  });
}
