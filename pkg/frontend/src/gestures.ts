// The gesture layer: each UI gesture maps to exactly one feedback action
// variant, and every action variant has exactly one gesture. The panels
// render affordances from this table, so a taxonomy change that breaks
// the bijection fails loudly at import time.

import type {
  ActionKind,
  ActionRecord,
  FeedbackEventBody,
  Layout,
  RankedListRecord,
  RateValue,
  RelevanceLabel,
  Stage,
  Tone,
  Verbosity,
} from "./types.js";

export type GestureKind =
  | "add_form"
  | "remove_button"
  | "row_drag"
  | "constraint_edit"
  | "label_chip"
  | "evidence_drag"
  | "filter_form"
  | "flag_note"
  | "inline_edit"
  | "style_picker"
  | "thumb";

export type Gesture =
  | { gesture: "add_form"; text: string; insertPosition: number; constraints?: [string, string][] }
  | { gesture: "remove_button"; subId: string }
  | { gesture: "row_drag"; order: string[] }
  | { gesture: "constraint_edit"; subId: string; key: string; value: string }
  | { gesture: "label_chip"; subId: string; chunkId: string; label: RelevanceLabel }
  | { gesture: "evidence_drag"; subId: string; chunkId: string; newRank: number }
  | {
      gesture: "filter_form";
      timeFrom?: string | null;
      timeTo?: string | null;
      domainAllow?: string[] | null;
      domainBlock?: string[] | null;
    }
  | { gesture: "flag_note"; sectionId: string; note: string }
  | { gesture: "inline_edit"; sectionId: string; newText: string }
  | { gesture: "style_picker"; tone: Tone; verbosity: Verbosity; layout: Layout }
  | { gesture: "thumb"; value: RateValue; comment?: string | null };

export const ACTION_FOR_GESTURE: Record<GestureKind, ActionKind> = {
  add_form: "add_sub_query",
  remove_button: "remove_sub_query",
  row_drag: "reorder_sub_queries",
  constraint_edit: "refine_constraint",
  label_chip: "annotate_relevance",
  evidence_drag: "rerank_evidence",
  filter_form: "set_filter",
  flag_note: "correct_fact",
  inline_edit: "edit_section",
  style_picker: "adjust_style",
  thumb: "rate",
};

export const GESTURE_FOR_ACTION: Record<ActionKind, GestureKind> = (() => {
  const inverse = {} as Record<ActionKind, GestureKind>;
  for (const [gesture, action] of Object.entries(ACTION_FOR_GESTURE)) {
    if (inverse[action as ActionKind] !== undefined) {
      throw new Error(`two gestures map to action ${action}`);
    }
    inverse[action as ActionKind] = gesture as GestureKind;
  }
  return inverse;
})();

const STAGE_FOR_ACTION: Record<ActionKind, Stage> = {
  add_sub_query: "decomposition",
  remove_sub_query: "decomposition",
  reorder_sub_queries: "decomposition",
  refine_constraint: "decomposition",
  annotate_relevance: "retrieval",
  rerank_evidence: "retrieval",
  set_filter: "retrieval",
  correct_fact: "generation",
  edit_section: "generation",
  adjust_style: "generation",
  rate: "final",
};

export function stageOfAction(kind: ActionKind): Stage {
  return STAGE_FOR_ACTION[kind];
}

export function stageOfGesture(kind: GestureKind): Stage {
  return STAGE_FOR_ACTION[ACTION_FOR_GESTURE[kind]];
}

export function gesturesForStage(stage: Stage): GestureKind[] {
  return (Object.keys(ACTION_FOR_GESTURE) as GestureKind[]).filter(
    (g) => stageOfGesture(g) === stage,
  );
}

export function actionOf(g: Gesture): ActionRecord {
  switch (g.gesture) {
    case "add_form":
      return {
        kind: "add_sub_query",
        text: g.text,
        insert_position: g.insertPosition,
        constraints: (g.constraints ?? []).map(([k, v]): [string, string] => [k, v]),
      };
    case "remove_button":
      return { kind: "remove_sub_query", sub_id: g.subId };
    case "row_drag":
      return { kind: "reorder_sub_queries", order: [...g.order] };
    case "constraint_edit":
      return { kind: "refine_constraint", sub_id: g.subId, key: g.key, value: g.value };
    case "label_chip":
      return { kind: "annotate_relevance", sub_id: g.subId, chunk_id: g.chunkId, label: g.label };
    case "evidence_drag":
      return { kind: "rerank_evidence", sub_id: g.subId, chunk_id: g.chunkId, new_rank: g.newRank };
    case "filter_form":
      return {
        kind: "set_filter",
        filter: {
          type: "retrieval_filter",
          time_from: g.timeFrom ?? null,
          time_to: g.timeTo ?? null,
          domain_allow: g.domainAllow ?? null,
          domain_block: g.domainBlock ?? null,
        },
      };
    case "flag_note":
      return { kind: "correct_fact", section_id: g.sectionId, note: g.note };
    case "inline_edit":
      return { kind: "edit_section", section_id: g.sectionId, new_text: g.newText };
    case "style_picker":
      return { kind: "adjust_style", style: { tone: g.tone, verbosity: g.verbosity, layout: g.layout } };
    case "thumb":
      return { kind: "rate", value: g.value, comment: g.comment ?? null };
  }
}

export function eventFor(g: Gesture, sessionId: string, seq: number): FeedbackEventBody {
  const action = actionOf(g);
  return {
    session_id: sessionId,
    seq,
    stage: stageOfAction(action.kind),
    actor: "human",
    action,
  };
}

// -- drag semantics
//
// Drops arrive as "moved X above Y" / "dropped row at index i"; these
// helpers turn that into the complete permutation or absolute rank the
// protocol wants.

export function planDrop(order: readonly string[], subId: string, toIndex: number): Gesture {
  const rest = order.filter((id) => id !== subId);
  if (rest.length === order.length) {
    throw new Error(`sub-query ${subId} is not in the plan`);
  }
  const clamped = Math.max(0, Math.min(toIndex, rest.length));
  const next = [...rest.slice(0, clamped), subId, ...rest.slice(clamped)];
  return { gesture: "row_drag", order: next };
}

export function dragAbove(
  list: RankedListRecord,
  subId: string,
  chunkId: string,
  beforeChunkId: string,
): Gesture {
  const target = list.entries.find((e) => e.chunk_id === beforeChunkId);
  if (!target) {
    throw new Error(`chunk ${beforeChunkId} is not in the ranked list`);
  }
  return { gesture: "evidence_drag", subId, chunkId, newRank: target.rank };
}
