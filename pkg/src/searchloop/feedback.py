"""Pure feedback semantics: plan edits, list edits, answer edits, invalidation.

Functions here transform values and never touch logs, caches, or the
index; the session runtime layers re-execution on top.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from . import actions as act
from .model import (
    Actor,
    Answer,
    AnswerSection,
    EvidenceSet,
    Provenance,
    QueryPlan,
    RankedEntry,
    RankedList,
    Stage,
    SubQuery,
    ValidationState,
)

_SUB_NUM_RE = re.compile(r"^Q(\d+)$")

_ACTOR_PROVENANCE = {
    Actor.HUMAN: Provenance.USER_ADDED,
    Actor.SHADOW_AGENT: Provenance.AGENT_SUGGESTED,
    Actor.TEMPLATE_REPLAY: Provenance.USER_ADDED,
}


@dataclass(frozen=True)
class InvalidationSet:
    """Downstream work implied by an event.

    ``sections_to_regenerate`` of None means the stage reruns in full
    (style changes resolve to all fresh sections at execution time);
    a tuple limits regeneration to the named sections.
    """

    stages_to_rerun: tuple[Stage, ...] = ()
    sections_to_regenerate: tuple[str, ...] | None = None


EMPTY_INVALIDATION = InvalidationSet()


def next_sub_id(plan: QueryPlan) -> str:
    numbered = [int(match.group(1)) for s in plan.sub_queries if (match := _SUB_NUM_RE.match(s.sub_id))]
    nxt = max(numbered, default=len(plan.sub_queries)) + 1
    while f"Q{nxt}" in plan.sub_ids():
        nxt += 1
    return f"Q{nxt}"


def _with_positions(subs: list[SubQuery]) -> tuple[SubQuery, ...]:
    return tuple(replace(s, position=i) for i, s in enumerate(subs))


def apply_decomposition_feedback(
    plan: QueryPlan,
    action: act.FeedbackAction,
    actor: Actor,
    new_sub_id: str | None = None,
) -> QueryPlan:
    """Return the successor plan: version bumped, parent recorded.

    An identity reorder still produces a new version; plan history is a
    lineage of explicit user intents, not of textual change. The session
    runtime passes ``new_sub_id`` from its never-reused ordinal counter;
    standalone callers get the highest-free-ordinal default.
    """
    subs = list(plan.sub_queries)
    if isinstance(action, act.AddSubQuery):
        new = SubQuery(
            sub_id=new_sub_id if new_sub_id is not None else next_sub_id(plan),
            text=action.text,
            constraints=action.constraints,
            provenance=_ACTOR_PROVENANCE[actor],
        )
        subs.insert(action.insert_position, new)
    elif isinstance(action, act.RemoveSubQuery):
        subs = [s for s in subs if s.sub_id != action.sub_id]
    elif isinstance(action, act.ReorderSubQueries):
        by_id = {s.sub_id: s for s in subs}
        subs = [by_id[sid] for sid in action.order]
    elif isinstance(action, act.RefineConstraint):
        idx = next(i for i, s in enumerate(subs) if s.sub_id == action.sub_id)
        pairs = [(k, v) for k, v in subs[idx].constraints if k != action.key]
        pairs.append((action.key, action.value))
        subs[idx] = replace(subs[idx], constraints=tuple(pairs))
    else:
        raise TypeError(f"not a decomposition action: {action!r}")
    return QueryPlan(
        plan_version=plan.plan_version + 1,
        parent_version=plan.plan_version,
        sub_queries=_with_positions(subs),
    )


def rebuild_list(entries: list[RankedEntry]) -> RankedList:
    """Re-rank entries: pinned ones occupy their forced rank, the rest keep
    their given relative order. Pins that no longer fit the list length are
    dropped back into flow order."""
    unpinned = [e for e in entries if e.pin is None]
    pinned = sorted((e for e in entries if e.pin is not None), key=lambda e: (e.pin, e.chunk_id))
    out = list(unpinned)
    for e in pinned:
        out.insert(min(e.pin - 1, len(out)), e)
    final = []
    for i, e in enumerate(out):
        pin = e.pin if e.pin == i + 1 else None
        final.append(replace(e, rank=i + 1, pin=pin))
    return RankedList(entries=tuple(final))


def apply_retrieval_feedback(evidence: EvidenceSet, action: act.FeedbackAction) -> EvidenceSet:
    """Apply a retrieval event to the evidence value.

    An irrelevant annotation removes the entry from the visible list (the
    event on the log is the durable negative record). SetFilter swaps the
    active filter; re-retrieval under it is the session runtime's job.
    """
    if isinstance(action, act.SetFilter):
        return EvidenceSet(per_subquery=dict(evidence.per_subquery), active_filter=action.filter)

    if isinstance(action, (act.AnnotateRelevance, act.RerankEvidence)):
        ranked = evidence.per_subquery[action.sub_id]
        entries = list(ranked.entries)
        idx = next(i for i, e in enumerate(entries) if e.chunk_id == action.chunk_id)
        if isinstance(action, act.AnnotateRelevance):
            from .model import RelevanceLabel

            if action.label is RelevanceLabel.IRRELEVANT:
                del entries[idx]
            else:
                entries[idx] = replace(entries[idx], label=action.label)
        else:
            entries = [
                replace(e, pin=None) if e.pin == action.new_rank and e.chunk_id != action.chunk_id else e
                for e in entries
            ]
            entries[idx] = replace(entries[idx], pin=action.new_rank)
        per = dict(evidence.per_subquery)
        per[action.sub_id] = rebuild_list(entries)
        return EvidenceSet(per_subquery=per, active_filter=evidence.active_filter)

    raise TypeError(f"not a retrieval action: {action!r}")


def apply_generation_feedback(answer: Answer, action: act.FeedbackAction) -> tuple[Answer, InvalidationSet]:
    """Apply a generation event; returns the new answer and what to rerun."""
    if isinstance(action, act.CorrectFact):
        sections = tuple(
            replace(s, validation_state=ValidationState.FLAGGED, correction_note=action.note)
            if s.section_id == action.section_id
            else s
            for s in answer.sections
        )
        inv = InvalidationSet(stages_to_rerun=(Stage.GENERATION,), sections_to_regenerate=(action.section_id,))
        return Answer(sections=sections, style=answer.style), inv

    if isinstance(action, act.EditSection):
        sections = []
        for s in answer.sections:
            if s.section_id != action.section_id:
                sections.append(s)
                continue
            state = (
                ValidationState.USER_VALIDATED
                if action.new_text == s.text
                else ValidationState.USER_CORRECTED
            )
            # User-authored text carries no machine citations; clearing them
            # keeps preserved sections from ever citing evicted chunks.
            sections.append(
                AnswerSection(
                    section_id=s.section_id,
                    text=action.new_text,
                    citations=(),
                    validation_state=state,
                )
            )
        return Answer(sections=tuple(sections), style=answer.style), EMPTY_INVALIDATION

    if isinstance(action, act.AdjustStyle):
        fresh = tuple(
            s.section_id for s in answer.sections if s.validation_state is ValidationState.FRESH
        )
        inv = InvalidationSet(stages_to_rerun=(Stage.GENERATION,), sections_to_regenerate=fresh)
        return Answer(sections=answer.sections, style=action.style), inv

    raise TypeError(f"not a generation action: {action!r}")


def invalidation_set(event: act.FeedbackEvent) -> InvalidationSet:
    """Downstream closure for an event, independent of state.

    Retrieval membership implies generation membership; the final stage
    invalidates nothing.
    """
    stage = act.stage_of(event.action)
    if stage is Stage.DECOMPOSITION:
        return InvalidationSet(stages_to_rerun=(Stage.RETRIEVAL, Stage.GENERATION))
    if stage is Stage.RETRIEVAL:
        return InvalidationSet(stages_to_rerun=(Stage.GENERATION,))
    if stage is Stage.GENERATION:
        if isinstance(event.action, act.EditSection):
            return EMPTY_INVALIDATION
        if isinstance(event.action, act.CorrectFact):
            return InvalidationSet(
                stages_to_rerun=(Stage.GENERATION,),
                sections_to_regenerate=(event.action.section_id,),
            )
        return InvalidationSet(stages_to_rerun=(Stage.GENERATION,), sections_to_regenerate=None)
    return EMPTY_INVALIDATION
