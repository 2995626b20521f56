"""Referential validation of feedback events against a session snapshot."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from . import actions as act
from .model import Answer, EvidenceSet, QueryPlan

#: Hard cap on plan size; mirrors the decomposer's limit.
MAX_SUBQUERIES = 8

UNKNOWN_REFERENCE = "unknown_reference"
OUT_OF_BOUNDS = "out_of_bounds"
INCOMPLETE_PERMUTATION = "incomplete_permutation"
STAGE_MISMATCH = "stage_mismatch"
STALE_SEQUENCE = "stale_sequence"


class SnapshotLike(Protocol):
    plan: QueryPlan
    evidence: EvidenceSet
    answer: Answer
    log_offset: int


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    code: str | None = None
    detail: str = ""

    @staticmethod
    def accept() -> "ValidationResult":
        return ValidationResult(True)

    @staticmethod
    def reject(code: str, detail: str = "") -> "ValidationResult":
        return ValidationResult(False, code, detail)


def validate_event(
    event: act.FeedbackEvent,
    snapshot: SnapshotLike,
    max_subqueries: int = MAX_SUBQUERIES,
) -> ValidationResult:
    """Check an event's stage, sequence number, and references.

    Structural invariants (non-empty texts, well-formed filters) are
    enforced when the action value is constructed or parsed; this function
    covers everything that depends on the snapshot the event targets.
    """
    accept, reject = ValidationResult.accept, ValidationResult.reject
    action = event.action

    if act.stage_of(action) is not event.stage:
        return reject(
            STAGE_MISMATCH,
            f"{act.kind_of(action)} belongs to stage {act.stage_of(action).value}, not {event.stage.value}",
        )
    if event.seq != snapshot.log_offset + 1:
        return reject(
            STALE_SEQUENCE,
            f"expected seq {snapshot.log_offset + 1}, got {event.seq}",
        )

    plan = snapshot.plan
    evidence = snapshot.evidence
    answer = snapshot.answer

    if isinstance(action, act.AddSubQuery):
        if len(plan.sub_queries) >= max_subqueries:
            return reject(OUT_OF_BOUNDS, f"plan already holds {max_subqueries} sub-queries")
        if not 0 <= action.insert_position <= len(plan.sub_queries):
            return reject(OUT_OF_BOUNDS, f"insert_position {action.insert_position} outside 0..{len(plan.sub_queries)}")
        return accept()

    if isinstance(action, act.RemoveSubQuery):
        if action.sub_id not in plan.sub_ids():
            return reject(UNKNOWN_REFERENCE, f"no sub-query {action.sub_id}")
        if len(plan.sub_queries) == 1:
            return reject(OUT_OF_BOUNDS, "cannot remove the last sub-query")
        return accept()

    if isinstance(action, act.ReorderSubQueries):
        current = plan.sub_ids()
        unknown = [sid for sid in action.order if sid not in current]
        if unknown:
            return reject(UNKNOWN_REFERENCE, f"unknown sub-queries in permutation: {unknown}")
        if len(action.order) != len(current) or set(action.order) != set(current):
            return reject(INCOMPLETE_PERMUTATION, f"permutation {list(action.order)} does not cover {list(current)}")
        return accept()

    if isinstance(action, act.RefineConstraint):
        if action.sub_id not in plan.sub_ids():
            return reject(UNKNOWN_REFERENCE, f"no sub-query {action.sub_id}")
        return accept()

    if isinstance(action, (act.AnnotateRelevance, act.RerankEvidence)):
        ranked = evidence.per_subquery.get(action.sub_id)
        if ranked is None:
            return reject(UNKNOWN_REFERENCE, f"no evidence for sub-query {action.sub_id}")
        if ranked.entry(action.chunk_id) is None:
            return reject(UNKNOWN_REFERENCE, f"chunk {action.chunk_id} not in list for {action.sub_id}")
        if isinstance(action, act.RerankEvidence) and not 1 <= action.new_rank <= len(ranked.entries):
            return reject(OUT_OF_BOUNDS, f"new_rank {action.new_rank} outside 1..{len(ranked.entries)}")
        return accept()

    if isinstance(action, act.SetFilter):
        return accept()

    if isinstance(action, (act.CorrectFact, act.EditSection)):
        if answer.section(action.section_id) is None:
            return reject(UNKNOWN_REFERENCE, f"no section {action.section_id}")
        return accept()

    # AdjustStyle and Rate carry no references.
    return accept()
