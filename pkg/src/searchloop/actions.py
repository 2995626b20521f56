"""Feedback actions and the event wrapper that carries them on the session log."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from .model import (
    RateValue,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    Style,
    Actor,
    utc_ms,
)


@dataclass(frozen=True)
class AddSubQuery:
    text: str
    insert_position: int
    constraints: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("sub-query text must be non-empty")
        object.__setattr__(self, "constraints", tuple((str(k), str(v)) for k, v in self.constraints))


@dataclass(frozen=True)
class RemoveSubQuery:
    sub_id: str


@dataclass(frozen=True)
class ReorderSubQueries:
    order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))


@dataclass(frozen=True)
class RefineConstraint:
    sub_id: str
    key: str
    value: str

    def __post_init__(self):
        if not self.key.strip():
            raise ValueError("constraint key must be non-empty")


@dataclass(frozen=True)
class AnnotateRelevance:
    sub_id: str
    chunk_id: str
    label: RelevanceLabel


@dataclass(frozen=True)
class RerankEvidence:
    sub_id: str
    chunk_id: str
    new_rank: int


@dataclass(frozen=True)
class SetFilter:
    filter: RetrievalFilter


@dataclass(frozen=True)
class CorrectFact:
    section_id: str
    note: str

    def __post_init__(self):
        if not self.note.strip():
            raise ValueError("correction note must be non-empty")


@dataclass(frozen=True)
class EditSection:
    section_id: str
    new_text: str

    def __post_init__(self):
        if not self.new_text.strip():
            raise ValueError("edited section text must be non-empty")


@dataclass(frozen=True)
class AdjustStyle:
    style: Style


@dataclass(frozen=True)
class Rate:
    value: RateValue
    comment: str | None = None


FeedbackAction = (
    AddSubQuery
    | RemoveSubQuery
    | ReorderSubQueries
    | RefineConstraint
    | AnnotateRelevance
    | RerankEvidence
    | SetFilter
    | CorrectFact
    | EditSection
    | AdjustStyle
    | Rate
)

ACTION_KINDS: dict[type, str] = {
    AddSubQuery: "add_sub_query",
    RemoveSubQuery: "remove_sub_query",
    ReorderSubQueries: "reorder_sub_queries",
    RefineConstraint: "refine_constraint",
    AnnotateRelevance: "annotate_relevance",
    RerankEvidence: "rerank_evidence",
    SetFilter: "set_filter",
    CorrectFact: "correct_fact",
    EditSection: "edit_section",
    AdjustStyle: "adjust_style",
    Rate: "rate",
}

_ACTION_STAGES: dict[type, Stage] = {
    AddSubQuery: Stage.DECOMPOSITION,
    RemoveSubQuery: Stage.DECOMPOSITION,
    ReorderSubQueries: Stage.DECOMPOSITION,
    RefineConstraint: Stage.DECOMPOSITION,
    AnnotateRelevance: Stage.RETRIEVAL,
    RerankEvidence: Stage.RETRIEVAL,
    SetFilter: Stage.RETRIEVAL,
    CorrectFact: Stage.GENERATION,
    EditSection: Stage.GENERATION,
    AdjustStyle: Stage.GENERATION,
    Rate: Stage.FINAL,
}


def stage_of(action: FeedbackAction) -> Stage:
    """Map an action to the stage it belongs to. Total over the taxonomy."""
    return _ACTION_STAGES[type(action)]


def kind_of(action: FeedbackAction) -> str:
    return ACTION_KINDS[type(action)]


@dataclass(frozen=True)
class FeedbackEvent:
    event_id: str
    session_id: str
    seq: int
    stage: Stage
    actor: Actor
    occurred_at: datetime
    action: FeedbackAction

    def __post_init__(self):
        if self.seq < 1:
            raise ValueError("seq must be positive")
        object.__setattr__(self, "occurred_at", utc_ms(self.occurred_at))
