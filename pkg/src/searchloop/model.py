"""Core domain types: queries, plans, evidence, answers, and profiles.

Every type here is a plain frozen dataclass; values are safe to share
read-only between threads and are never mutated in place. State changes
happen by constructing new values (see `feedback` and `session`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum


class Stage(str, Enum):
    DECOMPOSITION = "decomposition"
    RETRIEVAL = "retrieval"
    GENERATION = "generation"
    FINAL = "final"


#: Stages that produce pipeline output, in execution order.
PIPELINE_STAGES = (Stage.DECOMPOSITION, Stage.RETRIEVAL, Stage.GENERATION)


class Actor(str, Enum):
    HUMAN = "human"
    SHADOW_AGENT = "shadow_agent"
    TEMPLATE_REPLAY = "template_replay"


class Provenance(str, Enum):
    SYSTEM = "system"
    USER_ADDED = "user_added"
    AGENT_SUGGESTED = "agent_suggested"


class RelevanceLabel(str, Enum):
    RELEVANT = "relevant"
    PARTIALLY_RELEVANT = "partially_relevant"
    IRRELEVANT = "irrelevant"


class ValidationState(str, Enum):
    FRESH = "fresh"
    USER_VALIDATED = "user_validated"
    USER_CORRECTED = "user_corrected"
    FLAGGED = "flagged"


class Tone(str, Enum):
    NEUTRAL = "neutral"
    FORMAL = "formal"
    CASUAL = "casual"


class Verbosity(str, Enum):
    BRIEF = "brief"
    NORMAL = "normal"
    DETAILED = "detailed"


class Layout(str, Enum):
    PROSE = "prose"
    BULLETS = "bullets"


class RateValue(str, Enum):
    LIKE = "like"
    DISLIKE = "dislike"


class StageStatus(str, Enum):
    CLEAN = "clean"
    DIRTY = "dirty"
    ERROR = "error"


def utc_ms(dt: datetime) -> datetime:
    """Normalize a datetime to UTC with millisecond precision."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def _pairs(value) -> tuple[tuple[str, str], ...]:
    return tuple((str(k), str(v)) for k, v in value)


@dataclass(frozen=True)
class UserQuery:
    query_id: str
    user_id: str
    text: str
    submitted_at: datetime

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")
        object.__setattr__(self, "text", self.text.strip())
        object.__setattr__(self, "submitted_at", utc_ms(self.submitted_at))


@dataclass(frozen=True)
class SubQuery:
    sub_id: str
    text: str
    constraints: tuple[tuple[str, str], ...] = ()
    position: int = 0
    provenance: Provenance = Provenance.SYSTEM

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("sub-query text must be non-empty")
        object.__setattr__(self, "constraints", _pairs(self.constraints))


@dataclass(frozen=True)
class QueryPlan:
    plan_version: int
    parent_version: int | None
    sub_queries: tuple[SubQuery, ...]

    def __post_init__(self):
        object.__setattr__(self, "sub_queries", tuple(self.sub_queries))
        if self.plan_version < 1:
            raise ValueError("plan_version starts at 1")
        if not self.sub_queries:
            raise ValueError("plan must contain at least one sub-query")
        ids = [s.sub_id for s in self.sub_queries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sub_ids in plan: {ids}")
        for i, sub in enumerate(self.sub_queries):
            if sub.position != i:
                raise ValueError(f"sub-query {sub.sub_id} at index {i} carries position {sub.position}")

    def sub(self, sub_id: str) -> SubQuery:
        for s in self.sub_queries:
            if s.sub_id == sub_id:
                return s
        raise KeyError(sub_id)

    def sub_ids(self) -> tuple[str, ...]:
        return tuple(s.sub_id for s in self.sub_queries)


@dataclass(frozen=True)
class DocumentChunk:
    chunk_id: str
    doc_id: str
    text: str
    source_domain: str
    published_date: date | None = None
    url: str = ""

    def __post_init__(self):
        object.__setattr__(self, "source_domain", self.source_domain.lower())


@dataclass(frozen=True)
class RetrievalFilter:
    time_from: date | None = None
    time_to: date | None = None
    domain_allow: tuple[str, ...] | None = None
    domain_block: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.time_from and self.time_to and self.time_from > self.time_to:
            raise ValueError("time_from must not be after time_to")
        allow = tuple(d.lower() for d in self.domain_allow) if self.domain_allow is not None else None
        block = tuple(d.lower() for d in self.domain_block) if self.domain_block is not None else None
        if allow is not None and block is not None and set(allow) & set(block):
            raise ValueError("domain_allow and domain_block must be disjoint")
        object.__setattr__(self, "domain_allow", allow)
        object.__setattr__(self, "domain_block", block)

    def is_empty(self) -> bool:
        return (
            self.time_from is None
            and self.time_to is None
            and self.domain_allow is None
            and self.domain_block is None
        )


EMPTY_FILTER = RetrievalFilter()


@dataclass(frozen=True)
class RankedEntry:
    chunk_id: str
    score: float
    rank: int
    label: RelevanceLabel | None = None
    pin: int | None = None

    def __post_init__(self):
        if self.score < 0:
            raise ValueError("scores are non-negative")


@dataclass(frozen=True)
class RankedList:
    entries: tuple[RankedEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for i, e in enumerate(self.entries):
            if e.rank != i + 1:
                raise ValueError(f"ranks must be contiguous from 1, got {e.rank} at index {i}")

    def entry(self, chunk_id: str) -> RankedEntry | None:
        for e in self.entries:
            if e.chunk_id == chunk_id:
                return e
        return None

    def chunk_ids(self) -> tuple[str, ...]:
        return tuple(e.chunk_id for e in self.entries)


@dataclass(frozen=True)
class EvidenceSet:
    per_subquery: dict[str, RankedList] = field(default_factory=dict)
    active_filter: RetrievalFilter = EMPTY_FILTER

    def __post_init__(self):
        object.__setattr__(self, "per_subquery", dict(self.per_subquery))


@dataclass(frozen=True)
class Style:
    tone: Tone = Tone.NEUTRAL
    verbosity: Verbosity = Verbosity.NORMAL
    layout: Layout = Layout.PROSE


DEFAULT_STYLE = Style()


@dataclass(frozen=True)
class AnswerSection:
    section_id: str
    text: str
    citations: tuple[str, ...] = ()
    validation_state: ValidationState = ValidationState.FRESH
    correction_note: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "citations", tuple(self.citations))
        if self.validation_state is ValidationState.FLAGGED and not (self.correction_note or "").strip():
            raise ValueError("flagged sections need a non-empty correction note")


@dataclass(frozen=True)
class Answer:
    sections: tuple[AnswerSection, ...]
    style: Style = DEFAULT_STYLE

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if not self.sections:
            raise ValueError("answer must contain at least one section")
        ids = [s.section_id for s in self.sections]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate section ids: {ids}")

    def section(self, section_id: str) -> AnswerSection | None:
        for s in self.sections:
            if s.section_id == section_id:
                return s
        return None


@dataclass(frozen=True)
class Preference:
    dimension: str
    value: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    preferences: tuple[Preference, ...] = ()
    history_digest: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "preferences", tuple(self.preferences))
        keys = [(p.dimension, p.value) for p in self.preferences]
        if len(set(keys)) != len(keys):
            raise ValueError("at most one preference per (dimension, value)")
        object.__setattr__(self, "history_digest", {k: dict(v) for k, v in self.history_digest.items()})
