"""The three-stage pipeline: decompose, retrieve, generate.

Stage implementations are deterministic functions of their inputs so a
session can be re-executed and replayed byte-for-byte. The extractive
generator is the reference backend; an external LLM backend exists behind
configuration but is never required.
"""

from __future__ import annotations

import json
import re
import urllib.request
from dataclasses import dataclass, replace

from .errors import ConfigError, DecompositionFailed, GenerationFailed
from .index import Index, search
from .model import (
    Answer,
    AnswerSection,
    DEFAULT_STYLE,
    EvidenceSet,
    Layout,
    Provenance,
    QueryPlan,
    RankedList,
    RetrievalFilter,
    Style,
    SubQuery,
    UserQuery,
    UserProfile,
    Verbosity,
)

MAX_SUBQUERIES = 8

#: Section id for the degenerate no-evidence answer.
EMPTY_ANSWER_SECTION_ID = "s0"
EMPTY_ANSWER_TEXT = "no supporting evidence found"


@dataclass(frozen=True)
class PipelineConfig:
    decomposer_kind: str = "rules"
    generator_kind: str = "extractive_mock"
    generator_endpoint: str | None = None
    retrieval_k: int = 5
    bm25_k1: float = 1.2
    bm25_b: float = 0.75


_CONFIG_KEYS = {
    "decomposer.kind": ("decomposer_kind", str),
    "generator.kind": ("generator_kind", str),
    "generator.endpoint": ("generator_endpoint", str),
    "retrieval.k": ("retrieval_k", int),
    "retrieval.bm25.k1": ("bm25_k1", float),
    "retrieval.bm25.b": ("bm25_b", float),
}


def parse_config(text: str) -> PipelineConfig:
    """Parse a key-value config file (``key = value``, ``#`` comments)."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, cast = _CONFIG_KEYS[key]
        try:
            values[attr] = cast(value) if value != "" else None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return PipelineConfig(**values)  # type: ignore[arg-type]


def dump_config(config: PipelineConfig) -> str:
    lines = []
    for key, (attr, _) in _CONFIG_KEYS.items():
        value = getattr(config, attr)
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# decomposition

_TRIP_TEMPLATES = (
    "What are the best flight options from [User's City] to the [conference location]?",
    "Where and when will {event} be held?",
    "What are the recommended hotels near the conference venue?",
    "What are some sightseeing attractions near the conference venue?",
)

#: (pattern, templates) rule table consulted in order; the first match wins.
RULE_TABLE: tuple[tuple[re.Pattern[str], tuple[str, ...]], ...] = (
    (re.compile(r"^\s*plan\s+a\s+trip\s+to\s+attend\s+(?P<event>.+?)\s*[.!?]?\s*$", re.IGNORECASE), _TRIP_TEMPLATES),
)

#: Exact-query overlay, consulted before the rule table.
FIXTURE_PLANS: dict[str, tuple[str, ...]] = {
    "Plan a trip to attend SIGIR 2025": tuple(t.format(event="SIGIR 2025") for t in _TRIP_TEMPLATES),
}


def decompose(
    query: UserQuery,
    profile: UserProfile | None = None,
    max_subqueries: int = MAX_SUBQUERIES,
) -> QueryPlan:
    """Produce plan version 1 for a query.

    Fixture overlay first, then the rule table; queries matching nothing
    get the identity decomposition (one sub-query equal to the query).
    The optional profile is accepted for interface parity; the rule
    decomposer does not consult it.
    """
    del profile
    texts: tuple[str, ...] | None = FIXTURE_PLANS.get(query.text)
    if texts is None:
        for pattern, templates in RULE_TABLE:
            match = pattern.match(query.text)
            if match:
                texts = tuple(t.format(event=match.group("event")) for t in templates)
                break
    if texts is None:
        texts = (query.text,)
    texts = texts[:max_subqueries]
    if not texts:
        raise DecompositionFailed(f"no sub-queries for {query.text!r}")
    subs = tuple(
        SubQuery(sub_id=f"Q{i + 1}", text=text, position=i, provenance=Provenance.SYSTEM)
        for i, text in enumerate(texts)
    )
    return QueryPlan(plan_version=1, parent_version=None, sub_queries=subs)


# ---------------------------------------------------------------------------
# retrieval

def execute_plan(
    plan: QueryPlan,
    index: Index,
    filt: RetrievalFilter = RetrievalFilter(),
    config: PipelineConfig = PipelineConfig(),
) -> EvidenceSet:
    """Run retrieval for every sub-query; exactly one ranked list per sub_id."""
    per_subquery = {
        sub.sub_id: search(index, sub, filt, k=config.retrieval_k, k1=config.bm25_k1, b=config.bm25_b)
        for sub in plan.sub_queries
    }
    return EvidenceSet(per_subquery=per_subquery, active_filter=filt)


# ---------------------------------------------------------------------------
# generation

_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")

_VERBOSITY_SENTENCES = {
    Verbosity.BRIEF: 1,
    Verbosity.NORMAL: 2,
    Verbosity.DETAILED: 3,
}


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_RE.split(text.strip()) if s]


def section_id_for(sub_id: str) -> str:
    return f"s_{sub_id}"


class ExtractiveGenerator:
    """Reference backend: quote the top-ranked chunk under each sub-query.

    The section body is the leading sentences of the top-1 chunk (count
    set by verbosity) with a trailing ``[chunk_id]`` citation marker,
    headed by the sub-query text. With layout=bullets every line carries
    a ``- `` prefix.
    """

    kind = "extractive_mock"

    def __init__(self, index: Index):
        self.index = index

    def render_section(self, sub: SubQuery, ranked: RankedList, style: Style) -> AnswerSection:
        if ranked.entries:
            top = ranked.entries[0]
            chunk = self.index.chunk_store[top.chunk_id]
            n = _VERBOSITY_SENTENCES[style.verbosity]
            excerpt = " ".join(split_sentences(chunk.text)[:n]) + f" [{top.chunk_id}]"
            citations: tuple[str, ...] = (top.chunk_id,)
        else:
            excerpt = "No supporting evidence found."
            citations = ()
        if style.layout is Layout.BULLETS:
            text = f"- {sub.text}\n- {excerpt}"
        else:
            text = f"{sub.text}\n{excerpt}"
        return AnswerSection(section_id=section_id_for(sub.sub_id), text=text, citations=citations)

    def degenerate_section(self, style: Style) -> AnswerSection:
        text = EMPTY_ANSWER_TEXT if style.layout is not Layout.BULLETS else f"- {EMPTY_ANSWER_TEXT}"
        return AnswerSection(section_id=EMPTY_ANSWER_SECTION_ID, text=text, citations=())

    def generate(self, query: UserQuery, plan: QueryPlan, evidence: EvidenceSet, style: Style) -> Answer:
        del query
        if all(not rl.entries for rl in evidence.per_subquery.values()):
            return Answer(sections=(self.degenerate_section(style),), style=style)
        sections = tuple(
            self.render_section(sub, evidence.per_subquery.get(sub.sub_id, RankedList()), style)
            for sub in plan.sub_queries
        )
        return Answer(sections=sections, style=style)


class ExternalGenerator:
    """LLM-backed generation over a configured HTTP endpoint.

    Exists behind ``generator.kind = external_llm``; the reference suite
    never exercises the network path. Responses must cite only chunks
    present in the evidence, otherwise GenerationFailed is raised.
    """

    kind = "external_llm"

    def __init__(self, endpoint: str, index: Index):
        if not endpoint:
            raise ConfigError("generator.endpoint required for external_llm")
        self.endpoint = endpoint
        self.index = index

    def generate(self, query: UserQuery, plan: QueryPlan, evidence: EvidenceSet, style: Style) -> Answer:
        from . import records as rec

        payload = {
            "query": query.text,
            "plan": rec.query_plan_record(plan),
            "evidence": rec.evidence_set_record(evidence),
            "style": rec.style_record(style),
        }
        req = urllib.request.Request(
            self.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req, timeout=60) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except Exception as exc:
            raise GenerationFailed(f"external generator call failed: {exc}") from exc
        return self.parse_response(body, evidence, style)

    def parse_response(self, body: dict, evidence: EvidenceSet, style: Style) -> Answer:
        known = {e.chunk_id for rl in evidence.per_subquery.values() for e in rl.entries}
        sections = []
        for raw in body.get("sections", []):
            citations = tuple(raw.get("citations", ()))
            stray = [c for c in citations if c not in known]
            if stray:
                raise GenerationFailed(f"citations outside evidence: {stray}")
            sections.append(AnswerSection(section_id=raw["section_id"], text=raw["text"], citations=citations))
        if not sections:
            raise GenerationFailed("external generator returned no sections")
        return Answer(sections=tuple(sections), style=style)


def make_generator(config: PipelineConfig, index: Index):
    if config.generator_kind == "extractive_mock":
        return ExtractiveGenerator(index)
    if config.generator_kind == "external_llm":
        return ExternalGenerator(config.generator_endpoint or "", index)
    raise ConfigError(f"unknown generator kind {config.generator_kind!r}")


def generate_answer(
    query: UserQuery,
    plan: QueryPlan,
    evidence: EvidenceSet,
    style: Style,
    index: Index,
    config: PipelineConfig = PipelineConfig(),
) -> Answer:
    return make_generator(config, index).generate(query, plan, evidence, style)


# ---------------------------------------------------------------------------
# the whole pipeline

@dataclass(frozen=True)
class PipelineDeps:
    """Everything a session needs to (re-)execute stages."""

    index: Index
    config: PipelineConfig = PipelineConfig()

    def generator(self):
        return make_generator(self.config, self.index)


def run_pipeline(
    query: UserQuery,
    deps: PipelineDeps,
    style: Style = DEFAULT_STYLE,
    profile: UserProfile | None = None,
) -> tuple[QueryPlan, EvidenceSet, Answer]:
    """Decompose, retrieve, and generate. Fails with the stage's own error."""
    if deps.config.decomposer_kind != "rules":
        raise ConfigError(f"unknown decomposer kind {deps.config.decomposer_kind!r}")
    plan = decompose(query, profile)
    evidence = execute_plan(plan, deps.index, RetrievalFilter(), deps.config)
    answer = deps.generator().generate(query, plan, evidence, style)
    return plan, evidence, answer
