"""Feedback store: reusable debug templates, matching, replay, accounting.

A template is a session's feedback sequence with every session-local id
rewritten to a positional selector, so it can replay against a fresh
session for a similar query. Usage is metered in an append-only ledger
with closed-loop integer credits.
"""

from __future__ import annotations

import hashlib
import re
import uuid
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from . import actions as act
from . import records as rec
from .errors import (
    AllStepsUnresolvable,
    FeedbackRejected,
    InsufficientCredits,
    UnknownTemplate,
    Unpublishable,
    UnresolvableReference,
)
from .model import Actor, RelevanceLabel, RateValue, Stage, UserQuery
from .pipeline import PipelineDeps
from .session import SessionState, fold_log, open_session, submit_feedback

MATCH_THRESHOLD = 0.35

SYSTEM_ACCOUNT = "__system__"
SYSTEM_POOL = 1_000_000

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_REPLAY_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "searchloop/template-replay")


class UsageKind(str, Enum):
    VIEW = "view"
    DOWNLOAD = "download"
    RESOLUTION = "resolution"
    PURCHASE = "purchase"


@dataclass
class DebugTemplate:
    template_id: str
    author_id: str
    title: str
    query_pattern: tuple[str, ...]
    steps: tuple[dict, ...]
    price_credits: int
    created_at: datetime
    views: int = 0
    downloads: int = 0
    resolutions: int = 0

    def __post_init__(self):
        if self.price_credits < 0:
            raise ValueError("price_credits must be non-negative")


@dataclass(frozen=True)
class LedgerEntry:
    template_id: str
    payer_id: str
    kind: UsageKind
    credits: int
    at: datetime


def template_record(t: DebugTemplate) -> dict:
    return {
        "type": "debug_template",
        "template_id": t.template_id,
        "author_id": t.author_id,
        "title": t.title,
        "query_pattern": list(t.query_pattern),
        "steps": list(t.steps),
        "price_credits": t.price_credits,
        "created_at": rec.format_timestamp(t.created_at),
        "metrics": {"views": t.views, "downloads": t.downloads, "resolutions": t.resolutions},
    }


def parse_template(record: dict) -> DebugTemplate:
    metrics = record["metrics"]
    return DebugTemplate(
        template_id=record["template_id"],
        author_id=record["author_id"],
        title=record["title"],
        query_pattern=tuple(record["query_pattern"]),
        steps=tuple(record["steps"]),
        price_credits=record["price_credits"],
        created_at=rec.parse_timestamp(record["created_at"]),
        views=metrics["views"],
        downloads=metrics["downloads"],
        resolutions=metrics["resolutions"],
    )


def ledger_record(e: LedgerEntry) -> dict:
    return {
        "type": "ledger_entry",
        "template_id": e.template_id,
        "payer_id": e.payer_id,
        "kind": e.kind.value,
        "credits": e.credits,
        "at": rec.format_timestamp(e.at),
    }


def parse_ledger_entry(record: dict) -> LedgerEntry:
    return LedgerEntry(
        template_id=record["template_id"],
        payer_id=record["payer_id"],
        kind=UsageKind(record["kind"]),
        credits=record["credits"],
        at=rec.parse_timestamp(record["at"]),
    )


# ---------------------------------------------------------------------------
# packaging: concrete ids -> positional selectors


def _sub_pos(state: SessionState, sub_id: str) -> int:
    for i, sub in enumerate(state.plan.sub_queries, 1):
        if sub.sub_id == sub_id:
            return i
    raise UnresolvableReference(f"sub-query {sub_id} not in plan")


def _rank_of(state: SessionState, sub_id: str, chunk_id: str) -> int:
    ranked = state.evidence.per_subquery.get(sub_id)
    if ranked is None:
        raise UnresolvableReference(f"no evidence for sub-query {sub_id}")
    for entry in ranked.entries:
        if entry.chunk_id == chunk_id:
            return entry.rank
    raise UnresolvableReference(f"chunk {chunk_id} not ranked under {sub_id}")


def _section_pos(state: SessionState, section_id: str) -> int:
    for i, section in enumerate(state.answer.sections, 1):
        if section.section_id == section_id:
            return i
    raise UnresolvableReference(f"section {section_id} not in answer")


def _step_for(state: SessionState, event: act.FeedbackEvent) -> dict:
    """Rewrite one event against its pre-application state."""
    action = event.action
    stage = event.stage.value
    if isinstance(action, act.AddSubQuery):
        return {
            "stage": stage,
            "kind": "add_sub_query",
            "text": action.text,
            "insert_position": action.insert_position,
            "constraints": [[k, v] for k, v in action.constraints],
        }
    if isinstance(action, act.RemoveSubQuery):
        return {"stage": stage, "kind": "remove_sub_query", "sub_pos": _sub_pos(state, action.sub_id)}
    if isinstance(action, act.ReorderSubQueries):
        return {
            "stage": stage,
            "kind": "reorder_sub_queries",
            "order_pos": [_sub_pos(state, sid) for sid in action.order],
        }
    if isinstance(action, act.RefineConstraint):
        return {
            "stage": stage,
            "kind": "refine_constraint",
            "sub_pos": _sub_pos(state, action.sub_id),
            "key": action.key,
            "value": action.value,
        }
    if isinstance(action, act.AnnotateRelevance):
        return {
            "stage": stage,
            "kind": "annotate_relevance",
            "sub_pos": _sub_pos(state, action.sub_id),
            "rank": _rank_of(state, action.sub_id, action.chunk_id),
            "label": action.label.value,
        }
    if isinstance(action, act.RerankEvidence):
        return {
            "stage": stage,
            "kind": "rerank_evidence",
            "sub_pos": _sub_pos(state, action.sub_id),
            "rank": _rank_of(state, action.sub_id, action.chunk_id),
            "new_rank": action.new_rank,
        }
    if isinstance(action, act.SetFilter):
        return {"stage": stage, "kind": "set_filter", "filter": rec.retrieval_filter_record(action.filter)}
    if isinstance(action, act.CorrectFact):
        return {
            "stage": stage,
            "kind": "correct_fact",
            "section_pos": _section_pos(state, action.section_id),
            "note": action.note,
        }
    if isinstance(action, act.EditSection):
        return {
            "stage": stage,
            "kind": "edit_section",
            "section_pos": _section_pos(state, action.section_id),
            "new_text": action.new_text,
        }
    if isinstance(action, act.AdjustStyle):
        return {"stage": stage, "kind": "adjust_style", "style": rec.style_record(action.style)}
    raise UnresolvableReference(f"action {act.kind_of(action)} has no positional form")


def query_pattern(text: str) -> tuple[str, ...]:
    return tuple(sorted(_TOKEN_RE.findall(text.lower())))


def package_template(
    log_records: list[dict],
    deps: PipelineDeps,
    title: str,
    price_credits: int = 0,
    publish: bool = False,
    created_at: datetime | None = None,
) -> DebugTemplate:
    """Package a finished session's feedback walk into a template.

    The session must carry a like rating or be explicitly published.
    Every step is re-validated by replaying the template against a fresh
    session for the same query and comparing final content.
    """
    accepted = publish
    steps: list[dict] = []

    def before(state: SessionState, event: act.FeedbackEvent) -> None:
        if isinstance(event.action, act.Rate):
            return
        steps.append(_step_for(state, event))

    final = fold_log(log_records, deps, before=before)
    for record in log_records:
        if record.get("type") != "feedback_event":
            continue
        action = record.get("action", {})
        if action.get("kind") == "rate" and action.get("value") == RateValue.LIKE.value:
            accepted = True
    if not accepted:
        raise Unpublishable("session was not rated like and publish was not forced")
    if not steps:
        raise Unpublishable("session has no reusable feedback events")

    query_text = log_records[0]["query"]["text"]
    pattern = query_pattern(query_text)
    basis = rec.canonical_bytes({"pattern": list(pattern), "steps": steps})
    template = DebugTemplate(
        template_id="tpl_" + hashlib.sha256(basis).hexdigest()[:12],
        author_id=log_records[0]["query"]["user_id"],
        title=title,
        query_pattern=pattern,
        steps=tuple(steps),
        price_credits=price_credits,
        created_at=created_at if created_at is not None else datetime.now(timezone.utc),
    )

    probe = open_session(
        UserQuery(
            query_id=f"q_probe_{template.template_id}",
            user_id="probe",
            text=query_text,
            submitted_at=template.created_at,
        ),
        deps,
        session_id=f"probe_{template.template_id}",
        style=rec.parse_style(log_records[3]["answer"]["style"]),
    )
    probe, report = apply_template(template, probe, deps, now=template.created_at)
    skipped = [r for r in report if r["status"] == "skipped"]
    if skipped or probe.content_bytes() != final.content_bytes():
        raise Unpublishable(
            f"template replay does not reproduce the source session ({len(skipped)} steps skipped)"
        )
    return template


# ---------------------------------------------------------------------------
# matching and application


def match_score(pattern: tuple[str, ...], query_text: str) -> float:
    """Multiset Jaccard overlap between the pattern and query tokens."""
    a = Counter(pattern)
    b = Counter(_TOKEN_RE.findall(query_text.lower()))
    inter = sum((a & b).values())
    union = sum((a | b).values())
    return inter / union if union else 0.0


def match_templates(
    templates: list[DebugTemplate],
    query_text: str,
    threshold: float = MATCH_THRESHOLD,
) -> list[tuple[DebugTemplate, float]]:
    scored = [(t, match_score(t.query_pattern, query_text)) for t in templates]
    kept = [(t, s) for t, s in scored if s >= threshold]
    kept.sort(key=lambda pair: (-pair[1], pair[0].template_id))
    return kept


def _resolve_step(state: SessionState, step: dict) -> act.FeedbackAction:
    kind = step["kind"]
    plan = state.plan
    if kind == "add_sub_query":
        if not 0 <= step["insert_position"] <= len(plan.sub_queries):
            raise UnresolvableReference(f"insert position {step['insert_position']} out of range")
        return act.AddSubQuery(
            text=step["text"],
            insert_position=step["insert_position"],
            constraints=tuple((k, v) for k, v in step["constraints"]),
        )
    if kind in ("remove_sub_query", "refine_constraint", "annotate_relevance", "rerank_evidence"):
        pos = step["sub_pos"]
        if not 1 <= pos <= len(plan.sub_queries):
            raise UnresolvableReference(f"sub-query position {pos} out of range")
        sub_id = plan.sub_queries[pos - 1].sub_id
        if kind == "remove_sub_query":
            return act.RemoveSubQuery(sub_id=sub_id)
        if kind == "refine_constraint":
            return act.RefineConstraint(sub_id=sub_id, key=step["key"], value=step["value"])
        ranked = state.evidence.per_subquery.get(sub_id)
        rank = step["rank"]
        if ranked is None or not 1 <= rank <= len(ranked.entries):
            raise UnresolvableReference(f"rank {rank} out of range for sub-query position {pos}")
        chunk_id = ranked.entries[rank - 1].chunk_id
        if kind == "annotate_relevance":
            return act.AnnotateRelevance(sub_id=sub_id, chunk_id=chunk_id, label=RelevanceLabel(step["label"]))
        return act.RerankEvidence(sub_id=sub_id, chunk_id=chunk_id, new_rank=step["new_rank"])
    if kind == "reorder_sub_queries":
        order_pos = step["order_pos"]
        if sorted(order_pos) != list(range(1, len(plan.sub_queries) + 1)):
            raise UnresolvableReference(f"order {order_pos} is not a permutation of the current plan")
        return act.ReorderSubQueries(order=tuple(plan.sub_queries[p - 1].sub_id for p in order_pos))
    if kind == "set_filter":
        return act.SetFilter(filter=rec.parse_retrieval_filter(step["filter"]))
    if kind in ("correct_fact", "edit_section"):
        pos = step["section_pos"]
        if not 1 <= pos <= len(state.answer.sections):
            raise UnresolvableReference(f"section position {pos} out of range")
        section_id = state.answer.sections[pos - 1].section_id
        if kind == "correct_fact":
            return act.CorrectFact(section_id=section_id, note=step["note"])
        return act.EditSection(section_id=section_id, new_text=step["new_text"])
    if kind == "adjust_style":
        return act.AdjustStyle(style=rec.parse_style(step["style"]))
    raise UnresolvableReference(f"unknown step kind {kind!r}")


def apply_template(
    template: DebugTemplate,
    state: SessionState,
    deps: PipelineDeps,
    now: datetime | None = None,
) -> tuple[SessionState, list[dict]]:
    """Replay a template onto a live session as actor template_replay.

    Steps that no longer resolve (or fail validation) are skipped and
    reported; if nothing applies at all, that is an error.
    """
    when = now if now is not None else datetime.now(timezone.utc)
    report: list[dict] = []
    applied = 0
    for i, step in enumerate(template.steps):
        try:
            action = _resolve_step(state, step)
            event = act.FeedbackEvent(
                event_id=uuid.uuid5(
                    _REPLAY_NAMESPACE, f"{template.template_id}:{state.session_id}:{i}"
                ).hex,
                session_id=state.session_id,
                seq=state.log_offset + 1,
                stage=Stage(step["stage"]),
                actor=Actor.TEMPLATE_REPLAY,
                occurred_at=when,
                action=action,
            )
            submit_feedback(state, event, deps)
        except (UnresolvableReference, FeedbackRejected) as exc:
            report.append({"step": i, "kind": step["kind"], "status": "skipped", "reason": str(exc)})
            continue
        applied += 1
        report.append({"step": i, "kind": step["kind"], "status": "applied", "reason": None})
    if template.steps and applied == 0:
        raise AllStepsUnresolvable(f"no step of template {template.template_id} applied")
    return state, report


# ---------------------------------------------------------------------------
# persistence and accounting


class FeedbackStore:
    """Template shelf plus ledger and balances, optionally file-backed."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self.templates: dict[str, DebugTemplate] = {}
        self.balances: dict[str, int] = {SYSTEM_ACCOUNT: SYSTEM_POOL}
        self.ledger: list[LedgerEntry] = []
        if self.root is not None:
            self._load()

    # -- paths

    def _templates_dir(self) -> Path:
        return self.root / "templates"

    def _ledger_path(self) -> Path:
        return self.root / "ledger"

    def _balances_path(self) -> Path:
        return self.root / "balances"

    def _load(self) -> None:
        tdir = self._templates_dir()
        if tdir.exists():
            for path in sorted(tdir.iterdir()):
                rows = list(rec.read_records(path))
                if len(rows) == 1:
                    template = parse_template(rows[0])
                    self.templates[template.template_id] = template
        if self._ledger_path().exists():
            self.ledger = [parse_ledger_entry(r) for r in rec.read_records(self._ledger_path())]
        if self._balances_path().exists():
            rows = list(rec.read_records(self._balances_path()))
            if rows:
                self.balances = dict(rows[0]["balances"])
        self.balances.setdefault(SYSTEM_ACCOUNT, SYSTEM_POOL)

    def _save_template(self, template: DebugTemplate) -> None:
        if self.root is None:
            return
        self._templates_dir().mkdir(parents=True, exist_ok=True)
        rec.write_records(self._templates_dir() / template.template_id, [template_record(template)])

    def _save_balances(self) -> None:
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        record = {"type": "balances", "balances": dict(sorted(self.balances.items()))}
        rec.write_records(self._balances_path(), [record])

    def _append_ledger(self, entry: LedgerEntry) -> None:
        self.ledger.append(entry)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            rec.append_record(self._ledger_path(), ledger_record(entry))

    # -- operations

    def add_template(self, template: DebugTemplate) -> None:
        self.templates[template.template_id] = template
        self._save_template(template)

    def get_template(self, template_id: str) -> DebugTemplate:
        if template_id not in self.templates:
            raise UnknownTemplate(template_id)
        return self.templates[template_id]

    def match(self, query_text: str, threshold: float = MATCH_THRESHOLD) -> list[tuple[DebugTemplate, float]]:
        return match_templates(sorted(self.templates.values(), key=lambda t: t.template_id), query_text, threshold)

    def grant(self, user_id: str, credits: int) -> None:
        """Move credits from the system pool to a user; total is conserved."""
        if credits < 0:
            raise ValueError("grant must be non-negative")
        if self.balances.get(SYSTEM_ACCOUNT, 0) < credits:
            raise InsufficientCredits("system pool exhausted")
        self.balances[SYSTEM_ACCOUNT] -= credits
        self.balances[user_id] = self.balances.get(user_id, 0) + credits
        self._save_balances()

    def total_credits(self) -> int:
        return sum(self.balances.values())

    def record_usage(
        self,
        template_id: str,
        kind: UsageKind,
        payer_id: str,
        at: datetime | None = None,
    ) -> LedgerEntry:
        template = self.get_template(template_id)
        when = at if at is not None else datetime.now(timezone.utc)
        credits = 0
        if kind is UsageKind.PURCHASE:
            credits = template.price_credits
            if self.balances.get(payer_id, 0) < credits:
                raise InsufficientCredits(
                    f"{payer_id} holds {self.balances.get(payer_id, 0)} credits, purchase needs {credits}"
                )
            self.balances[payer_id] = self.balances.get(payer_id, 0) - credits
            self.balances[template.author_id] = self.balances.get(template.author_id, 0) + credits
            self._save_balances()
        elif kind is UsageKind.VIEW:
            template = replace(template, views=template.views + 1)
        elif kind is UsageKind.DOWNLOAD:
            template = replace(template, downloads=template.downloads + 1)
        elif kind is UsageKind.RESOLUTION:
            template = replace(template, resolutions=template.resolutions + 1)
        self.templates[template_id] = template
        self._save_template(template)
        entry = LedgerEntry(template_id=template_id, payer_id=payer_id, kind=kind, credits=credits, at=when)
        self._append_ledger(entry)
        return entry
