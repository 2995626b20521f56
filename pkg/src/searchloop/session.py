"""Event-sourced session runtime.

A session is an append-only log: the bootstrap pipeline outputs are the
first four entries, every subsequent entry is a feedback event (or a
proposal rejection record), and the materialized state is a
deterministic fold over the log. Replaying a log therefore reproduces
the live state byte for byte, which is the property most tests lean on.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from . import actions as act
from . import records as rec
from .errors import CorruptLog, FeedbackRejected, StageExecutionError, VersionMismatch
from .feedback import (
    apply_decomposition_feedback,
    apply_generation_feedback,
    apply_retrieval_feedback,
    rebuild_list,
)
from .index import search
from .model import (
    Answer,
    EvidenceSet,
    PIPELINE_STAGES,
    QueryPlan,
    RankedEntry,
    RankedList,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    StageStatus,
    Style,
    DEFAULT_STYLE,
    UserQuery,
    ValidationState,
)
from .pipeline import PipelineDeps, run_pipeline
from .validation import validate_event

BOOTSTRAP_ENTRIES = 4

SNAPSHOT_FORMAT_VERSION = 1


class EventLog:
    """Append-only per-session log, optionally mirrored to a file."""

    def __init__(self, session_id: str, records: list[dict] | None = None, path: str | Path | None = None):
        self.session_id = session_id
        self.records: list[dict] = list(records or [])
        self.path = Path(path) if path is not None else None

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            rec.append_record(self.path, record)

    def events(self) -> list[act.FeedbackEvent]:
        return [rec.parse_feedback_event(r) for r in self.records if r.get("type") == "feedback_event"]


def load_log(path: str | Path) -> EventLog:
    records = list(rec.read_records(path))
    if not records or records[0].get("type") != "session_opened":
        raise CorruptLog(f"{path} does not start with a session_opened record")
    return EventLog(session_id=records[0]["session_id"], records=records, path=path)


def filter_fingerprint(filt: RetrievalFilter) -> str:
    return hashlib.sha256(rec.canonical_bytes(rec.retrieval_filter_record(filt))).hexdigest()[:16]


@dataclass
class SessionState:
    session_id: str
    query: UserQuery
    plan: QueryPlan
    evidence: EvidenceSet
    answer: Answer
    stage_status: dict[Stage, StageStatus]
    log_offset: int
    log: EventLog
    next_sub_ordinal: int = 1
    retrieval_cache: dict[tuple[str, str], RankedList] = field(default_factory=dict)
    labels: dict[str, dict[str, RelevanceLabel]] = field(default_factory=dict)
    pins: dict[str, dict[str, int]] = field(default_factory=dict)

    def canonical_record(self) -> dict:
        return {
            "type": "session_state",
            "session_id": self.session_id,
            "query": rec.user_query_record(self.query),
            "plan": rec.query_plan_record(self.plan),
            "evidence": rec.evidence_set_record(self.evidence),
            "answer": rec.answer_record(self.answer),
            "stage_status": {s.value: st.value for s, st in self.stage_status.items()},
            "log_offset": self.log_offset,
            "next_sub_ordinal": self.next_sub_ordinal,
            "labels": {sid: {cid: lab.value for cid, lab in sorted(m.items())} for sid, m in sorted(self.labels.items())},
            "pins": {sid: dict(sorted(m.items())) for sid, m in sorted(self.pins.items())},
        }

    def canonical_bytes(self) -> bytes:
        return rec.canonical_bytes(self.canonical_record())

    def content_record(self) -> dict:
        """State minus session identity: what a reproduced session must match."""
        record = self.canonical_record()
        for key in ("type", "session_id", "query", "log_offset"):
            record.pop(key)
        record["type"] = "session_content"
        return record

    def allocate_sub_id(self) -> str:
        """Hand out the next sub-query id. Ordinals are never reused within
        a session, so a removed Q4 is not resurrected by a later add."""
        sub_id = f"Q{self.next_sub_ordinal}"
        self.next_sub_ordinal += 1
        return sub_id

    def content_bytes(self) -> bytes:
        return rec.canonical_bytes(self.content_record())

    def stage_output(self, stage: Stage) -> dict:
        if stage is Stage.DECOMPOSITION:
            return rec.query_plan_record(self.plan)
        if stage is Stage.RETRIEVAL:
            return rec.evidence_set_record(self.evidence)
        if stage is Stage.GENERATION:
            return rec.answer_record(self.answer)
        raise ValueError(f"no stage output for {stage}")


def _clean_status() -> dict[Stage, StageStatus]:
    return {s: StageStatus.CLEAN for s in PIPELINE_STAGES}


_SUB_ORDINAL_RE = re.compile(r"^Q(\d+)$")


def _seed_ordinal(plan: QueryPlan) -> int:
    numbered = [int(m.group(1)) for s in plan.sub_queries if (m := _SUB_ORDINAL_RE.match(s.sub_id))]
    return max(numbered, default=len(plan.sub_queries)) + 1


def _strip(entries: tuple[RankedEntry, ...]) -> RankedList:
    return RankedList(entries=tuple(replace(e, label=None, pin=None) for e in entries))


def open_session(
    query: UserQuery,
    deps: PipelineDeps,
    session_id: str,
    log_path: str | Path | None = None,
    style: Style = DEFAULT_STYLE,
) -> SessionState:
    """Run the full pipeline and record its outputs as bootstrap log entries."""
    if log_path is not None:
        log_path = Path(log_path)
        if log_path.exists():
            raise ValueError(f"session log already exists: {log_path}")
        log_path.parent.mkdir(parents=True, exist_ok=True)
    plan, evidence, answer = run_pipeline(query, deps, style=style)
    log = EventLog(session_id, path=log_path)
    log.append({"type": "session_opened", "seq": 1, "session_id": session_id, "query": rec.user_query_record(query)})
    log.append({"type": "bootstrap_plan", "seq": 2, "session_id": session_id, "plan": rec.query_plan_record(plan)})
    log.append({"type": "bootstrap_evidence", "seq": 3, "session_id": session_id, "evidence": rec.evidence_set_record(evidence)})
    log.append({"type": "bootstrap_answer", "seq": 4, "session_id": session_id, "answer": rec.answer_record(answer)})
    state = SessionState(
        session_id=session_id,
        query=query,
        plan=plan,
        evidence=evidence,
        answer=answer,
        stage_status=_clean_status(),
        log_offset=BOOTSTRAP_ENTRIES,
        log=log,
        next_sub_ordinal=_seed_ordinal(plan),
    )
    fp = filter_fingerprint(evidence.active_filter)
    for sub_id, ranked in evidence.per_subquery.items():
        state.retrieval_cache[(sub_id, fp)] = _strip(ranked.entries)
    return state


# ---------------------------------------------------------------------------
# re-execution helpers


def _decorate(raw: RankedList, labels: dict[str, RelevanceLabel], pins: dict[str, int]) -> RankedList:
    """Re-apply session knowledge to a raw ranking: drop chunks labeled
    irrelevant, attach the other labels, re-seat persistent pins."""
    entries = []
    for e in raw.entries:
        label = labels.get(e.chunk_id)
        if label is RelevanceLabel.IRRELEVANT:
            continue
        entries.append(replace(e, label=label, pin=pins.get(e.chunk_id)))
    return rebuild_list(entries)


def _raw_list(state: SessionState, sub_id: str, deps: PipelineDeps) -> RankedList:
    fp = filter_fingerprint(state.evidence.active_filter)
    key = (sub_id, fp)
    cached = state.retrieval_cache.get(key)
    if cached is None:
        sub = state.plan.sub(sub_id)
        cfg = deps.config
        cached = search(deps.index, sub, state.evidence.active_filter, k=cfg.retrieval_k, k1=cfg.bm25_k1, b=cfg.bm25_b)
        state.retrieval_cache[key] = cached
    return cached


def _rebuild_evidence(state: SessionState, deps: PipelineDeps) -> None:
    per = {}
    for sub in state.plan.sub_queries:
        raw = _raw_list(state, sub.sub_id, deps)
        per[sub.sub_id] = _decorate(raw, state.labels.get(sub.sub_id, {}), state.pins.get(sub.sub_id, {}))
    state.evidence = EvidenceSet(per_subquery=per, active_filter=state.evidence.active_filter)


def _regenerate(state: SessionState, deps: PipelineDeps, scope: set[str] | None) -> None:
    """Re-run generation, preserving what the user has validated or written.

    ``scope`` limits regeneration to the named sections; None regenerates
    everything that is not user-validated/user-corrected.
    """
    current = {s.section_id: s for s in state.answer.sections}
    fresh = deps.generator().generate(state.query, state.plan, state.evidence, state.answer.style)
    sections = []
    for new in fresh.sections:
        old = current.get(new.section_id)
        if old is not None and old.validation_state in (ValidationState.USER_VALIDATED, ValidationState.USER_CORRECTED):
            sections.append(old)
        elif old is not None and scope is not None and new.section_id not in scope:
            sections.append(old)
        else:
            sections.append(new)
    state.answer = Answer(sections=tuple(sections), style=state.answer.style)


def _apply_event(state: SessionState, event: act.FeedbackEvent, deps: PipelineDeps) -> None:
    action = event.action
    stage = event.stage

    if stage is Stage.DECOMPOSITION:
        state.stage_status[Stage.RETRIEVAL] = StageStatus.DIRTY
        state.stage_status[Stage.GENERATION] = StageStatus.DIRTY
        new_sub_id = state.allocate_sub_id() if isinstance(action, act.AddSubQuery) else None
        state.plan = apply_decomposition_feedback(state.plan, action, event.actor, new_sub_id)
        if isinstance(action, act.RefineConstraint):
            state.retrieval_cache = {k: v for k, v in state.retrieval_cache.items() if k[0] != action.sub_id}
        _run_stage(state, Stage.RETRIEVAL, lambda: _rebuild_evidence(state, deps))
        _run_stage(state, Stage.GENERATION, lambda: _regenerate(state, deps, None))
        return

    if stage is Stage.RETRIEVAL:
        state.stage_status[Stage.RETRIEVAL] = StageStatus.DIRTY
        state.stage_status[Stage.GENERATION] = StageStatus.DIRTY
        if isinstance(action, act.AnnotateRelevance):
            state.labels.setdefault(action.sub_id, {})[action.chunk_id] = action.label
        elif isinstance(action, act.RerankEvidence):
            pins = state.pins.setdefault(action.sub_id, {})
            for cid in [c for c, r in pins.items() if r == action.new_rank and c != action.chunk_id]:
                del pins[cid]
            pins[action.chunk_id] = action.new_rank
        elif isinstance(action, act.SetFilter):
            state.evidence = apply_retrieval_feedback(state.evidence, action)
        _run_stage(state, Stage.RETRIEVAL, lambda: _rebuild_evidence(state, deps))
        _run_stage(state, Stage.GENERATION, lambda: _regenerate(state, deps, None))
        return

    if stage is Stage.GENERATION:
        new_answer, inv = apply_generation_feedback(state.answer, action)
        state.answer = new_answer
        if Stage.GENERATION in inv.stages_to_rerun:
            state.stage_status[Stage.GENERATION] = StageStatus.DIRTY
            scope = set(inv.sections_to_regenerate) if inv.sections_to_regenerate is not None else None
            _run_stage(state, Stage.GENERATION, lambda: _regenerate(state, deps, scope))
        return

    # final stage: the rating lives on the log; state is untouched.


def _run_stage(state: SessionState, stage: Stage, thunk: Callable[[], None]) -> None:
    try:
        thunk()
    except Exception as exc:
        state.stage_status[stage] = StageStatus.ERROR
        raise StageExecutionError(stage.value, exc) from exc
    state.stage_status[stage] = StageStatus.CLEAN


def submit_feedback(state: SessionState, event: act.FeedbackEvent, deps: PipelineDeps) -> SessionState:
    """Validate, log, apply, and re-execute whatever the event dirtied.

    On a stage execution error the event stays on the log and the failed
    stage is marked error; `retry_dirty` re-runs it.
    """
    result = validate_event(event, state)
    if not result.ok:
        raise FeedbackRejected(result.code or "rejected", result.detail)
    state.log.append(rec.feedback_event_record(event))
    state.log_offset = event.seq
    _apply_event(state, event, deps)
    return state


def retry_dirty(state: SessionState, deps: PipelineDeps) -> SessionState:
    """Re-run stages left dirty (or failed) by an earlier submit."""
    if state.stage_status[Stage.RETRIEVAL] is not StageStatus.CLEAN:
        _run_stage(state, Stage.RETRIEVAL, lambda: _rebuild_evidence(state, deps))
    if state.stage_status[Stage.GENERATION] is not StageStatus.CLEAN:
        _run_stage(state, Stage.GENERATION, lambda: _regenerate(state, deps, None))
    return state


# ---------------------------------------------------------------------------
# replay


def fold_log(
    records: list[dict],
    deps: PipelineDeps,
    before: Callable[[SessionState, act.FeedbackEvent], None] | None = None,
    after: Callable[[SessionState, act.FeedbackEvent], None] | None = None,
) -> SessionState:
    """Deterministic fold of a serialized log into a session state.

    Raises CorruptLog on sequence gaps, malformed bootstrap entries, or
    events that do not validate against the reconstructed snapshot.
    """
    if len(records) < BOOTSTRAP_ENTRIES:
        raise CorruptLog(f"log holds {len(records)} records, bootstrap needs {BOOTSTRAP_ENTRIES}")
    for i, record in enumerate(records):
        if record.get("seq") != i + 1:
            raise CorruptLog(f"sequence gap: record {i} carries seq {record.get('seq')}")
    expected = ("session_opened", "bootstrap_plan", "bootstrap_evidence", "bootstrap_answer")
    kinds = tuple(r.get("type") for r in records[:BOOTSTRAP_ENTRIES])
    if kinds != expected:
        raise CorruptLog(f"bootstrap entries {kinds}, expected {expected}")

    session_id = records[0]["session_id"]
    try:
        query = rec.parse_user_query(records[0]["query"])
        plan = rec.parse_query_plan(records[1]["plan"])
        evidence = rec.parse_evidence_set(records[2]["evidence"])
        answer = rec.parse_answer(records[3]["answer"])
    except (KeyError, ValueError) as exc:
        raise CorruptLog(f"malformed bootstrap entry: {exc}") from exc

    log = EventLog(session_id)
    for record in records[:BOOTSTRAP_ENTRIES]:
        log.append(record)
    state = SessionState(
        session_id=session_id,
        query=query,
        plan=plan,
        evidence=evidence,
        answer=answer,
        stage_status=_clean_status(),
        log_offset=BOOTSTRAP_ENTRIES,
        log=log,
        next_sub_ordinal=_seed_ordinal(plan),
    )
    fp = filter_fingerprint(evidence.active_filter)
    for sub_id, ranked in evidence.per_subquery.items():
        state.retrieval_cache[(sub_id, fp)] = _strip(ranked.entries)

    for record in records[BOOTSTRAP_ENTRIES:]:
        kind = record.get("type")
        if kind == "feedback_event":
            try:
                event = rec.parse_feedback_event(record)
            except (KeyError, ValueError) as exc:
                raise CorruptLog(f"malformed event at seq {record.get('seq')}: {exc}") from exc
            if before is not None:
                before(state, event)
            try:
                submit_feedback(state, event, deps)
            except FeedbackRejected as exc:
                raise CorruptLog(f"event at seq {event.seq} does not validate: {exc}") from exc
            if after is not None:
                after(state, event)
        elif kind == "proposal_rejected":
            state.log.append(record)
            state.log_offset = record["seq"]
        else:
            raise CorruptLog(f"unknown log record type {kind!r} at seq {record.get('seq')}")
    return state


def replay(log: EventLog | list[dict], deps: PipelineDeps) -> SessionState:
    records = log.records if isinstance(log, EventLog) else log
    return fold_log(records, deps)


# ---------------------------------------------------------------------------
# snapshots


def snapshot_record(state: SessionState) -> dict:
    return {
        "type": "session_snapshot",
        "version": SNAPSHOT_FORMAT_VERSION,
        "state": state.canonical_record(),
    }


def save_snapshot(state: SessionState, path: str | Path) -> None:
    rec.write_records(path, [snapshot_record(state)])


def restore_snapshot(source: str | Path | dict) -> SessionState:
    """Rebuild a session from a snapshot record or file.

    The restored state carries a cold retrieval cache and an in-memory
    log positioned at the recorded offset; cache soundness makes later
    submits behave exactly as they would have on the live object.
    """
    if isinstance(source, dict):
        record = source
    else:
        try:
            rows = list(rec.read_records(source))
        except Exception as exc:
            raise CorruptLog(f"unreadable snapshot: {exc}") from exc
        if len(rows) != 1:
            raise CorruptLog(f"snapshot must hold exactly one record, found {len(rows)}")
        record = rows[0]
    if record.get("type") != "session_snapshot":
        raise VersionMismatch(f"not a snapshot record: {record.get('type')!r}")
    if record.get("version") != SNAPSHOT_FORMAT_VERSION:
        raise VersionMismatch(f"snapshot format {record.get('version')!r}, expected {SNAPSHOT_FORMAT_VERSION}")
    try:
        body = record["state"]
        state = SessionState(
            session_id=body["session_id"],
            query=rec.parse_user_query(body["query"]),
            plan=rec.parse_query_plan(body["plan"]),
            evidence=rec.parse_evidence_set(body["evidence"]),
            answer=rec.parse_answer(body["answer"]),
            stage_status={Stage(k): StageStatus(v) for k, v in body["stage_status"].items()},
            log_offset=body["log_offset"],
            log=EventLog(body["session_id"]),
            next_sub_ordinal=body["next_sub_ordinal"],
            labels={
                sid: {cid: RelevanceLabel(v) for cid, v in m.items()}
                for sid, m in body.get("labels", {}).items()
            },
            pins={sid: dict(m) for sid, m in body.get("pins", {}).items()},
        )
    except (KeyError, ValueError) as exc:
        raise CorruptLog(f"malformed snapshot state: {exc}") from exc
    return state
