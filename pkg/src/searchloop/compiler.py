"""Offline compilation of session logs into stage training batches.

Each log is folded with observer hooks so every sample can cite the
pre-event context it came from. Three sample streams come out, one per
pipeline stage, plus an accepted-list sidecar holding the events that
express approval rather than correction. The accounting is total: every
stage feedback event inside the window lands in exactly one sample's
source ids or one sidecar entry, which the tests reconcile.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from pathlib import Path

from . import actions as act
from . import records as rec
from .errors import CorruptLog, StageExecutionError
from .index import chunk_passes_filter
from .model import RelevanceLabel, Stage
from .pipeline import PipelineDeps
from .session import SessionState, fold_log

#: Normalized edit distance at or below this counts as "accepted with
#: minimal edits" and goes to the sidecar instead of a preference pair.
MIN_EDIT_THRESHOLD = 0.1


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_distance(a: str, b: str) -> float:
    return levenshtein(a, b) / max(len(a), len(b), 1)


@dataclass
class Window:
    start: date
    end: date

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"window end {self.end} must be after start {self.start}")

    def contains(self, at: datetime) -> bool:
        lo = datetime.combine(self.start, time.min, tzinfo=timezone.utc)
        hi = datetime.combine(self.end, time.min, tzinfo=timezone.utc)
        return lo <= at < hi


@dataclass
class BatchResult:
    decomposition: list[dict] = field(default_factory=list)
    retrieval: list[dict] = field(default_factory=list)
    generation: list[dict] = field(default_factory=list)
    accepted: list[dict] = field(default_factory=list)
    skipped_logs: int = 0

    def counts(self) -> dict[str, int]:
        return {
            "decomposition": len(self.decomposition),
            "retrieval": len(self.retrieval),
            "generation": len(self.generation),
        }


def _plan_texts(state: SessionState) -> list[str]:
    out = []
    for sub in state.plan.sub_queries:
        if sub.constraints:
            rendered = ", ".join(f"{k}={v}" for k, v in sub.constraints)
            out.append(f"{sub.text} [{rendered}]")
        else:
            out.append(sub.text)
    return out


@dataclass
class _Signal:
    chunk_id: str
    positive: bool
    seq: int
    note: str


class _LogScan:
    """Accumulates per-log observations while the fold runs."""

    def __init__(self, records: list[dict], window: Window, chunk_store: dict):
        self.window = window
        self.chunk_store = chunk_store
        self.session_id = records[0]["session_id"]
        self.query_text = records[0]["query"]["text"]
        self.bootstrap_plan_texts: list[str] = []
        self.deco_event_ids: list[str] = []
        self.deco_actors: dict[str, int] = {}
        self.signals: dict[str, list[_Signal]] = {}
        self.sub_events: dict[str, list[str]] = {}
        self.sub_texts: dict[str, str] = {}
        self.first_section_text: dict[str, str] = {}
        self.last_section_text: dict[str, str] = {}
        self.section_event_ids: dict[str, list[str]] = {}
        self.accepted: list[dict] = []
        self.in_window_events = 0

    def note_sections(self, state: SessionState) -> None:
        for section in state.answer.sections:
            self.first_section_text.setdefault(section.section_id, section.text)
            self.last_section_text[section.section_id] = section.text

    def note_plan(self, state: SessionState) -> None:
        for sub in state.plan.sub_queries:
            self.sub_texts[sub.sub_id] = sub.text

    def _sidecar(self, kind: str, event: act.FeedbackEvent, **extra) -> None:
        self.accepted.append(
            {
                "type": "accepted_entry",
                "kind": kind,
                "session_id": self.session_id,
                "event_ids": [event.event_id],
                **extra,
            }
        )

    def before_event(self, state: SessionState, event: act.FeedbackEvent) -> None:
        if not self.window.contains(event.occurred_at):
            return
        self.in_window_events += 1
        action = event.action
        if event.stage is Stage.DECOMPOSITION:
            self.deco_event_ids.append(event.event_id)
            self.deco_actors[event.actor.value] = self.deco_actors.get(event.actor.value, 0) + 1
        elif isinstance(action, act.AnnotateRelevance):
            positive = action.label is not RelevanceLabel.IRRELEVANT
            weight = " with weight 0.5" if action.label is RelevanceLabel.PARTIALLY_RELEVANT else ""
            self._signal(
                action.sub_id,
                _Signal(action.chunk_id, positive, event.seq, f"labeled {action.label.value}{weight} ({event.event_id})"),
            )
            self.sub_events.setdefault(action.sub_id, []).append(event.event_id)
        elif isinstance(action, act.RerankEvidence):
            ranked = state.evidence.per_subquery.get(action.sub_id)
            current = ranked.entry(action.chunk_id).rank if ranked and action.chunk_id in ranked.chunk_ids() else None
            if current is not None and action.new_rank < current:
                self._signal(
                    action.sub_id,
                    _Signal(
                        action.chunk_id,
                        True,
                        event.seq,
                        f"pinned upward {current}->{action.new_rank} ({event.event_id})",
                    ),
                )
            self.sub_events.setdefault(action.sub_id, []).append(event.event_id)
        elif isinstance(action, act.SetFilter):
            # The event itself is accounted once, in the sidecar; the
            # per-chunk exclusion notes below cite it as provenance.
            self._sidecar("filter_event", event, filter=rec.retrieval_filter_record(action.filter))
            for sub_id, ranked in state.evidence.per_subquery.items():
                for entry in ranked.entries:
                    chunk = self.chunk_store.get(entry.chunk_id)
                    if chunk is not None and not chunk_passes_filter(chunk, action.filter):
                        self._signal(
                            sub_id,
                            _Signal(entry.chunk_id, False, event.seq, f"excluded by filter ({event.event_id})"),
                        )
        elif isinstance(action, (act.CorrectFact, act.EditSection)):
            self.section_event_ids.setdefault(action.section_id, []).append(event.event_id)
        elif isinstance(action, act.AdjustStyle):
            self._sidecar("style_adjustment", event, style=rec.style_record(action.style))
        elif isinstance(action, act.Rate):
            self._sidecar("final_rating", event, value=action.value.value, comment=action.comment)

    def _signal(self, sub_id: str, signal: _Signal) -> None:
        self.signals.setdefault(sub_id, []).append(signal)


def scan_log(records: list[dict], deps: PipelineDeps, window: Window) -> tuple[_LogScan, SessionState]:
    scan = _LogScan(records, window, deps.index.chunk_store)

    # Bootstrap context first: hooks only fire on events, and first-seen
    # section text must mean the machine's original, not the state after
    # the first event (which may already be the user's rewrite).
    if len(records) >= 4:
        plan = rec.parse_query_plan(records[1]["plan"])
        answer = rec.parse_answer(records[3]["answer"])
        for sub in plan.sub_queries:
            scan.sub_texts.setdefault(sub.sub_id, sub.text)
            rendered = ", ".join(f"{k}={v}" for k, v in sub.constraints)
            scan.bootstrap_plan_texts.append(f"{sub.text} [{rendered}]" if rendered else sub.text)
        for section in answer.sections:
            scan.first_section_text.setdefault(section.section_id, section.text)
            scan.last_section_text[section.section_id] = section.text

    def before(state: SessionState, event: act.FeedbackEvent) -> None:
        scan.before_event(state, event)

    def after(state: SessionState, event: act.FeedbackEvent) -> None:
        scan.note_plan(state)
        scan.note_sections(state)

    final = fold_log(records, deps, before=before, after=after)
    return scan, final


def _compile_one(scan: _LogScan, final: SessionState, result: BatchResult) -> None:
    # A log joins the batch only if it was touched inside the window;
    # otherwise an event-free day would still emit citation positives.
    if scan.in_window_events == 0:
        return
    # decomposition: one pair per session with plan edits in the window
    if scan.deco_event_ids:
        positive = _plan_texts(final)
        if positive != scan.bootstrap_plan_texts:
            result.decomposition.append(
                {
                    "type": "decomposition_pair",
                    "session_id": scan.session_id,
                    "query": scan.query_text,
                    "negative_plan": scan.bootstrap_plan_texts,
                    "positive_plan": positive,
                    "edit_count": len(scan.deco_event_ids),
                    "actor_mix": dict(sorted(scan.deco_actors.items())),
                    "source_event_ids": scan.deco_event_ids,
                }
            )
        else:
            result.accepted.append(
                {
                    "type": "accepted_entry",
                    "kind": "no_change_decomposition",
                    "session_id": scan.session_id,
                    "event_ids": scan.deco_event_ids,
                }
            )

    # retrieval: citation positives first, then resolve conflicts per chunk
    citation_seq = final.log_offset + 1
    for section in final.answer.sections:
        sub_id = section.section_id.removeprefix("s_")
        if not section.section_id.startswith("s_") or sub_id not in final.plan.sub_ids():
            continue
        for chunk_id in section.citations:
            scan._signal(sub_id, _Signal(chunk_id, True, citation_seq, "cited in final answer"))

    for sub_id in sorted(set(scan.signals) | set(scan.sub_events)):
        signals = scan.signals.get(sub_id, [])
        latest: dict[str, _Signal] = {}
        for signal in signals:
            incumbent = latest.get(signal.chunk_id)
            if (
                incumbent is None
                or signal.seq > incumbent.seq
                or (signal.seq == incumbent.seq and signal.positive and not incumbent.positive)
            ):
                latest[signal.chunk_id] = signal
        notes: dict[str, str] = {}
        for signal in signals:
            notes[signal.chunk_id] = (
                f"{notes[signal.chunk_id]}; {signal.note}" if signal.chunk_id in notes else signal.note
            )
        result.retrieval.append(
            {
                "type": "retrieval_preference",
                "session_id": scan.session_id,
                "sub_id": sub_id,
                "sub_text": scan.sub_texts.get(sub_id, ""),
                "positive_chunks": sorted(c for c, s in latest.items() if s.positive),
                "negative_chunks": sorted(c for c, s in latest.items() if not s.positive),
                "notes": dict(sorted(notes.items())),
                "source_event_ids": scan.sub_events.get(sub_id, []),
            }
        )

    # generation: first-seen vs final text per touched section
    evidence_digests = {
        sub_id: hashlib.sha256(rec.canonical_bytes(rec.ranked_list_record(rl))).hexdigest()[:16]
        for sub_id, rl in final.evidence.per_subquery.items()
    }
    for section_id in sorted(scan.section_event_ids):
        event_ids = scan.section_event_ids[section_id]
        rejected = scan.first_section_text.get(section_id, "")
        chosen = scan.last_section_text.get(section_id, rejected)
        distance = levenshtein(rejected, chosen)
        if normalized_distance(rejected, chosen) <= MIN_EDIT_THRESHOLD:
            result.accepted.append(
                {
                    "type": "accepted_entry",
                    "kind": "accepted_min_edit",
                    "session_id": scan.session_id,
                    "section_id": section_id,
                    "event_ids": event_ids,
                    "edit_distance": distance,
                }
            )
            continue
        sub_id = section_id.removeprefix("s_")
        result.generation.append(
            {
                "type": "generation_preference",
                "session_id": scan.session_id,
                "section_id": section_id,
                "query": scan.query_text,
                "evidence_digest": evidence_digests.get(sub_id, ""),
                "rejected_text": rejected,
                "chosen_text": chosen,
                "edit_distance": distance,
                "source_event_ids": event_ids,
            }
        )

    result.accepted.extend(scan.accepted)


def compile_batch(logs: list[list[dict]], window: Window, deps: PipelineDeps) -> BatchResult:
    """Compile every parseable log; corrupt ones are counted and skipped."""
    result = BatchResult()
    for records in logs:
        try:
            scan, final = scan_log(records, deps, window)
        except (CorruptLog, StageExecutionError, KeyError, ValueError):
            result.skipped_logs += 1
            continue
        _compile_one(scan, final, result)
    return result


# ---------------------------------------------------------------------------
# export

_SAMPLE_FILES = ("decomposition", "retrieval", "generation")


def export_batch(result: BatchResult, window: Window, out_dir: str | Path) -> dict:
    """Write the batch under ``out_dir/<start-date>/``.

    Files are written atomically and the manifest last, so a directory
    with a manifest is always a complete batch. Re-exporting identical
    inputs rewrites identical bytes.
    """
    batch_dir = Path(out_dir) / window.start.isoformat()
    batch_dir.mkdir(parents=True, exist_ok=True)
    hasher = hashlib.sha256()
    for name in _SAMPLE_FILES:
        samples = getattr(result, name)
        rec.write_records(batch_dir / f"{name}.samples", samples)
        hasher.update(rec.dump_lines(samples).encode("utf-8"))
    rec.write_records(batch_dir / "accepted.sidecar", result.accepted)
    hasher.update(rec.dump_lines(result.accepted).encode("utf-8"))
    manifest = {
        "type": "batch_manifest",
        "window_from": window.start.isoformat(),
        "window_to": window.end.isoformat(),
        "counts": result.counts(),
        "accepted_count": len(result.accepted),
        "skipped_logs": result.skipped_logs,
        "content_hash": hasher.hexdigest(),
    }
    rec.write_records(batch_dir / "manifest", [manifest])
    return manifest


def read_session_logs(sessions_dir: str | Path) -> list[list[dict]]:
    """Load every ``<dir>/<session>/log`` under the sessions directory."""
    root = Path(sessions_dir)
    logs = []
    if not root.exists():
        return logs
    for log_path in sorted(root.glob("*/log")):
        logs.append(list(rec.read_records(log_path)))
    return logs
