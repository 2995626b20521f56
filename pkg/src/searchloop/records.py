"""Canonical record serialization.

The external format for every persisted or transported value is a UTF-8
line of JSON with a `type` discriminator and sorted keys. The same bytes
are used for the session log, snapshots, the index file, training
batches, the store, and HTTP payloads, so byte-level equality of two
values is equality of their canonical lines.
"""

from __future__ import annotations

import json
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator

from . import actions as act
from . import model as m


def canonical_dumps(record: dict) -> str:
    """Serialize a record dict to its canonical JSON form."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(record: dict) -> bytes:
    return canonical_dumps(record).encode("utf-8")


def format_timestamp(dt: datetime) -> str:
    dt = m.utc_ms(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(raw: str) -> datetime:
    dt = datetime.strptime(raw, "%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.replace(tzinfo=timezone.utc)


def format_date(d: date | None) -> str | None:
    return d.isoformat() if d is not None else None


def parse_date(raw: str | None) -> date | None:
    return date.fromisoformat(raw) if raw is not None else None


# ---------------------------------------------------------------------------
# domain values -> dicts


def user_query_record(q: m.UserQuery) -> dict:
    return {
        "type": "user_query",
        "query_id": q.query_id,
        "user_id": q.user_id,
        "text": q.text,
        "submitted_at": format_timestamp(q.submitted_at),
    }


def sub_query_record(s: m.SubQuery) -> dict:
    return {
        "type": "sub_query",
        "sub_id": s.sub_id,
        "text": s.text,
        "constraints": [[k, v] for k, v in s.constraints],
        "position": s.position,
        "provenance": s.provenance.value,
    }


def query_plan_record(p: m.QueryPlan) -> dict:
    return {
        "type": "query_plan",
        "plan_version": p.plan_version,
        "parent_version": p.parent_version,
        "sub_queries": [sub_query_record(s) for s in p.sub_queries],
    }


def document_chunk_record(c: m.DocumentChunk) -> dict:
    return {
        "type": "document_chunk",
        "chunk_id": c.chunk_id,
        "doc_id": c.doc_id,
        "text": c.text,
        "source_domain": c.source_domain,
        "published_date": format_date(c.published_date),
        "url": c.url,
    }


def retrieval_filter_record(f: m.RetrievalFilter) -> dict:
    return {
        "type": "retrieval_filter",
        "time_from": format_date(f.time_from),
        "time_to": format_date(f.time_to),
        "domain_allow": list(f.domain_allow) if f.domain_allow is not None else None,
        "domain_block": list(f.domain_block) if f.domain_block is not None else None,
    }


def ranked_list_record(r: m.RankedList) -> dict:
    return {
        "type": "ranked_list",
        "entries": [
            {
                "chunk_id": e.chunk_id,
                "score": e.score,
                "rank": e.rank,
                "label": e.label.value if e.label else None,
                "pin": e.pin,
            }
            for e in r.entries
        ],
    }


def evidence_set_record(ev: m.EvidenceSet) -> dict:
    return {
        "type": "evidence_set",
        "per_subquery": {sid: ranked_list_record(rl) for sid, rl in ev.per_subquery.items()},
        "active_filter": retrieval_filter_record(ev.active_filter),
    }


def style_record(style: m.Style) -> dict:
    return {"tone": style.tone.value, "verbosity": style.verbosity.value, "layout": style.layout.value}


def answer_section_record(s: m.AnswerSection) -> dict:
    return {
        "type": "answer_section",
        "section_id": s.section_id,
        "text": s.text,
        "citations": list(s.citations),
        "validation_state": s.validation_state.value,
        "correction_note": s.correction_note,
    }


def answer_record(a: m.Answer) -> dict:
    return {
        "type": "answer",
        "sections": [answer_section_record(s) for s in a.sections],
        "style": style_record(a.style),
    }


def action_record(action: act.FeedbackAction) -> dict:
    kind = act.kind_of(action)
    body: dict[str, Any] = {"kind": kind}
    if isinstance(action, act.AddSubQuery):
        body.update(
            text=action.text,
            insert_position=action.insert_position,
            constraints=[[k, v] for k, v in action.constraints],
        )
    elif isinstance(action, act.RemoveSubQuery):
        body.update(sub_id=action.sub_id)
    elif isinstance(action, act.ReorderSubQueries):
        body.update(order=list(action.order))
    elif isinstance(action, act.RefineConstraint):
        body.update(sub_id=action.sub_id, key=action.key, value=action.value)
    elif isinstance(action, act.AnnotateRelevance):
        body.update(sub_id=action.sub_id, chunk_id=action.chunk_id, label=action.label.value)
    elif isinstance(action, act.RerankEvidence):
        body.update(sub_id=action.sub_id, chunk_id=action.chunk_id, new_rank=action.new_rank)
    elif isinstance(action, act.SetFilter):
        body.update(filter=retrieval_filter_record(action.filter))
    elif isinstance(action, act.CorrectFact):
        body.update(section_id=action.section_id, note=action.note)
    elif isinstance(action, act.EditSection):
        body.update(section_id=action.section_id, new_text=action.new_text)
    elif isinstance(action, act.AdjustStyle):
        body.update(style=style_record(action.style))
    elif isinstance(action, act.Rate):
        body.update(value=action.value.value, comment=action.comment)
    else:  # pragma: no cover - taxonomy is closed
        raise TypeError(f"unknown action {action!r}")
    return body


def feedback_event_record(e: act.FeedbackEvent) -> dict:
    return {
        "type": "feedback_event",
        "event_id": e.event_id,
        "session_id": e.session_id,
        "seq": e.seq,
        "stage": e.stage.value,
        "actor": e.actor.value,
        "occurred_at": format_timestamp(e.occurred_at),
        "action": action_record(e.action),
    }


def user_profile_record(p: m.UserProfile) -> dict:
    return {
        "type": "user_profile",
        "user_id": p.user_id,
        "preferences": [
            {"dimension": pref.dimension, "value": pref.value, "confidence": pref.confidence}
            for pref in p.preferences
        ],
        "history_digest": {k: dict(sorted(v.items())) for k, v in sorted(p.history_digest.items())},
    }


# ---------------------------------------------------------------------------
# dicts -> domain values


def parse_user_query(d: dict) -> m.UserQuery:
    return m.UserQuery(
        query_id=d["query_id"],
        user_id=d["user_id"],
        text=d["text"],
        submitted_at=parse_timestamp(d["submitted_at"]),
    )


def parse_sub_query(d: dict) -> m.SubQuery:
    return m.SubQuery(
        sub_id=d["sub_id"],
        text=d["text"],
        constraints=tuple((k, v) for k, v in d.get("constraints", [])),
        position=d["position"],
        provenance=m.Provenance(d["provenance"]),
    )


def parse_query_plan(d: dict) -> m.QueryPlan:
    return m.QueryPlan(
        plan_version=d["plan_version"],
        parent_version=d["parent_version"],
        sub_queries=tuple(parse_sub_query(s) for s in d["sub_queries"]),
    )


def parse_document_chunk(d: dict) -> m.DocumentChunk:
    return m.DocumentChunk(
        chunk_id=d["chunk_id"],
        doc_id=d["doc_id"],
        text=d["text"],
        source_domain=d["source_domain"],
        published_date=parse_date(d.get("published_date")),
        url=d.get("url", ""),
    )


def parse_retrieval_filter(d: dict) -> m.RetrievalFilter:
    return m.RetrievalFilter(
        time_from=parse_date(d.get("time_from")),
        time_to=parse_date(d.get("time_to")),
        domain_allow=tuple(d["domain_allow"]) if d.get("domain_allow") is not None else None,
        domain_block=tuple(d["domain_block"]) if d.get("domain_block") is not None else None,
    )


def parse_ranked_list(d: dict) -> m.RankedList:
    return m.RankedList(
        entries=tuple(
            m.RankedEntry(
                chunk_id=e["chunk_id"],
                score=e["score"],
                rank=e["rank"],
                label=m.RelevanceLabel(e["label"]) if e.get("label") else None,
                pin=e.get("pin"),
            )
            for e in d["entries"]
        )
    )


def parse_evidence_set(d: dict) -> m.EvidenceSet:
    return m.EvidenceSet(
        per_subquery={sid: parse_ranked_list(rl) for sid, rl in d["per_subquery"].items()},
        active_filter=parse_retrieval_filter(d["active_filter"]),
    )


def parse_style(d: dict) -> m.Style:
    return m.Style(tone=m.Tone(d["tone"]), verbosity=m.Verbosity(d["verbosity"]), layout=m.Layout(d["layout"]))


def parse_answer_section(d: dict) -> m.AnswerSection:
    return m.AnswerSection(
        section_id=d["section_id"],
        text=d["text"],
        citations=tuple(d.get("citations", [])),
        validation_state=m.ValidationState(d["validation_state"]),
        correction_note=d.get("correction_note"),
    )


def parse_answer(d: dict) -> m.Answer:
    return m.Answer(
        sections=tuple(parse_answer_section(s) for s in d["sections"]),
        style=parse_style(d["style"]),
    )


def parse_action(d: dict) -> act.FeedbackAction:
    kind = d["kind"]
    if kind == "add_sub_query":
        return act.AddSubQuery(
            text=d["text"],
            insert_position=d["insert_position"],
            constraints=tuple((k, v) for k, v in d.get("constraints", [])),
        )
    if kind == "remove_sub_query":
        return act.RemoveSubQuery(sub_id=d["sub_id"])
    if kind == "reorder_sub_queries":
        return act.ReorderSubQueries(order=tuple(d["order"]))
    if kind == "refine_constraint":
        return act.RefineConstraint(sub_id=d["sub_id"], key=d["key"], value=d["value"])
    if kind == "annotate_relevance":
        return act.AnnotateRelevance(
            sub_id=d["sub_id"], chunk_id=d["chunk_id"], label=m.RelevanceLabel(d["label"])
        )
    if kind == "rerank_evidence":
        return act.RerankEvidence(sub_id=d["sub_id"], chunk_id=d["chunk_id"], new_rank=d["new_rank"])
    if kind == "set_filter":
        return act.SetFilter(filter=parse_retrieval_filter(d["filter"]))
    if kind == "correct_fact":
        return act.CorrectFact(section_id=d["section_id"], note=d["note"])
    if kind == "edit_section":
        return act.EditSection(section_id=d["section_id"], new_text=d["new_text"])
    if kind == "adjust_style":
        return act.AdjustStyle(style=parse_style(d["style"]))
    if kind == "rate":
        return act.Rate(value=m.RateValue(d["value"]), comment=d.get("comment"))
    raise ValueError(f"unknown action kind {kind!r}")


def parse_feedback_event(d: dict) -> act.FeedbackEvent:
    return act.FeedbackEvent(
        event_id=d["event_id"],
        session_id=d["session_id"],
        seq=d["seq"],
        stage=m.Stage(d["stage"]),
        actor=m.Actor(d["actor"]),
        occurred_at=parse_timestamp(d["occurred_at"]),
        action=parse_action(d["action"]),
    )


def parse_user_profile(d: dict) -> m.UserProfile:
    return m.UserProfile(
        user_id=d["user_id"],
        preferences=tuple(
            m.Preference(dimension=p["dimension"], value=p["value"], confidence=p["confidence"])
            for p in d.get("preferences", [])
        ),
        history_digest={k: dict(v) for k, v in d.get("history_digest", {}).items()},
    )


_TO_RECORD = {
    m.UserQuery: user_query_record,
    m.SubQuery: sub_query_record,
    m.QueryPlan: query_plan_record,
    m.DocumentChunk: document_chunk_record,
    m.RetrievalFilter: retrieval_filter_record,
    m.RankedList: ranked_list_record,
    m.EvidenceSet: evidence_set_record,
    m.AnswerSection: answer_section_record,
    m.Answer: answer_record,
    act.FeedbackEvent: feedback_event_record,
    m.UserProfile: user_profile_record,
}

_FROM_RECORD = {
    "user_query": parse_user_query,
    "sub_query": parse_sub_query,
    "query_plan": parse_query_plan,
    "document_chunk": parse_document_chunk,
    "retrieval_filter": parse_retrieval_filter,
    "ranked_list": parse_ranked_list,
    "evidence_set": parse_evidence_set,
    "answer_section": parse_answer_section,
    "answer": parse_answer,
    "feedback_event": parse_feedback_event,
    "user_profile": parse_user_profile,
}


def to_record(value) -> dict:
    """Serialize any domain value to its record dict."""
    try:
        return _TO_RECORD[type(value)](value)
    except KeyError:
        raise TypeError(f"no record form for {type(value).__name__}") from None


def from_record(record: dict):
    """Parse a record dict back into its domain value."""
    kind = record.get("type")
    try:
        return _FROM_RECORD[kind](record)
    except KeyError:
        raise ValueError(f"unknown record type {kind!r}") from None


# ---------------------------------------------------------------------------
# line-delimited files


def dump_lines(records: Iterable[dict]) -> str:
    return "".join(canonical_dumps(r) + "\n" for r in records)


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    """Write records atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dump_lines(records), encoding="utf-8")
    tmp.replace(path)


def append_record(path: str | Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(canonical_dumps(record) + "\n")


def read_records(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
