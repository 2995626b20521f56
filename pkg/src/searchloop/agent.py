"""Shadow agent: profile learning, rule-driven proposals, prompt rendering.

The agent reads past session logs into a preference profile, then turns
the profile into concrete stage-level feedback proposals a user confirms
with one tap. The rule engine is fully deterministic; an LLM-backed
suggestion path exists behind the same validator but is never required.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum

from . import actions as act
from . import records as rec
from .errors import ExpiredProposal, FeedbackRejected, ForeignLog
from .model import (
    Actor,
    Layout,
    Preference,
    Stage,
    Style,
    UserProfile,
    Verbosity,
)
from .pipeline import PipelineDeps
from .session import SessionState, submit_feedback
from .validation import validate_event

MAX_PROPOSALS = 3

#: Plan-scope vocabulary: a removed sub-query mentioning one of these
#: topics reads as "this user does not want <topic> sub-queries".
TOPIC_TOKENS = ("sightseeing", "flights", "hotels", "news")

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_PROPOSAL_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "searchloop/proposal")


class ProposalStatus(str, Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EXPIRED = "expired"


@dataclass(frozen=True)
class Proposal:
    proposal_id: str
    session_id: str
    log_offset: int
    stage: Stage
    event: act.FeedbackEvent
    rationale: str
    confidence: float
    status: ProposalStatus = ProposalStatus.PENDING

    def __post_init__(self):
        if not self.rationale:
            raise ValueError("proposal rationale must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def proposal_record(p: Proposal) -> dict:
    return {
        "type": "proposal",
        "proposal_id": p.proposal_id,
        "session_id": p.session_id,
        "log_offset": p.log_offset,
        "stage": p.stage.value,
        "event": rec.feedback_event_record(p.event),
        "rationale": p.rationale,
        "confidence": p.confidence,
        "status": p.status.value,
    }


def parse_proposal(record: dict) -> Proposal:
    return Proposal(
        proposal_id=record["proposal_id"],
        session_id=record["session_id"],
        log_offset=record["log_offset"],
        stage=Stage(record["stage"]),
        event=rec.parse_feedback_event(record["event"]),
        rationale=record["rationale"],
        confidence=record["confidence"],
        status=ProposalStatus(record["status"]),
    )


# ---------------------------------------------------------------------------
# profile learning


def _log_user(records: list[dict]) -> str:
    return records[0]["query"]["user_id"]


def _sub_texts(records: list[dict]) -> dict[str, str]:
    """Reconstruct sub_id -> text from the log alone: bootstrap ids plus
    the ordinals that add events would have been allocated."""
    texts = {s["sub_id"]: s["text"] for s in records[1]["plan"]["sub_queries"]}
    numbered = [int(m.group(1)) for sid in texts if (m := re.match(r"^Q(\d+)$", sid))]
    ordinal = max(numbered, default=len(texts)) + 1
    for record in records:
        if record.get("type") == "feedback_event" and record["action"]["kind"] == "add_sub_query":
            texts[f"Q{ordinal}"] = record["action"]["text"]
            ordinal += 1
    return texts


def _session_signals(records: list[dict]) -> set[tuple[str, str]]:
    """The (dimension, value) pairs this one session gives evidence for."""
    signals: set[tuple[str, str]] = set()
    texts = _sub_texts(records)
    for record in records:
        if record.get("type") != "feedback_event":
            continue
        action = record["action"]
        kind = action["kind"]
        if kind == "set_filter":
            for domain in action["filter"]["domain_allow"] or ():
                signals.add(("trusted_domain", domain))
            for domain in action["filter"]["domain_block"] or ():
                signals.add(("blocked_domain", domain))
        elif kind == "remove_sub_query":
            tokens = set(_TOKEN_RE.findall(texts.get(action["sub_id"], "").lower()))
            for topic in TOPIC_TOKENS:
                if topic in tokens:
                    signals.add(("query_scope", f"no_{topic}"))
        elif kind == "edit_section":
            if "walk" in _TOKEN_RE.findall(action["new_text"].lower()):
                signals.add(("accommodation_priority", "convenience"))
        elif kind == "adjust_style":
            signals.add(("style_layout", action["style"]["layout"]))
            signals.add(("verbosity", action["style"]["verbosity"]))
    return signals


def laplace_confidence(count: int, opportunities: int) -> float:
    return (count + 1) / (opportunities + 2)


def update_profile(profile: UserProfile, logs: list[list[dict]]) -> UserProfile:
    """Recompute preference confidences from a batch of session logs.

    Each log is one observation opportunity per dimension-value; the
    confidence is Laplace-smoothed so it never reaches 0 or 1. A
    dimension seen before but absent from the new batch decays (count 0
    over the batch) instead of being dropped.
    """
    if not logs:
        return profile
    for records in logs:
        owner = _log_user(records)
        if owner != profile.user_id:
            raise ForeignLog(f"log for user {owner!r} passed to profile {profile.user_id!r}")

    counts: dict[tuple[str, str], int] = {}
    for pref in profile.preferences:
        counts.setdefault((pref.dimension, pref.value), 0)
    for records in logs:
        for key in _session_signals(records):
            counts[key] = counts.get(key, 0) + 1

    opportunities = len(logs)
    preferences = tuple(
        Preference(dimension=d, value=v, confidence=laplace_confidence(n, opportunities))
        for (d, v), n in sorted(counts.items())
    )
    digest: dict[str, dict[str, int]] = {}
    for records in logs:
        for record in records:
            if record.get("type") != "feedback_event":
                continue
            per_stage = digest.setdefault(record["stage"], {})
            kind = record["action"]["kind"]
            per_stage[kind] = per_stage.get(kind, 0) + 1
    digest = {stage: dict(sorted(kinds.items())) for stage, kinds in sorted(digest.items())}
    return UserProfile(user_id=profile.user_id, preferences=preferences, history_digest=digest)


# ---------------------------------------------------------------------------
# rule engine


def _proposal_id(session_id: str, log_offset: int, rule_id: str) -> str:
    return uuid.uuid5(_PROPOSAL_NAMESPACE, f"{session_id}:{log_offset}:{rule_id}").hex


def _candidate_rules(stage: Stage, state: SessionState, profile: UserProfile):
    """Yield (rule_id, confidence, rationale, action) tuples; deterministic order."""
    prefs = sorted(profile.preferences, key=lambda p: (-p.confidence, p.dimension, p.value))
    for pref in prefs:
        if stage is Stage.DECOMPOSITION and pref.dimension == "query_scope" and pref.value.startswith("no_"):
            topic = pref.value[3:]
            if len(state.plan.sub_queries) <= 1:
                continue
            for sub in state.plan.sub_queries:
                if topic in _TOKEN_RE.findall(sub.text.lower()):
                    yield (
                        f"query_scope:{pref.value}:{sub.sub_id}",
                        pref.confidence,
                        f"past sessions removed {topic} sub-queries ({pref.value}, confidence {pref.confidence:.2f})",
                        act.RemoveSubQuery(sub_id=sub.sub_id),
                    )
        elif stage is Stage.RETRIEVAL and pref.dimension == "trusted_domain":
            filt = state.evidence.active_filter
            if pref.value in (filt.domain_allow or ()) or pref.value in (filt.domain_block or ()):
                continue
            new_allow = tuple(sorted(set(filt.domain_allow or ()) | {pref.value}))
            yield (
                f"trusted_domain:{pref.value}",
                pref.confidence,
                f"user consistently restricts sources to {pref.value} (confidence {pref.confidence:.2f})",
                act.SetFilter(filter=replace(filt, domain_allow=new_allow)),
            )
        elif stage is Stage.RETRIEVAL and pref.dimension == "blocked_domain":
            filt = state.evidence.active_filter
            if pref.value in (filt.domain_block or ()) or pref.value in (filt.domain_allow or ()):
                continue
            new_block = tuple(sorted(set(filt.domain_block or ()) | {pref.value}))
            yield (
                f"blocked_domain:{pref.value}",
                pref.confidence,
                f"user consistently excludes {pref.value} (confidence {pref.confidence:.2f})",
                act.SetFilter(filter=replace(filt, domain_block=new_block)),
            )
        elif stage is Stage.GENERATION and pref.dimension == "style_layout":
            style = state.answer.style
            if style.layout.value != pref.value:
                yield (
                    f"style_layout:{pref.value}",
                    pref.confidence,
                    f"user prefers {pref.value} layout (confidence {pref.confidence:.2f})",
                    act.AdjustStyle(style=replace(style, layout=Layout(pref.value))),
                )
        elif stage is Stage.GENERATION and pref.dimension == "verbosity":
            style = state.answer.style
            if style.verbosity.value != pref.value:
                yield (
                    f"verbosity:{pref.value}",
                    pref.confidence,
                    f"user prefers {pref.value} answers (confidence {pref.confidence:.2f})",
                    act.AdjustStyle(style=replace(style, verbosity=Verbosity(pref.value))),
                )


def suggest_feedback(
    stage: Stage,
    state: SessionState,
    profile: UserProfile,
    max_proposals: int = MAX_PROPOSALS,
    now: datetime | None = None,
) -> list[Proposal]:
    """Deterministic rule-engine proposals for one stage.

    Every returned proposal validates against the snapshot it was built
    from and is pinned to the snapshot's log_offset; any state change
    expires it.
    """
    when = now if now is not None else datetime.now(timezone.utc)
    proposals: list[Proposal] = []
    seen_rules: set[str] = set()
    for rule_id, confidence, rationale, action in _candidate_rules(stage, state, profile):
        if rule_id in seen_rules:
            continue
        seen_rules.add(rule_id)
        event = act.FeedbackEvent(
            event_id=_proposal_id(state.session_id, state.log_offset, rule_id),
            session_id=state.session_id,
            seq=state.log_offset + 1,
            stage=stage,
            actor=Actor.SHADOW_AGENT,
            occurred_at=when,
            action=action,
        )
        if not validate_event(event, state).ok:
            continue
        proposals.append(
            Proposal(
                proposal_id=_proposal_id(state.session_id, state.log_offset, f"p:{rule_id}"),
                session_id=state.session_id,
                log_offset=state.log_offset,
                stage=stage,
                event=event,
                rationale=rationale,
                confidence=confidence,
            )
        )
        if len(proposals) >= max_proposals:
            break
    return proposals


def confirm_proposal(
    state: SessionState,
    proposal: Proposal,
    decision: str,
    deps: PipelineDeps,
) -> tuple[SessionState, Proposal]:
    """Accept (submit the proposed event) or reject (log a rejection record).

    Either way the proposal is consumed; a session that moved on since
    the proposal was generated raises ExpiredProposal.
    """
    if decision not in ("accept", "reject"):
        raise ValueError(f"decision must be accept or reject, got {decision!r}")
    if proposal.status is not ProposalStatus.PENDING:
        raise ExpiredProposal(f"proposal {proposal.proposal_id} already {proposal.status.value}")
    if proposal.log_offset != state.log_offset:
        raise ExpiredProposal(
            f"proposal built at offset {proposal.log_offset}, session now at {state.log_offset}"
        )
    if decision == "accept":
        submit_feedback(state, proposal.event, deps)
        return state, replace(proposal, status=ProposalStatus.ACCEPTED)
    state.log.append(
        {
            "type": "proposal_rejected",
            "seq": state.log_offset + 1,
            "session_id": state.session_id,
            "proposal_id": proposal.proposal_id,
            "stage": proposal.stage.value,
            "action": rec.action_record(proposal.event.action),
            "rationale": proposal.rationale,
        }
    )
    state.log_offset += 1
    return state, replace(proposal, status=ProposalStatus.REJECTED)


# ---------------------------------------------------------------------------
# prompt templates for the LLM-backed path

_ACTION_DESCRIPTIONS = {
    Stage.DECOMPOSITION: (
        "- add_sub_query(text, insert_position, constraints): introduce a missing sub-query.\n"
        "- remove_sub_query(sub_id): drop a redundant or unwanted sub-query.\n"
        "- reorder_sub_queries(order): change the execution order (full permutation).\n"
        "- refine_constraint(sub_id, key, value): tighten a constraint on one sub-query."
    ),
    Stage.RETRIEVAL: (
        "- annotate_relevance(sub_id, chunk_id, label): mark a result relevant, partially_relevant, or irrelevant.\n"
        "- rerank_evidence(sub_id, chunk_id, new_rank): pin a result at a rank.\n"
        "- set_filter(filter): restrict results by time window or source domain."
    ),
    Stage.GENERATION: (
        "- correct_fact(section_id, note): flag an incorrect statement for regeneration.\n"
        "- edit_section(section_id, new_text): rewrite a section directly.\n"
        "- adjust_style(style): change tone, verbosity, or layout."
    ),
}

_STAGE_INTRO = {
    Stage.DECOMPOSITION: (
        "You are simulating a user who wants to refine a query decomposition process. "
        "Based on the provided user profile, you will review the initial sub-queries and "
        "identify necessary adjustments. You can perform the following actions:"
    ),
    Stage.RETRIEVAL: (
        "You are simulating a user who wants to refine a retrieval & ranking process. "
        "Based on the provided user profile, you will review the initial retrieved results "
        "and apply necessary adjustments. You can perform the following actions:"
    ),
    Stage.GENERATION: (
        "You are simulating a user who wants to refine an AI-generated answer. "
        "Based on the provided user profile, you will review the initial answer and apply "
        "necessary adjustments. You can perform the following actions:"
    ),
}

_STAGE_OUTPUT_LABEL = {
    Stage.DECOMPOSITION: "Initial Query Decomposition",
    Stage.RETRIEVAL: "Initial Retrieved Results",
    Stage.GENERATION: "Initial Generated Answer",
}

_STAGE_TASK = {
    Stage.DECOMPOSITION: (
        "Analyze the given sub-queries in light of the user profile, highlighting any "
        "necessary modifications with clear explanations. Then, generate a refined list "
        "of sub-queries that better align with the user's needs."
    ),
    Stage.RETRIEVAL: (
        "Analyze the retrieved documents in light of the user profile and context, "
        "identifying any necessary refinements with clear justifications. Then, generate "
        "a revised ranked list that best aligns with the user's intent."
    ),
    Stage.GENERATION: (
        "Analyze the generated answer in light of the user profile and query context, "
        "highlighting necessary modifications with clear justifications. Then, generate "
        "a revised answer that best aligns with the user's needs."
    ),
}


def _profile_block(profile: UserProfile) -> str:
    if not profile.preferences:
        return "none recorded"
    return "\n".join(
        f"- {p.dimension}={p.value} (confidence {p.confidence:.2f})" for p in profile.preferences
    )


def render_prompt(stage: Stage, profile: UserProfile, query_text: str, stage_output: dict) -> str:
    """Render the stage's simulation prompt, byte-stable for fixed inputs."""
    if stage not in _STAGE_INTRO:
        raise ValueError(f"no prompt template for stage {stage}")
    return (
        f"{_STAGE_INTRO[stage]}\n"
        f"{_ACTION_DESCRIPTIONS[stage]}\n"
        f"\n"
        f"User Profile:\n{_profile_block(profile)}\n"
        f"\n"
        f"User Query: {query_text}\n"
        f"\n"
        f"{_STAGE_OUTPUT_LABEL[stage]}:\n{rec.canonical_dumps(stage_output)}\n"
        f"\n"
        f"Task Prompt:\n{_STAGE_TASK[stage]}"
    )


def parse_llm_suggestions(
    text: str,
    stage: Stage,
    state: SessionState,
    now: datetime | None = None,
) -> tuple[list[Proposal], int]:
    """Parse a model response into validated proposals.

    The response must be a JSON array of {action: record, rationale,
    confidence?} objects. Anything unparseable or failing validation is
    dropped; the second return value counts the drops.
    """
    when = now if now is not None else datetime.now(timezone.utc)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        return [], 1
    if not isinstance(raw, list):
        return [], 1
    proposals: list[Proposal] = []
    dropped = 0
    for i, item in enumerate(raw):
        try:
            action = rec.parse_action(item["action"])
            rationale = item["rationale"]
            confidence = float(item.get("confidence", 0.5))
            event = act.FeedbackEvent(
                event_id=_proposal_id(state.session_id, state.log_offset, f"llm:{i}"),
                session_id=state.session_id,
                seq=state.log_offset + 1,
                stage=stage,
                actor=Actor.SHADOW_AGENT,
                occurred_at=when,
                action=action,
            )
            if act.stage_of(action) is not stage or not validate_event(event, state).ok:
                dropped += 1
                continue
            proposals.append(
                Proposal(
                    proposal_id=_proposal_id(state.session_id, state.log_offset, f"p:llm:{i}"),
                    session_id=state.session_id,
                    log_offset=state.log_offset,
                    stage=stage,
                    event=event,
                    rationale=rationale,
                    confidence=min(max(confidence, 0.0), 1.0),
                )
            )
        except (KeyError, TypeError, ValueError):
            dropped += 1
    return proposals[:MAX_PROPOSALS], dropped


# ---------------------------------------------------------------------------
# profile persistence


def load_profile(path, user_id: str) -> UserProfile:
    from pathlib import Path

    p = Path(path)
    if not p.exists():
        return UserProfile(user_id=user_id)
    rows = list(rec.read_records(p))
    if len(rows) != 1:
        raise ValueError(f"profile file {p} must hold exactly one record")
    return rec.parse_user_profile(rows[0])


def save_profile(path, profile: UserProfile) -> None:
    rec.write_records(path, [rec.user_profile_record(profile)])
