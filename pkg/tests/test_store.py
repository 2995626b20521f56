"""Feedback store: packaging, matching, replay, credits, persistence."""

from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest

from searchloop import actions as act
from searchloop import records as rec
from searchloop import session as ses
from searchloop import store as stm
from searchloop.demo import DEMO_SESSION_ID, demo_events, demo_query
from searchloop.errors import (
    AllStepsUnresolvable,
    InsufficientCredits,
    UnknownTemplate,
    Unpublishable,
)
from searchloop.model import Actor, RateValue, UserQuery

CREATED_AT = demo_events(DEMO_SESSION_ID)[-1].occurred_at


def _golden_template(golden_records, deps, **kw) -> stm.DebugTemplate:
    defaults = dict(title="Conference trip planning cleanup", price_credits=5, publish=True, created_at=CREATED_AT)
    defaults.update(kw)
    return stm.package_template(golden_records, deps, **defaults)


def _fresh_session(deps, session_id="s_apply", text=None):
    query = demo_query()
    if text is not None:
        query = UserQuery(query_id=query.query_id, user_id=query.user_id, text=text, submitted_at=query.submitted_at)
    return ses.open_session(query, deps, session_id=session_id)


# ---------------------------------------------------------------------------
# patterns and matching


def test_query_pattern_is_sorted_token_multiset():
    assert stm.query_pattern("Plan a trip, plan it well!") == ("a", "it", "plan", "plan", "trip", "well")


@pytest.mark.parametrize(
    "pattern,query,want",
    [
        (("a", "b"), "a b", 1.0),
        (("a", "b"), "b c", 1 / 3),
        (("a", "a"), "a", 1 / 2),
        (("a",), "x y", 0.0),
        ((), "", 0.0),
    ],
)
def test_match_score_is_multiset_jaccard(pattern, query, want):
    assert stm.match_score(pattern, query) == pytest.approx(want)


def test_match_templates_filters_and_sorts(golden_records, deps):
    template = _golden_template(golden_records, deps)
    ranked = stm.match_templates([template], "Plan a trip to attend SIGIR 2026")
    assert len(ranked) == 1
    matched, score = ranked[0]
    assert matched.template_id == template.template_id
    assert score == pytest.approx(0.75)
    assert stm.match_templates([template], "completely unrelated words") == []


# ---------------------------------------------------------------------------
# packaging


def test_golden_package_matches_frozen_fixture(golden_records, deps, fixtures_dir):
    template = _golden_template(golden_records, deps)
    frozen = next(iter(rec.read_records(fixtures_dir / "golden_template.records")))
    assert stm.template_record(template) == frozen


def test_template_id_is_deterministic_and_content_addressed(golden_records, deps):
    one = _golden_template(golden_records, deps)
    two = _golden_template(golden_records, deps, title="different title", price_credits=0)
    assert one.template_id == two.template_id  # id covers pattern+steps only
    assert one.template_id.startswith("tpl_") and len(one.template_id) == 16


def test_template_steps_use_positions_not_ids(golden_records, deps):
    template = _golden_template(golden_records, deps)
    assert len(template.steps) == 8
    for step in template.steps:
        assert "stage" in step and "kind" in step
        blob = rec.canonical_dumps(step)
        assert "sub_id" not in blob
        assert "chunk_id" not in blob
        assert "section_id" not in blob
    kinds = [s["kind"] for s in template.steps]
    assert kinds == [
        "remove_sub_query",
        "add_sub_query",
        "reorder_sub_queries",
        "annotate_relevance",
        "rerank_evidence",
        "set_filter",
        "correct_fact",
        "edit_section",
    ]


def test_rate_events_never_become_steps(golden_records, deps):
    template = _golden_template(golden_records, deps)
    assert all(s["kind"] != "rate" for s in template.steps)


def test_unrated_session_needs_explicit_publish(deps):
    state = _fresh_session(deps, "s_unrated")
    event = act.FeedbackEvent(
        event_id="ev_5",
        session_id=state.session_id,
        seq=5,
        stage=act.stage_of(act.RemoveSubQuery(sub_id=state.plan.sub_queries[-1].sub_id)),
        actor=Actor.HUMAN,
        occurred_at=CREATED_AT,
        action=act.RemoveSubQuery(sub_id=state.plan.sub_queries[-1].sub_id),
    )
    ses.submit_feedback(state, event, deps)
    with pytest.raises(Unpublishable):
        stm.package_template(state.log.records, deps, title="t")
    template = stm.package_template(state.log.records, deps, title="t", publish=True, created_at=CREATED_AT)
    assert len(template.steps) == 1


def test_liked_session_packages_without_publish_flag(deps):
    state = _fresh_session(deps, "s_liked")
    victim = state.plan.sub_queries[-1].sub_id
    for action in (act.RemoveSubQuery(sub_id=victim), act.Rate(value=RateValue.LIKE)):
        event = act.FeedbackEvent(
            event_id=f"ev_{state.log_offset + 1}",
            session_id=state.session_id,
            seq=state.log_offset + 1,
            stage=act.stage_of(action),
            actor=Actor.HUMAN,
            occurred_at=CREATED_AT,
            action=action,
        )
        ses.submit_feedback(state, event, deps)
    template = stm.package_template(state.log.records, deps, title="t", created_at=CREATED_AT)
    assert [s["kind"] for s in template.steps] == ["remove_sub_query"]


def test_session_with_only_a_rating_is_unpublishable(deps):
    state = _fresh_session(deps, "s_rate_only")
    event = act.FeedbackEvent(
        event_id="ev_5",
        session_id=state.session_id,
        seq=5,
        stage=act.stage_of(act.Rate(value=RateValue.LIKE)),
        actor=Actor.HUMAN,
        occurred_at=CREATED_AT,
        action=act.Rate(value=RateValue.LIKE),
    )
    ses.submit_feedback(state, event, deps)
    with pytest.raises(Unpublishable):
        stm.package_template(state.log.records, deps, title="t")


# ---------------------------------------------------------------------------
# application


def test_apply_to_same_query_session_reproduces_author_content(golden_records, deps, golden_session):
    template = _golden_template(golden_records, deps)
    fresh = _fresh_session(deps, "s_reapply")
    applied, report = stm.apply_template(template, fresh, deps, now=CREATED_AT)
    assert all(r["status"] == "applied" for r in report)
    assert applied.content_bytes() == golden_session.content_bytes()


def test_replay_events_carry_template_actor_and_stable_ids(golden_records, deps):
    template = _golden_template(golden_records, deps)
    one = _fresh_session(deps, "s_actor")
    stm.apply_template(template, one, deps, now=CREATED_AT)
    events = [r for r in one.log.records if r.get("type") == "feedback_event"]
    assert all(e["actor"] == "template_replay" for e in events)

    two = _fresh_session(deps, "s_actor")
    stm.apply_template(template, two, deps, now=CREATED_AT)
    assert [e["event_id"] for e in one.log.records[4:]] == [e["event_id"] for e in two.log.records[4:]]


def test_unresolvable_steps_are_skipped_with_reasons(golden_records, deps):
    template = _golden_template(golden_records, deps)
    # An identity plan has one sub-query and one section: position 4 and a
    # four-way reorder cannot resolve, the style-free steps still land.
    fresh = _fresh_session(deps, "s_skewed", text="what is bm25")
    applied, report = stm.apply_template(template, fresh, deps, now=CREATED_AT)
    skipped = {r["kind"] for r in report if r["status"] == "skipped"}
    assert "remove_sub_query" in skipped
    assert "reorder_sub_queries" in skipped
    assert any(r["status"] == "applied" for r in report)
    for r in report:
        if r["status"] == "skipped":
            assert r["reason"]


def test_apply_raises_when_no_step_lands(deps, golden_records):
    template = _golden_template(golden_records, deps)
    # Shrink the template to steps that cannot resolve on an identity plan.
    doomed = stm.DebugTemplate(
        template_id=template.template_id,
        author_id=template.author_id,
        title=template.title,
        query_pattern=template.query_pattern,
        steps=tuple(s for s in template.steps if s["kind"] == "remove_sub_query"),
        price_credits=0,
        created_at=template.created_at,
    )
    fresh = _fresh_session(deps, "s_doomed", text="what is bm25")
    with pytest.raises(AllStepsUnresolvable):
        stm.apply_template(doomed, fresh, deps, now=CREATED_AT)


def test_empty_template_applies_as_noop(deps, golden_records):
    template = _golden_template(golden_records, deps)
    empty = stm.DebugTemplate(
        template_id="tpl_000000000000",
        author_id="u",
        title="empty",
        query_pattern=("x",),
        steps=(),
        price_credits=0,
        created_at=template.created_at,
    )
    fresh = _fresh_session(deps, "s_noop")
    before = fresh.content_bytes()
    applied, report = stm.apply_template(empty, fresh, deps, now=CREATED_AT)
    assert report == [] and applied.content_bytes() == before


# ---------------------------------------------------------------------------
# records


def test_template_record_round_trips(golden_records, deps):
    template = _golden_template(golden_records, deps)
    assert stm.parse_template(stm.template_record(template)) == template


def test_ledger_record_round_trips():
    entry = stm.LedgerEntry(
        template_id="tpl_abc",
        payer_id="u1",
        kind=stm.UsageKind.PURCHASE,
        credits=5,
        at=datetime(2025, 3, 16, 10, 0, tzinfo=timezone.utc),
    )
    assert stm.parse_ledger_entry(stm.ledger_record(entry)) == entry


# ---------------------------------------------------------------------------
# credits and metrics


def _store_with_template(golden_records, deps, tmp_path=None) -> tuple[stm.FeedbackStore, stm.DebugTemplate]:
    store = stm.FeedbackStore(tmp_path)
    template = _golden_template(golden_records, deps)
    store.add_template(template)
    return store, template


def test_grant_moves_credits_from_system_pool(golden_records, deps):
    store, _ = _store_with_template(golden_records, deps)
    store.grant("u1", 40)
    assert store.balances["u1"] == 40
    assert store.balances[stm.SYSTEM_ACCOUNT] == stm.SYSTEM_POOL - 40
    assert store.total_credits() == stm.SYSTEM_POOL


def test_grant_rejects_negative_and_exhausted_pool(golden_records, deps):
    store, _ = _store_with_template(golden_records, deps)
    with pytest.raises(ValueError):
        store.grant("u1", -1)
    with pytest.raises(InsufficientCredits):
        store.grant("u1", stm.SYSTEM_POOL + 1)


def test_purchase_pays_the_author(golden_records, deps):
    store, template = _store_with_template(golden_records, deps)
    store.grant("buyer", 20)
    entry = store.record_usage(template.template_id, stm.UsageKind.PURCHASE, "buyer", at=CREATED_AT)
    assert entry.credits == template.price_credits == 5
    assert store.balances["buyer"] == 15
    assert store.balances[template.author_id] == 5
    assert store.total_credits() == stm.SYSTEM_POOL


def test_purchase_fails_without_funds(golden_records, deps):
    store, template = _store_with_template(golden_records, deps)
    store.grant("broke", 4)
    with pytest.raises(InsufficientCredits):
        store.record_usage(template.template_id, stm.UsageKind.PURCHASE, "broke")
    assert store.balances["broke"] == 4
    assert store.ledger == []


def test_usage_metrics_increment_monotonically(golden_records, deps):
    store, template = _store_with_template(golden_records, deps)
    for kind, field in (
        (stm.UsageKind.VIEW, "views"),
        (stm.UsageKind.DOWNLOAD, "downloads"),
        (stm.UsageKind.RESOLUTION, "resolutions"),
    ):
        before = getattr(store.get_template(template.template_id), field)
        entry = store.record_usage(template.template_id, kind, "reader", at=CREATED_AT)
        assert entry.credits == 0
        assert getattr(store.get_template(template.template_id), field) == before + 1
    assert len(store.ledger) == 3


def test_unknown_template_raises(golden_records, deps):
    store, _ = _store_with_template(golden_records, deps)
    with pytest.raises(UnknownTemplate):
        store.get_template("tpl_nope")
    with pytest.raises(UnknownTemplate):
        store.record_usage("tpl_nope", stm.UsageKind.VIEW, "u")


def test_credit_conservation_over_random_operations(golden_records, deps):
    store, template = _store_with_template(golden_records, deps)
    rng = random.Random(99)
    users = [f"u{i}" for i in range(6)]
    for user in users:
        store.grant(user, rng.randrange(0, 30))
    for _ in range(300):
        op = rng.randrange(4)
        user = rng.choice(users)
        try:
            if op == 0:
                store.grant(user, rng.randrange(0, 10))
            elif op == 1:
                store.record_usage(template.template_id, stm.UsageKind.PURCHASE, user, at=CREATED_AT)
            elif op == 2:
                store.record_usage(template.template_id, stm.UsageKind.VIEW, user, at=CREATED_AT)
            else:
                store.record_usage(template.template_id, stm.UsageKind.RESOLUTION, user, at=CREATED_AT)
        except InsufficientCredits:
            pass
        assert store.total_credits() == stm.SYSTEM_POOL
        assert all(v >= 0 for v in store.balances.values())


# ---------------------------------------------------------------------------
# persistence


def test_store_reloads_templates_ledger_and_balances(golden_records, deps, tmp_path):
    store, template = _store_with_template(golden_records, deps, tmp_path)
    store.grant("buyer", 20)
    store.record_usage(template.template_id, stm.UsageKind.PURCHASE, "buyer", at=CREATED_AT)
    store.record_usage(template.template_id, stm.UsageKind.VIEW, "reader", at=CREATED_AT)

    reloaded = stm.FeedbackStore(tmp_path)
    assert set(reloaded.templates) == {template.template_id}
    assert reloaded.get_template(template.template_id).views == 1
    assert reloaded.balances == store.balances
    assert reloaded.ledger == store.ledger
    assert reloaded.total_credits() == stm.SYSTEM_POOL


def test_fresh_store_directory_layout(golden_records, deps, tmp_path):
    store, template = _store_with_template(golden_records, deps, tmp_path)
    store.grant("u1", 1)
    store.record_usage(template.template_id, stm.UsageKind.VIEW, "u1", at=CREATED_AT)
    assert (tmp_path / "templates" / template.template_id).is_file()
    assert (tmp_path / "ledger").is_file()
    assert (tmp_path / "balances").is_file()
