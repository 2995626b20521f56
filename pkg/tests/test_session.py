"""Session runtime: event fold, re-execution, caching, snapshots, logs."""

from __future__ import annotations

import random
from dataclasses import replace
from datetime import datetime, timezone

import pytest

from searchloop import actions as act
from searchloop import session as ses
from searchloop.demo import DEMO_SESSION_ID, demo_events, demo_query
from searchloop.errors import CorruptLog, FeedbackRejected
from searchloop.model import (
    Actor,
    RateValue,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    StageStatus,
    Style,
    Tone,
)
from searchloop.pipeline import PipelineDeps

from eventgen import random_event


def _event(state, action, *, actor=Actor.HUMAN):
    return act.FeedbackEvent(
        event_id=f"ev_{state.log_offset + 1:04d}",
        session_id=state.session_id,
        seq=state.log_offset + 1,
        stage=act.stage_of(action),
        actor=actor,
        occurred_at=datetime(2025, 3, 15, 13, 0, tzinfo=timezone.utc),
        action=action,
    )


def _submit(state, action, deps, **kw):
    return ses.submit_feedback(state, _event(state, action, **kw), deps)


# ---------------------------------------------------------------------------
# bootstrap


def test_open_session_writes_four_bootstrap_records(deps):
    state = ses.open_session(demo_query(), deps, session_id="s1")
    kinds = [r["type"] for r in state.log.records]
    assert kinds == ["session_opened", "bootstrap_plan", "bootstrap_evidence", "bootstrap_answer"]
    assert [r["seq"] for r in state.log.records] == [1, 2, 3, 4]
    assert state.log_offset == 4
    assert all(status is StageStatus.CLEAN for status in state.stage_status.values())


def test_open_session_mirrors_log_to_file(tmp_path, deps):
    path = tmp_path / "log"
    state = ses.open_session(demo_query(), deps, session_id="s1", log_path=path)
    on_disk = list(__import__("searchloop.records", fromlist=["read_records"]).read_records(path))
    assert on_disk == state.log.records
    with pytest.raises(ValueError):
        ses.open_session(demo_query(), deps, session_id="s2", log_path=path)


def test_bootstrap_matches_frozen_fixture(deps, golden_records):
    state = ses.open_session(demo_query(), deps, session_id=DEMO_SESSION_ID)
    assert state.log.records == golden_records[:4]


# ---------------------------------------------------------------------------
# the golden walk


def test_golden_walk_reaches_frozen_final_state(golden_session, golden_state_record):
    assert ses.snapshot_record(golden_session) == golden_state_record


def test_golden_log_matches_frozen_fixture(golden_session, golden_records):
    assert golden_session.log.records == golden_records


def test_replay_of_golden_log_is_byte_identical(golden_records, deps, golden_session):
    replayed = ses.replay(golden_records, deps)
    assert replayed.canonical_bytes() == golden_session.canonical_bytes()


# ---------------------------------------------------------------------------
# event numbering and ordinals


def test_seq_increments_one_per_event(golden_session, deps):
    before = golden_session.log_offset
    state = _submit(golden_session, act.Rate(value=RateValue.LIKE), deps)
    assert state.log_offset == before + 1
    assert state.log.records[-1]["seq"] == before + 1


def test_sub_ordinals_are_never_reused(deps):
    state = ses.open_session(demo_query(), deps, session_id="s1")
    start = state.next_sub_ordinal
    assert start == len(state.plan.sub_queries) + 1

    victim = state.plan.sub_queries[-1].sub_id
    state = _submit(state, act.RemoveSubQuery(sub_id=victim), deps)
    state = _submit(state, act.AddSubQuery(text="fresh angle", insert_position=0), deps)
    added = state.plan.sub_queries[0].sub_id
    assert added == f"Q{start}"
    assert victim not in state.plan.sub_ids()

    state = _submit(state, act.AddSubQuery(text="another angle", insert_position=0), deps)
    assert state.plan.sub_queries[0].sub_id == f"Q{start + 1}"


def test_next_sub_ordinal_survives_replay(deps):
    state = ses.open_session(demo_query(), deps, session_id="s1")
    state = _submit(state, act.AddSubQuery(text="extra", insert_position=0), deps)
    new_id = state.plan.sub_queries[0].sub_id
    state = _submit(state, act.RemoveSubQuery(sub_id=new_id), deps)
    replayed = ses.replay(state.log.records, deps)
    assert replayed.next_sub_ordinal == state.next_sub_ordinal
    assert replayed.canonical_bytes() == state.canonical_bytes()


# ---------------------------------------------------------------------------
# rejected events leave no trace


def test_rejected_event_mutates_nothing(golden_session, deps):
    before_bytes = golden_session.canonical_bytes()
    before_len = len(golden_session.log.records)
    bad = _event(golden_session, act.RemoveSubQuery(sub_id="Q99"))
    with pytest.raises(FeedbackRejected) as err:
        ses.submit_feedback(golden_session, bad, deps)
    assert err.value.code == "unknown_reference"
    assert golden_session.canonical_bytes() == before_bytes
    assert len(golden_session.log.records) == before_len


def test_stale_seq_rejected_with_code(golden_session, deps):
    event = _event(golden_session, act.Rate(value=RateValue.LIKE))
    stale = replace(event, seq=event.seq - 1)
    with pytest.raises(FeedbackRejected) as err:
        ses.submit_feedback(golden_session, stale, deps)
    assert err.value.code == "stale_sequence"


# ---------------------------------------------------------------------------
# downstream re-execution and preservation


def test_labels_survive_re_retrieval(golden_session, deps):
    # D3 was annotated irrelevant during the walk; a later plan edit reruns
    # retrieval and the label must keep holding it out of the list.
    state = _submit(golden_session, act.AddSubQuery(text="SIGIR 2025 workshops", insert_position=0), deps)
    for ranked in state.evidence.per_subquery.values():
        assert all(e.chunk_id != "D3" for e in ranked.entries)


def test_pins_survive_re_retrieval(golden_session, deps):
    pinned_sub = next(iter(sorted(golden_session.pins)))
    pinned_chunk, pinned_rank = next(iter(sorted(golden_session.pins[pinned_sub].items())))
    state = _submit(golden_session, act.AddSubQuery(text="SIGIR 2025 workshops", insert_position=0), deps)
    ranked = state.evidence.per_subquery[pinned_sub]
    assert ranked.entries[pinned_rank - 1].chunk_id == pinned_chunk


def test_user_corrected_section_survives_style_change(golden_session, deps):
    corrected = [s for s in golden_session.answer.sections if s.validation_state.value == "user_corrected"]
    assert corrected, "golden walk edits the hotel section"
    text_before = corrected[0].text
    state = _submit(golden_session, act.AdjustStyle(style=Style(tone=Tone.FORMAL)), deps)
    after = state.answer.section(corrected[0].section_id)
    assert after.text == text_before
    assert after.validation_state.value == "user_corrected"


def test_filter_change_reruns_retrieval_under_new_filter(deps):
    state = ses.open_session(demo_query(), deps, session_id="s1")
    state = _submit(state, act.SetFilter(filter=RetrievalFilter(domain_allow=("sigir.org",))), deps)
    for ranked in state.evidence.per_subquery.values():
        for entry in ranked.entries:
            assert deps.index.chunk_store[entry.chunk_id].source_domain.endswith("sigir.org")


def test_remove_drops_evidence_for_that_sub(deps):
    state = ses.open_session(demo_query(), deps, session_id="s1")
    victim = state.plan.sub_queries[-1].sub_id
    state = _submit(state, act.RemoveSubQuery(sub_id=victim), deps)
    assert victim not in state.evidence.per_subquery
    assert set(state.evidence.per_subquery) == set(state.plan.sub_ids())
    assert all(s.section_id != f"s_{victim}" for s in state.answer.sections)


# ---------------------------------------------------------------------------
# retrieval caching


def test_unchanged_subqueries_reuse_cached_rankings(deps):
    calls = []
    real_search = ses.search

    def spying_search(index, sub, filt=RetrievalFilter(), k=5, k1=1.2, b=0.75):
        calls.append(sub.sub_id)
        return real_search(index, sub, filt, k=k, k1=k1, b=b)

    state = ses.open_session(demo_query(), deps, session_id="s1")
    sub_id = state.plan.sub_queries[0].sub_id

    ses.search = spying_search
    try:
        calls.clear()
        _submit(state, act.RefineConstraint(sub_id=sub_id, key="venue", value="Padua"), deps)
    finally:
        ses.search = real_search
    # Only the refined sub-query lost its cache entry; the others re-ranked
    # from cache without touching the index.
    assert calls == [sub_id]


def test_filter_change_invalidates_cache_for_all_subs(deps):
    calls = []
    real_search = ses.search

    def spying_search(index, sub, filt=RetrievalFilter(), k=5, k1=1.2, b=0.75):
        calls.append(sub.sub_id)
        return real_search(index, sub, filt, k=k, k1=k1, b=b)

    state = ses.open_session(demo_query(), deps, session_id="s1")
    n = len(state.plan.sub_queries)

    ses.search = spying_search
    try:
        calls.clear()
        state = _submit(state, act.SetFilter(filter=RetrievalFilter(domain_allow=("sigir.org",))), deps)
        assert len(calls) == n
        calls.clear()
        # Back to the original filter: bootstrap cache entries still apply.
        state = _submit(state, act.SetFilter(filter=RetrievalFilter()), deps)
        assert calls == []
    finally:
        ses.search = real_search


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_round_trip_preserves_canonical_bytes(golden_session, tmp_path):
    path = tmp_path / "snapshot"
    ses.save_snapshot(golden_session, path)
    restored = ses.restore_snapshot(path)
    assert restored.canonical_bytes() == golden_session.canonical_bytes()


def test_restored_snapshot_accepts_further_events(golden_session, deps, tmp_path):
    path = tmp_path / "snapshot"
    ses.save_snapshot(golden_session, path)
    restored = ses.restore_snapshot(path)

    live = _submit(golden_session, act.Rate(value=RateValue.LIKE), deps)
    cold = _submit(restored, act.Rate(value=RateValue.LIKE), deps)
    assert cold.content_bytes() == live.content_bytes()


def test_restore_rejects_wrong_version(golden_session, tmp_path):
    from searchloop import records as rec

    record = ses.snapshot_record(golden_session)
    record["version"] = 99
    path = tmp_path / "snapshot"
    rec.write_records(path, [record])
    with pytest.raises(Exception):
        ses.restore_snapshot(path)


# ---------------------------------------------------------------------------
# corrupt logs


def test_fold_rejects_sequence_gap(golden_records, deps):
    records = [dict(r) for r in golden_records]
    records[6] = dict(records[6], seq=99)
    with pytest.raises(CorruptLog):
        ses.fold_log(records, deps)


def test_fold_rejects_truncated_bootstrap(golden_records, deps):
    with pytest.raises(CorruptLog):
        ses.fold_log(golden_records[:3], deps)


def test_fold_rejects_shuffled_bootstrap(golden_records, deps):
    records = list(golden_records)
    records[1], records[2] = dict(records[2], seq=2), dict(records[1], seq=3)
    with pytest.raises(CorruptLog):
        ses.fold_log(records, deps)


def test_fold_rejects_unknown_record_type(golden_records, deps):
    records = list(golden_records) + [{"type": "mystery", "seq": len(golden_records) + 1}]
    with pytest.raises(CorruptLog):
        ses.fold_log(records, deps)


def test_fold_rejects_invalid_event(golden_records, deps):
    bad = {
        "type": "feedback_event",
        "event_id": "ev_bad",
        "session_id": golden_records[0]["session_id"],
        "seq": len(golden_records) + 1,
        "stage": "decomposition",
        "actor": "human",
        "occurred_at": "2025-03-15T13:00:00.000Z",
        "action": {"kind": "remove_sub_query", "sub_id": "Q99"},
    }
    with pytest.raises(CorruptLog):
        ses.fold_log(list(golden_records) + [bad], deps)


def test_load_log_requires_session_opened_header(tmp_path):
    from searchloop import records as rec

    path = tmp_path / "log"
    rec.write_records(path, [{"type": "not_a_log", "seq": 1}])
    with pytest.raises(CorruptLog):
        ses.load_log(path)


# ---------------------------------------------------------------------------
# replay determinism on random walks


def test_prefix_replay_plus_remainder_equals_full_replay(deps):
    rng = random.Random(20250315)
    state = ses.open_session(demo_query(), deps, session_id="s_rand")
    for _ in range(12):
        ses.submit_feedback(state, random_event(rng, state), deps)
    records = state.log.records

    full = ses.replay(records, deps)
    cut = len(records) - 4
    partial = ses.fold_log(records[:cut], deps)
    for record in records[cut:]:
        import searchloop.records as rec

        ses.submit_feedback(partial, rec.parse_feedback_event(record), deps)
    assert partial.canonical_bytes() == full.canonical_bytes()


def test_double_replay_is_deterministic(deps):
    rng = random.Random(7)
    state = ses.open_session(demo_query(), deps, session_id="s_rand2")
    for _ in range(10):
        ses.submit_feedback(state, random_event(rng, state), deps)
    once = ses.replay(state.log.records, deps)
    twice = ses.replay(state.log.records, deps)
    assert once.canonical_bytes() == twice.canonical_bytes() == state.canonical_bytes()
