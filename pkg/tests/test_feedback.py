"""Pure feedback transforms: plan edits, list edits, answer edits."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from searchloop import actions as act
from searchloop import feedback as fb
from searchloop.model import (
    Actor,
    Answer,
    AnswerSection,
    EvidenceSet,
    Provenance,
    QueryPlan,
    RankedEntry,
    RankedList,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    SubQuery,
    Tone,
    ValidationState,
    Style,
)


def _plan(*texts: str) -> QueryPlan:
    return QueryPlan(
        plan_version=1,
        parent_version=None,
        sub_queries=tuple(
            SubQuery(sub_id=f"Q{i + 1}", text=t, position=i) for i, t in enumerate(texts)
        ),
    )


def _ranked(*chunk_ids: str) -> RankedList:
    return RankedList(
        entries=tuple(
            RankedEntry(chunk_id=cid, score=float(10 - i), rank=i + 1) for i, cid in enumerate(chunk_ids)
        )
    )


# ---------------------------------------------------------------------------
# plan edits


def test_add_inserts_at_position_and_renumbers():
    plan = _plan("a", "b")
    out = fb.apply_decomposition_feedback(plan, act.AddSubQuery(text="c", insert_position=1), Actor.HUMAN)
    assert [s.text for s in out.sub_queries] == ["a", "c", "b"]
    assert [s.position for s in out.sub_queries] == [0, 1, 2]
    assert out.plan_version == 2 and out.parent_version == 1
    assert out.sub_queries[1].provenance is Provenance.USER_ADDED


def test_add_by_shadow_agent_is_marked_agent_suggested():
    out = fb.apply_decomposition_feedback(_plan("a"), act.AddSubQuery(text="c", insert_position=0), Actor.SHADOW_AGENT)
    assert out.sub_queries[0].provenance is Provenance.AGENT_SUGGESTED


def test_explicit_new_sub_id_wins_over_default():
    out = fb.apply_decomposition_feedback(
        _plan("a", "b"), act.AddSubQuery(text="c", insert_position=0), Actor.HUMAN, new_sub_id="Q7"
    )
    assert out.sub_queries[0].sub_id == "Q7"


def test_default_sub_id_skips_used_ordinals():
    plan = _plan("a", "b", "c")
    assert fb.next_sub_id(plan) == "Q4"
    removed = fb.apply_decomposition_feedback(plan, act.RemoveSubQuery(sub_id="Q3"), Actor.HUMAN)
    # Highest historical ordinal still counts even after Q3 left the plan.
    assert fb.next_sub_id(removed) == "Q3"  # standalone default only sees the surviving plan


def test_remove_drops_and_renumbers_positions():
    out = fb.apply_decomposition_feedback(_plan("a", "b", "c"), act.RemoveSubQuery(sub_id="Q2"), Actor.HUMAN)
    assert [s.sub_id for s in out.sub_queries] == ["Q1", "Q3"]
    assert [s.position for s in out.sub_queries] == [0, 1]


def test_reorder_is_exact_permutation_and_bumps_version():
    plan = _plan("a", "b", "c")
    out = fb.apply_decomposition_feedback(plan, act.ReorderSubQueries(order=("Q3", "Q1", "Q2")), Actor.HUMAN)
    assert [s.sub_id for s in out.sub_queries] == ["Q3", "Q1", "Q2"]
    identity = fb.apply_decomposition_feedback(plan, act.ReorderSubQueries(order=("Q1", "Q2", "Q3")), Actor.HUMAN)
    assert identity.plan_version == 2
    assert [s.sub_id for s in identity.sub_queries] == ["Q1", "Q2", "Q3"]


def test_refine_constraint_replaces_same_key_appends_new():
    plan = QueryPlan(
        plan_version=1,
        parent_version=None,
        sub_queries=(SubQuery(sub_id="Q1", text="a", constraints=(("k", "old"), ("z", "zz")), position=0),),
    )
    out = fb.apply_decomposition_feedback(plan, act.RefineConstraint(sub_id="Q1", key="k", value="new"), Actor.HUMAN)
    assert out.sub_queries[0].constraints == (("z", "zz"), ("k", "new"))


def test_non_decomposition_action_is_a_type_error():
    from searchloop.model import RateValue

    with pytest.raises(TypeError):
        fb.apply_decomposition_feedback(_plan("a"), act.Rate(value=RateValue.LIKE), Actor.HUMAN)


# ---------------------------------------------------------------------------
# evidence edits


def test_annotate_irrelevant_removes_entry_and_closes_rank_gap():
    ev = EvidenceSet(per_subquery={"Q1": _ranked("D1", "D2", "D3")})
    out = fb.apply_retrieval_feedback(ev, act.AnnotateRelevance(sub_id="Q1", chunk_id="D2", label=RelevanceLabel.IRRELEVANT))
    got = out.per_subquery["Q1"]
    assert [(e.chunk_id, e.rank) for e in got.entries] == [("D1", 1), ("D3", 2)]


def test_annotate_relevant_labels_in_place():
    ev = EvidenceSet(per_subquery={"Q1": _ranked("D1", "D2")})
    out = fb.apply_retrieval_feedback(ev, act.AnnotateRelevance(sub_id="Q1", chunk_id="D2", label=RelevanceLabel.RELEVANT))
    got = out.per_subquery["Q1"]
    assert [(e.chunk_id, e.label) for e in got.entries] == [("D1", None), ("D2", RelevanceLabel.RELEVANT)]


def test_rerank_pins_chunk_at_target_rank():
    ev = EvidenceSet(per_subquery={"Q1": _ranked("D1", "D2", "D3")})
    out = fb.apply_retrieval_feedback(ev, act.RerankEvidence(sub_id="Q1", chunk_id="D3", new_rank=1))
    got = out.per_subquery["Q1"]
    assert [e.chunk_id for e in got.entries] == ["D3", "D1", "D2"]
    assert got.entries[0].pin == 1 and got.entries[1].pin is None


def test_second_pin_to_same_rank_displaces_the_first():
    ev = EvidenceSet(per_subquery={"Q1": _ranked("D1", "D2", "D3")})
    ev = fb.apply_retrieval_feedback(ev, act.RerankEvidence(sub_id="Q1", chunk_id="D3", new_rank=1))
    out = fb.apply_retrieval_feedback(ev, act.RerankEvidence(sub_id="Q1", chunk_id="D2", new_rank=1))
    got = out.per_subquery["Q1"]
    assert got.entries[0].chunk_id == "D2" and got.entries[0].pin == 1
    assert all(e.pin is None for e in got.entries[1:])


def test_set_filter_swaps_active_filter_and_keeps_lists():
    ranked = _ranked("D1")
    ev = EvidenceSet(per_subquery={"Q1": ranked})
    filt = RetrievalFilter(domain_allow=("sigir.org",))
    out = fb.apply_retrieval_feedback(ev, act.SetFilter(filter=filt))
    assert out.active_filter == filt
    assert out.per_subquery["Q1"] == ranked


def test_rebuild_list_drops_pins_that_no_longer_fit():
    entries = [
        RankedEntry(chunk_id="D1", score=3.0, rank=1),
        RankedEntry(chunk_id="D2", score=2.0, rank=2, pin=5),
    ]
    out = fb.rebuild_list(entries)
    assert [(e.chunk_id, e.rank, e.pin) for e in out.entries] == [("D1", 1, None), ("D2", 2, None)]


# ---------------------------------------------------------------------------
# answer edits


def _answer() -> Answer:
    return Answer(
        sections=(
            AnswerSection(section_id="s1", text="alpha [D1]", citations=("D1",)),
            AnswerSection(section_id="s2", text="beta", citations=()),
        ),
        style=Style(),
    )


def test_correct_fact_flags_section_and_requests_regeneration():
    out, inv = fb.apply_generation_feedback(_answer(), act.CorrectFact(section_id="s1", note="wrong date"))
    assert out.sections[0].validation_state is ValidationState.FLAGGED
    assert out.sections[0].correction_note == "wrong date"
    assert out.sections[1].validation_state is ValidationState.FRESH
    assert inv.stages_to_rerun == (Stage.GENERATION,)
    assert inv.sections_to_regenerate == ("s1",)


def test_edit_section_with_new_text_marks_corrected_and_clears_citations():
    out, inv = fb.apply_generation_feedback(_answer(), act.EditSection(section_id="s1", new_text="mine now"))
    assert out.sections[0].text == "mine now"
    assert out.sections[0].validation_state is ValidationState.USER_CORRECTED
    assert out.sections[0].citations == ()
    assert inv == fb.EMPTY_INVALIDATION


def test_edit_section_with_identical_text_marks_validated():
    out, _ = fb.apply_generation_feedback(_answer(), act.EditSection(section_id="s2", new_text="beta"))
    assert out.sections[1].validation_state is ValidationState.USER_VALIDATED


def test_adjust_style_regenerates_only_fresh_sections():
    answer, _ = fb.apply_generation_feedback(_answer(), act.EditSection(section_id="s1", new_text="mine"))
    out, inv = fb.apply_generation_feedback(answer, act.AdjustStyle(style=Style(tone=Tone.FORMAL)))
    assert out.style.tone is Tone.FORMAL
    assert inv.sections_to_regenerate == ("s2",)


# ---------------------------------------------------------------------------
# invalidation closure


def _event_for(action):
    return act.FeedbackEvent(
        event_id="e",
        session_id="s",
        seq=5,
        stage=act.stage_of(action),
        actor=Actor.HUMAN,
        occurred_at=datetime(2025, 3, 15, tzinfo=timezone.utc),
        action=action,
    )


def test_decomposition_events_invalidate_both_downstream_stages():
    inv = fb.invalidation_set(_event_for(act.AddSubQuery(text="x", insert_position=0)))
    assert inv.stages_to_rerun == (Stage.RETRIEVAL, Stage.GENERATION)


def test_retrieval_events_invalidate_generation_only():
    inv = fb.invalidation_set(_event_for(act.SetFilter(filter=RetrievalFilter())))
    assert inv.stages_to_rerun == (Stage.GENERATION,)


def test_edit_section_invalidates_nothing():
    assert fb.invalidation_set(_event_for(act.EditSection(section_id="s", new_text="x"))) == fb.EMPTY_INVALIDATION


def test_rate_invalidates_nothing():
    from searchloop.model import RateValue

    assert fb.invalidation_set(_event_for(act.Rate(value=RateValue.LIKE))) == fb.EMPTY_INVALIDATION
