"""Walk the bundled conference-trip session through every feedback stage.

The session starts from a three-stage bootstrap (decompose, retrieve,
generate), then applies the canned eight-event editing sequence: the
plan is pruned and extended, the ranking is cleaned up and restricted
to the organizer's domain, and the answer is corrected and rewritten.
Every edit re-executes only the stages downstream of it, and the whole
session replays byte-exactly from its log.

Run from the repo root:

    python3 demos/01_debug_session.py
"""

from __future__ import annotations

import textwrap

from searchloop import actions as act
from searchloop.demo import DEMO_SESSION_ID, demo_events, demo_index, demo_query
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.session import open_session, replay, submit_feedback


def plan_line(state) -> str:
    return " ".join(s.sub_id for s in state.plan.sub_queries)


def main() -> None:
    deps = PipelineDeps(index=demo_index(), config=PipelineConfig())
    state = open_session(demo_query(), deps, session_id=DEMO_SESSION_ID)

    print(f"query: {state.query.text}")
    print(f"bootstrap plan: {plan_line(state)}")
    for sub in state.plan.sub_queries:
        print(f"  {sub.sub_id}: {sub.text}")
    q2 = state.evidence.per_subquery["Q2"]
    print(f"Q2 evidence before feedback: {[e.chunk_id for e in q2.entries]}")
    print("  (D1 is a news chunk with the wrong venue and dates, ranked first)")
    print()

    for event in demo_events(DEMO_SESSION_ID):
        submit_feedback(state, event, deps)
        kind = act.kind_of(event.action)
        print(f"seq {event.seq}  {kind:<22} plan={plan_line(state)}")

    print()
    q2 = state.evidence.per_subquery["Q2"]
    print(f"Q2 evidence after feedback: {[e.chunk_id for e in q2.entries]}")
    print(f"active filter: domain_allow={state.evidence.active_filter.domain_allow}")
    dates = next(s for s in state.answer.sections if s.section_id == "s_Q2")
    print("dates section now reads:")
    print(textwrap.indent(dates.text, "  "))
    hotels = next(s for s in state.answer.sections if s.section_id == "s_Q3")
    print(f"hotels section is user-corrected ({hotels.validation_state.value}):")
    print(textwrap.indent(hotels.text, "  "))
    print()

    rebuilt = replay(list(state.log.records), deps)
    identical = rebuilt.canonical_bytes() == state.canonical_bytes()
    print(f"replay of the {state.log_offset}-record log is byte-identical: {identical}")


if __name__ == "__main__":
    main()
