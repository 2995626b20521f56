"""Teach the shadow agent from one session, then let it propose the edits.

The agent learns Laplace-smoothed preferences from a user's past logs
(here: the bundled demo session) and turns them into pending proposals
on a fresh session. Accepting a proposal appends the same event a human
would have produced, just attributed to the shadow_agent actor.

Run from the repo root:

    python3 demos/02_shadow_agent.py
"""

from __future__ import annotations

from searchloop import agent
from searchloop.demo import DEMO_USER_ID, demo_events, demo_index, demo_query
from searchloop.model import Stage, UserProfile
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.session import open_session, submit_feedback


def main() -> None:
    deps = PipelineDeps(index=demo_index(), config=PipelineConfig())

    teacher = open_session(demo_query(), deps, session_id="ses_demo_teacher")
    for event in demo_events("ses_demo_teacher"):
        submit_feedback(teacher, event, deps)

    empty = UserProfile(user_id=DEMO_USER_ID)
    profile = agent.update_profile(empty, [list(teacher.log.records)])
    print(f"profile learned from 1 session of user {profile.user_id}:")
    for pref in profile.preferences:
        print(f"  {pref.dimension}={pref.value}  confidence {pref.confidence:.3f}  "
              f"(Laplace: (1+1)/(1+2))")
    print()

    fresh = open_session(demo_query(), deps, session_id="ses_demo_fresh")
    print("proposals on a fresh session for the same query:")
    accepted_state = fresh
    for stage in (Stage.DECOMPOSITION, Stage.RETRIEVAL, Stage.GENERATION):
        for proposal in agent.suggest_feedback(stage, fresh, profile):
            kind = proposal.event.action.__class__.__name__
            print(f"  [{stage.value}] {kind}: {proposal.rationale}")

    retrieval = agent.suggest_feedback(Stage.RETRIEVAL, fresh, profile)
    if retrieval:
        accepted_state, resolved = agent.confirm_proposal(fresh, retrieval[0], "accept", deps)
        print()
        print(f"accepted the retrieval proposal ({resolved.status.value}):")
        print(f"  filter now allows {accepted_state.evidence.active_filter.domain_allow}")
        last = accepted_state.log.records[-1]
        print(f"  log seq {last['seq']} recorded with actor={last['actor']!r}")
    print()

    print("the prompt an LLM-backed proposer would receive for the retrieval stage:")
    prompt = agent.render_prompt(
        Stage.RETRIEVAL, profile, fresh.query.text, accepted_state.stage_output(Stage.RETRIEVAL)
    )
    head = prompt.splitlines()[:6]
    for line in head:
        print(f"  {line}")
    print(f"  ... ({len(prompt.splitlines())} lines total)")


if __name__ == "__main__":
    main()
