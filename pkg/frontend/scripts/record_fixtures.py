"""Record gateway fixtures for the console's contract tests.

Drives the real HTTP app in-process and freezes request/response pairs
under frontend/test/fixtures/. The recorded requests are the bodies the
console's gesture serializer must reproduce byte-for-byte (as JSON
values), so every gesture here is written in the console's own shape
next to the wire-level request it stands for.

Run from the repo root after any gateway or pipeline change:

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from searchloop import agent
from searchloop.demo import DEMO_QUERY_TEXT, DEMO_USER_ID
from searchloop.index import build_index, read_corpus
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.service import GatewayService, create_app

REPO = Path(__file__).resolve().parents[2]
OUT = REPO / "frontend" / "test" / "fixtures"

STAGE_FOR_KIND = {
    "add_sub_query": "decomposition",
    "remove_sub_query": "decomposition",
    "reorder_sub_queries": "decomposition",
    "refine_constraint": "decomposition",
    "annotate_relevance": "retrieval",
    "rerank_evidence": "retrieval",
    "set_filter": "retrieval",
    "correct_fact": "generation",
    "edit_section": "generation",
    "adjust_style": "generation",
    "rate": "final",
}

HOTEL_TEXT = (
    "- Hotel Milano Padova, 600 m from the venue\n"
    "- NH Padova, 1.2 km, near the train station\n"
    "- Hotel Al Fagiano, budget option in the old town"
)


def event_body(session_id: str, seq: int, action: dict) -> dict:
    return {
        "session_id": session_id,
        "seq": seq,
        "stage": STAGE_FOR_KIND[action["kind"]],
        "actor": "human",
        "action": action,
    }


def unwrap(resp, status: int) -> dict:
    body = resp.json()
    assert resp.status_code == status, f"expected {status}, got {resp.status_code}: {resp.text}"
    assert set(body) in ({"request_id", "payload"}, {"request_id", "error"}), body
    return body


def payload(resp, status: int = 200) -> dict:
    return unwrap(resp, status)["payload"]


def dump(name: str, data: dict) -> None:
    path = OUT / name
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path.relative_to(REPO)}")


def walk_steps(client: TestClient, sid: str) -> list[dict]:
    """The eleven-gesture walk: one step per action-taxonomy variant."""

    def current():
        return payload(client.get(f"/sessions/{sid}"))["session"]

    steps: list[dict] = []

    def submit(gesture: dict, action: dict, context: dict | None = None) -> dict:
        seq = current()["log_offset"] + 1
        request = event_body(sid, seq, action)
        resp = client.post(f"/sessions/{sid}/feedback", json=request)
        body = unwrap(resp, 200)
        assert body["payload"]["applied_seq"] == seq
        step = {"gesture": gesture, "request": request, "status": resp.status_code, "response": body}
        if context:
            step["context"] = context
        steps.append(step)
        return body["payload"]["session"]

    submit(
        {"gesture": "remove_button", "subId": "Q4"},
        {"kind": "remove_sub_query", "sub_id": "Q4"},
    )
    submit(
        {
            "gesture": "add_form",
            "text": "What is the registration process and cost for SIGIR 2025?",
            "insertPosition": 3,
        },
        {
            "kind": "add_sub_query",
            "text": "What is the registration process and cost for SIGIR 2025?",
            "insert_position": 3,
            "constraints": [],
        },
    )
    before_order = [s["sub_id"] for s in current()["plan"]["sub_queries"]]
    submit(
        {"gesture": "row_drag", "order": ["Q2", "Q1", "Q3", "Q5"]},
        {"kind": "reorder_sub_queries", "order": ["Q2", "Q1", "Q3", "Q5"]},
        context={"before_order": before_order, "drop": {"subId": "Q2", "toIndex": 0}},
    )
    submit(
        {"gesture": "constraint_edit", "subId": "Q1", "key": "venue", "value": "Padova Congress Center"},
        {"kind": "refine_constraint", "sub_id": "Q1", "key": "venue", "value": "Padova Congress Center"},
    )
    q2_entries = current()["evidence"]["per_subquery"]["Q2"]["entries"]
    assert any(e["chunk_id"] == "D3" for e in q2_entries), "walk expects D3 in Q2's list"
    submit(
        {"gesture": "label_chip", "subId": "Q2", "chunkId": "D3", "label": "irrelevant"},
        {"kind": "annotate_relevance", "sub_id": "Q2", "chunk_id": "D3", "label": "irrelevant"},
    )
    q2_entries = current()["evidence"]["per_subquery"]["Q2"]["entries"]
    d1_rank = next(e["rank"] for e in q2_entries if e["chunk_id"] == "D1")
    submit(
        {"gesture": "evidence_drag", "subId": "Q2", "chunkId": "D2", "newRank": d1_rank},
        {"kind": "rerank_evidence", "sub_id": "Q2", "chunk_id": "D2", "new_rank": d1_rank},
        context={
            "entries": q2_entries,
            "drag": {"subId": "Q2", "chunkId": "D2", "aboveChunkId": "D1"},
        },
    )
    submit(
        {"gesture": "filter_form", "domainAllow": ["sigir.org"]},
        {
            "kind": "set_filter",
            "filter": {
                "type": "retrieval_filter",
                "time_from": None,
                "time_to": None,
                "domain_allow": ["sigir.org"],
                "domain_block": None,
            },
        },
    )
    sections = [s["section_id"] for s in current()["answer"]["sections"]]
    assert "s_Q2" in sections and "s_Q3" in sections, sections
    submit(
        {
            "gesture": "flag_note",
            "sectionId": "s_Q2",
            "note": "SIGIR 2025 runs July 13 to 18 at the Padova Congress Center.",
        },
        {
            "kind": "correct_fact",
            "section_id": "s_Q2",
            "note": "SIGIR 2025 runs July 13 to 18 at the Padova Congress Center.",
        },
    )
    submit(
        {"gesture": "inline_edit", "sectionId": "s_Q3", "newText": HOTEL_TEXT},
        {"kind": "edit_section", "section_id": "s_Q3", "new_text": HOTEL_TEXT},
    )
    submit(
        {"gesture": "style_picker", "tone": "neutral", "verbosity": "brief", "layout": "bullets"},
        {"kind": "adjust_style", "style": {"tone": "neutral", "verbosity": "brief", "layout": "bullets"}},
    )
    submit(
        {"gesture": "thumb", "value": "like", "comment": "solid plan"},
        {"kind": "rate", "value": "like", "comment": "solid plan"},
    )
    kinds = [s["request"]["action"]["kind"] for s in steps]
    assert sorted(kinds) == sorted(STAGE_FOR_KIND), f"walk must cover the taxonomy, got {kinds}"
    return steps


def main() -> int:
    data_dir = Path(tempfile.mkdtemp(prefix="console-fixtures-"))
    corpus = read_corpus(REPO / "tests" / "fixtures" / "corpus.records")
    deps = PipelineDeps(index=build_index(corpus), config=PipelineConfig())
    service = GatewayService(data_dir, deps)
    client = TestClient(create_app(service))
    OUT.mkdir(parents=True, exist_ok=True)

    # -- the full gesture walk on a demo-query session
    open_resp = client.post("/sessions", json={"query_text": DEMO_QUERY_TEXT, "user_id": DEMO_USER_ID})
    open_body = unwrap(open_resp, 201)
    sid = open_body["payload"]["session"]["session_id"]
    dump("open_session.json", {"status": open_resp.status_code, "body": open_body})

    steps = walk_steps(client, sid)
    dump("gesture_walk.json", {"session_id": sid, "steps": steps})

    final_resp = client.get(f"/sessions/{sid}")
    dump("session_final.json", {"status": final_resp.status_code, "body": unwrap(final_resp, 200)})
    events_resp = client.get(f"/sessions/{sid}/events", params={"since": 0})
    dump("events_walk.json", {"status": events_resp.status_code, "body": unwrap(events_resp, 200)})

    # -- dirty-then-refresh cycle: a lone Remove on a fresh session
    cyc_open = client.post("/sessions", json={"query_text": DEMO_QUERY_TEXT})
    cyc_body = unwrap(cyc_open, 201)
    cyc_sid = cyc_body["payload"]["session"]["session_id"]
    before_resp = client.get(f"/sessions/{cyc_sid}")
    before = unwrap(before_resp, 200)
    remove_request = event_body(cyc_sid, 5, {"kind": "remove_sub_query", "sub_id": "Q4"})
    remove_resp = client.post(f"/sessions/{cyc_sid}/feedback", json=remove_request)
    remove_body = unwrap(remove_resp, 200)
    after_resp = client.get(f"/sessions/{cyc_sid}")
    after = unwrap(after_resp, 200)
    dump(
        "remove_cycle.json",
        {
            "open": {"status": cyc_open.status_code, "body": cyc_body},
            "before": {"status": before_resp.status_code, "body": before},
            "request": remove_request,
            "submit": {"status": remove_resp.status_code, "body": remove_body},
            "after": {"status": after_resp.status_code, "body": after},
        },
    )

    # -- agent proposals: learn a profile from the walk, propose on a
    #    fresh session, accept the retrieval card
    profile_path = service._profile_path(DEMO_USER_ID)
    profile_path.parent.mkdir(parents=True, exist_ok=True)
    walk_log = list(service.get(sid).log.records)
    profile = agent.update_profile(agent.load_profile(profile_path, DEMO_USER_ID), [walk_log])
    agent.save_profile(profile_path, profile)

    prop_open = client.post("/sessions", json={"query_text": DEMO_QUERY_TEXT, "user_id": DEMO_USER_ID})
    prop_body = unwrap(prop_open, 201)
    prop_sid = prop_body["payload"]["session"]["session_id"]
    retrieval_resp = client.get(f"/sessions/{prop_sid}/proposals", params={"stage": "retrieval"})
    retrieval_body = unwrap(retrieval_resp, 200)
    assert retrieval_body["payload"]["proposals"], "coached profile should propose a filter"
    decomposition_resp = client.get(f"/sessions/{prop_sid}/proposals", params={"stage": "decomposition"})
    decomposition_body = unwrap(decomposition_resp, 200)
    pid = retrieval_body["payload"]["proposals"][0]["proposal_id"]
    confirm_resp = client.post(
        f"/sessions/{prop_sid}/proposals/{pid}/confirm", json={"decision": "accept"}
    )
    confirm_body = unwrap(confirm_resp, 200)
    assert confirm_body["payload"]["proposal"]["status"] == "accepted"
    prop_events_resp = client.get(f"/sessions/{prop_sid}/events", params={"since": 0})
    prop_events = {"status": prop_events_resp.status_code, "body": unwrap(prop_events_resp, 200)}
    dump(
        "proposals.json",
        {
            "open": {"status": prop_open.status_code, "body": prop_body},
            "retrieval": {"status": retrieval_resp.status_code, "body": retrieval_body},
            "decomposition": {"status": decomposition_resp.status_code, "body": decomposition_body},
            "confirm": {
                "proposal_id": pid,
                "request": {"decision": "accept"},
                "status": confirm_resp.status_code,
                "body": confirm_body,
            },
            "events": prop_events,
        },
    )

    # -- store: package the walk, list, match, apply onto a fresh session
    pack_resp = client.post(
        "/store/templates",
        json={"session_id": sid, "title": "SIGIR trip debug walk", "publish": True},
    )
    pack_body = unwrap(pack_resp, 201)
    tid = pack_body["payload"]["template"]["template_id"]
    list_resp = client.get("/store/templates")
    list_body = unwrap(list_resp, 200)
    match_resp = client.get("/store/templates", params={"query": DEMO_QUERY_TEXT})
    match_body = unwrap(match_resp, 200)
    apply_open = client.post("/sessions", json={"query_text": DEMO_QUERY_TEXT, "user_id": "u_viewer"})
    apply_open_body = unwrap(apply_open, 201)
    apply_sid = apply_open_body["payload"]["session"]["session_id"]
    apply_request = {"session_id": apply_sid}
    apply_resp = client.post(f"/store/templates/{tid}/apply", json=apply_request)
    apply_body = unwrap(apply_resp, 200)
    assert all(r["status"] == "applied" for r in apply_body["payload"]["report"])
    apply_events_resp = client.get(f"/sessions/{apply_sid}/events", params={"since": 0})
    apply_events = {"status": apply_events_resp.status_code, "body": unwrap(apply_events_resp, 200)}
    dump(
        "template_apply.json",
        {
            "package": {"status": pack_resp.status_code, "body": pack_body},
            "list": {"status": list_resp.status_code, "body": list_body},
            "match": {"status": match_resp.status_code, "body": match_body},
            "open": {"status": apply_open.status_code, "body": apply_open_body},
            "apply": {"request": apply_request, "status": apply_resp.status_code, "body": apply_body},
            "events": apply_events,
        },
    )

    # -- error envelopes the console must surface verbatim
    stale_resp = client.post(f"/sessions/{sid}/feedback", json=steps[0]["request"])
    stale_body = unwrap(stale_resp, 409)
    ref_open = client.post("/sessions", json={"query_text": DEMO_QUERY_TEXT})
    ref_sid = unwrap(ref_open, 201)["payload"]["session"]["session_id"]
    ref_request = event_body(ref_sid, 5, {"kind": "remove_sub_query", "sub_id": "Q99"})
    ref_resp = client.post(f"/sessions/{ref_sid}/feedback", json=ref_request)
    ref_body = unwrap(ref_resp, 400)
    missing_resp = client.get("/sessions/nope")
    missing_body = unwrap(missing_resp, 404)
    bad_stage_resp = client.get(f"/sessions/{sid}/proposals", params={"stage": "bogus"})
    bad_stage_body = unwrap(bad_stage_resp, 400)
    dump(
        "errors.json",
        {
            "stale": {"request": steps[0]["request"], "status": stale_resp.status_code, "body": stale_body},
            "unknown_reference": {"request": ref_request, "status": ref_resp.status_code, "body": ref_body},
            "unknown_session": {"status": missing_resp.status_code, "body": missing_body},
            "bad_stage": {"status": bad_stage_resp.status_code, "body": bad_stage_body},
        },
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
