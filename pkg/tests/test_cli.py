"""Command-line tests, run in process through main(argv).

The data directory comes from NEXT_SEARCH_DATA_DIR so each test gets an
isolated tree; stdout is the machine-readable surface (one canonical
JSON record per line except where a command prints plain text).
"""

from __future__ import annotations

import io
import json
import sys

import pytest

from searchloop import records as rec
from searchloop.cli import main
from searchloop.demo import DEMO_USER_ID, demo_events, demo_query

QUERY = demo_query().text


@pytest.fixture
def env(tmp_path, fixtures_dir, monkeypatch, capsys):
    """Isolated data dir with a prebuilt index, wired through the env var."""
    data = tmp_path / "data"
    monkeypatch.setenv("NEXT_SEARCH_DATA_DIR", str(data))
    monkeypatch.delenv("NEXT_SEARCH_CONFIG", raising=False)
    code = main(["index", "build", "--corpus", str(fixtures_dir / "corpus.records"),
                 "--out", str(data / "index")])
    assert code == 0
    capsys.readouterr()
    return data


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def open_session(capsys, sid="ses_cli_0001", user=DEMO_USER_ID, query=QUERY):
    code, out, err = run(capsys, "session", "open", "--query", query,
                         "--user", user, "--session-id", sid)
    assert code == 0, err
    assert out.strip() == sid
    return sid


def submit(capsys, tmp_path, sid, record, name="event.json"):
    path = tmp_path / name
    path.write_text(json.dumps(record), encoding="utf-8")
    return run(capsys, "session", "feedback", "--id", sid, "--file", str(path))


def walk_demo(capsys, tmp_path, sid):
    for event in demo_events(sid):
        code, _, err = submit(capsys, tmp_path, sid, rec.feedback_event_record(event))
        assert code == 0, err


REMOVE_Q4 = {
    "stage": "decomposition", "actor": "human",
    "action": {"kind": "remove_sub_query", "sub_id": "Q4"},
}


class TestIndex:
    def test_build_reports_corpus_stats(self, env, fixtures_dir, capsys, corpus_chunks):
        out_path = env / "index2"
        code, out, _ = run(capsys, "index", "build",
                           "--corpus", str(fixtures_dir / "corpus.records"),
                           "--out", str(out_path))
        assert code == 0
        stats = json.loads(out)
        assert stats["chunks"] == len(corpus_chunks)
        assert stats["terms"] > 0
        assert stats["out"] == str(out_path)
        assert out_path.exists()

    def test_build_with_missing_corpus_is_a_usage_error(self, env, capsys):
        code, _, err = run(capsys, "index", "build", "--corpus", "/nope/missing.records",
                           "--out", str(env / "index3"))
        assert code == 2
        assert "error:" in err


class TestSession:
    def test_open_prints_the_id_and_persists(self, env, capsys):
        sid = open_session(capsys)
        assert (env / "sessions" / sid / "log").exists()
        assert (env / "sessions" / sid / "snapshot").exists()

    def test_open_mints_an_id_when_not_given(self, env, capsys):
        code, out, _ = run(capsys, "session", "open", "--query", QUERY)
        assert code == 0
        assert out.strip().startswith("ses_")

    def test_open_without_an_index_points_at_the_fix(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("NEXT_SEARCH_CONFIG", raising=False)
        code, _, err = run(capsys, "--data-dir", str(tmp_path / "bare"),
                           "session", "open", "--query", QUERY)
        assert code == 2
        assert "no index" in err

    def test_feedback_from_a_file(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        code, out, _ = submit(capsys, tmp_path, sid, dict(REMOVE_Q4, seq=5))
        assert code == 0
        payload = json.loads(out)
        assert payload["applied_seq"] == 5
        assert set(payload["stage_status"].values()) == {"clean"}
        code, out, _ = run(capsys, "session", "show", "--id", sid, "--stage", "decomposition")
        assert code == 0
        plan = json.loads(out)
        assert [s["sub_id"] for s in plan["sub_queries"]] == ["Q1", "Q2", "Q3"]

    def test_feedback_from_stdin_and_seq_defaulting(self, env, tmp_path, capsys, monkeypatch):
        sid = open_session(capsys)
        code, out, _ = submit(capsys, tmp_path, sid, REMOVE_Q4)
        assert code == 0 and json.loads(out)["applied_seq"] == 5
        rate = {"stage": "final", "actor": "human", "action": {"kind": "rate", "value": "like"}}
        monkeypatch.setattr(sys, "stdin", io.StringIO(json.dumps(rate)))
        code, out, _ = run(capsys, "session", "feedback", "--id", sid, "--file", "-")
        assert code == 0
        assert json.loads(out)["applied_seq"] == 6

    def test_stale_event_is_a_usage_error(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        assert submit(capsys, tmp_path, sid, dict(REMOVE_Q4, seq=5))[0] == 0
        code, _, err = submit(capsys, tmp_path, sid, dict(REMOVE_Q4, seq=5))
        assert code == 2
        assert "stale_sequence" in err

    def test_feedback_against_a_missing_session(self, env, tmp_path, capsys):
        code, _, err = submit(capsys, tmp_path, "ses_missing", dict(REMOVE_Q4, seq=5))
        assert code == 2
        assert "no session log" in err

    def test_show_prints_state_or_one_stage(self, env, capsys):
        sid = open_session(capsys)
        code, out, _ = run(capsys, "session", "show", "--id", sid)
        assert code == 0
        state = json.loads(out)
        assert state["session_id"] == sid
        assert state["log_offset"] == 4
        code, out, _ = run(capsys, "session", "show", "--id", sid, "--stage", "decomposition")
        assert json.loads(out) == state["plan"]

    def test_show_rejects_a_bad_stage_name(self, env, capsys):
        sid = open_session(capsys)
        with pytest.raises(SystemExit) as exc:
            main(["session", "show", "--id", sid, "--stage", "sideways"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_replay_rebuilds_the_answer_from_the_log(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        walk_demo(capsys, tmp_path, sid)
        code, first, _ = run(capsys, "session", "replay", "--id", sid)
        assert code == 0
        _, again, _ = run(capsys, "session", "replay", "--id", sid)
        _, shown, _ = run(capsys, "session", "show", "--id", sid, "--stage", "generation")
        assert first == again
        assert first == shown
        answer = json.loads(first)
        assert {s["section_id"] for s in answer["sections"]} >= {"s_Q1", "s_Q2", "s_Q3"}


class TestAgent:
    def test_learn_then_suggest_then_prompt(self, env, tmp_path, capsys):
        author = open_session(capsys, sid="ses_cli_author")
        walk_demo(capsys, tmp_path, author)

        code, out, _ = run(capsys, "agent", "learn", "--user", DEMO_USER_ID)
        assert code == 0
        profile = json.loads(out)
        assert profile["user_id"] == DEMO_USER_ID
        prefs = {(p["dimension"], p["value"]): p["confidence"] for p in profile["preferences"]}
        assert prefs[("trusted_domain", "sigir.org")] == pytest.approx((1 + 1) / (1 + 2))
        assert (env / "profiles" / DEMO_USER_ID).exists()

        fresh = open_session(capsys, sid="ses_cli_fresh")
        code, out, _ = run(capsys, "agent", "suggest", "--session", fresh, "--stage", "retrieval")
        assert code == 0
        proposals = [json.loads(line) for line in out.splitlines()]
        assert proposals, "learned trusted domain should produce a proposal"
        action = proposals[0]["event"]["action"]
        assert action["kind"] == "set_filter"
        assert action["filter"]["domain_allow"] == ["sigir.org"]
        assert proposals[0]["event"]["actor"] == "shadow_agent"

        code, out, _ = run(capsys, "agent", "prompt", "--stage", "retrieval", "--session", fresh)
        assert code == 0
        assert out.startswith("You are simulating a user who wants to refine a retrieval & ranking process")
        assert "Initial Retrieved Results" in out
        assert "trusted_domain=sigir.org" in out

    def test_learn_sees_only_that_users_logs(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        walk_demo(capsys, tmp_path, sid)
        code, out, _ = run(capsys, "agent", "learn", "--user", "u_somebody_else")
        assert code == 0
        assert json.loads(out)["preferences"] == []


class TestCompile:
    def test_compile_writes_a_batch_under_the_data_dir(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        walk_demo(capsys, tmp_path, sid)
        code, out, _ = run(capsys, "compile", "--from", "2025-03-15", "--to", "2025-03-16")
        assert code == 0
        manifest = json.loads(out)
        assert manifest["counts"] == {"decomposition": 1, "retrieval": 4, "generation": 2}
        assert manifest["accepted_count"] == 1
        batch_dir = env / "batches" / "2025-03-15"
        for name in ("decomposition.samples", "retrieval.samples", "generation.samples",
                     "accepted.sidecar", "manifest"):
            assert (batch_dir / name).exists(), name

    def test_compile_honors_out_and_logs_overrides(self, env, tmp_path, capsys):
        sid = open_session(capsys)
        walk_demo(capsys, tmp_path, sid)
        out_dir = tmp_path / "elsewhere"
        code, out, _ = run(capsys, "compile", "--from", "2025-03-15", "--to", "2025-03-16",
                           "--logs", str(env / "sessions"), "--out", str(out_dir))
        assert code == 0
        assert (out_dir / "2025-03-15" / "manifest").exists()
        code, out2, _ = run(capsys, "compile", "--from", "2025-03-15", "--to", "2025-03-16",
                            "--logs", str(tmp_path / "no-such-dir"), "--out", str(out_dir))
        assert code == 0
        assert json.loads(out2)["counts"] == {"decomposition": 0, "retrieval": 0, "generation": 0}

    def test_reversed_window_is_a_usage_error(self, env, capsys):
        code, _, err = run(capsys, "compile", "--from", "2025-03-16", "--to", "2025-03-15")
        assert code == 2
        assert "error:" in err


class TestStore:
    def test_package_match_apply_round_trip(self, env, tmp_path, capsys):
        author = open_session(capsys, sid="ses_cli_author")
        walk_demo(capsys, tmp_path, author)

        code, out, _ = run(capsys, "store", "package", "--session", author,
                           "--title", "Conference trip planning cleanup",
                           "--price", "5", "--publish")
        assert code == 0
        template = json.loads(out)
        assert template["template_id"] == "tpl_339745da26f3"
        assert len(template["steps"]) == 8
        assert (env / "store" / "templates" / template["template_id"]).exists()

        code, out, _ = run(capsys, "store", "match", "--query", "Plan a trip to attend SIGIR 2026")
        assert code == 0
        hits = [json.loads(line) for line in out.splitlines()]
        assert [h["template_id"] for h in hits] == [template["template_id"]]
        assert hits[0]["match_score"] == 0.75

        code, out, _ = run(capsys, "store", "match", "--query", "soup recipes")
        assert code == 0 and out == ""

        fresh = open_session(capsys, sid="ses_cli_fresh")
        code, out, _ = run(capsys, "store", "apply",
                           "--template", template["template_id"], "--session", fresh)
        assert code == 0
        report = json.loads(out)
        assert report["log_offset"] == 12
        assert [row["status"] for row in report["report"]] == ["applied"] * 8

        _, authored, _ = run(capsys, "session", "show", "--id", author, "--stage", "generation")
        _, replayed, _ = run(capsys, "session", "show", "--id", fresh, "--stage", "generation")
        assert replayed == authored

    def test_packaging_an_unrated_session_needs_the_flag(self, env, capsys):
        sid = open_session(capsys)
        code, _, err = run(capsys, "store", "package", "--session", sid, "--title", "nothing here")
        assert code == 1
        assert "error:" in err

    def test_applying_an_unknown_template_fails_cleanly(self, env, capsys):
        sid = open_session(capsys)
        code, _, err = run(capsys, "store", "apply", "--template", "tpl_missing", "--session", sid)
        assert code == 1
        assert "error:" in err


class TestConfig:
    def test_env_config_shapes_the_pipeline(self, env, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "pipeline.conf"
        cfg.write_text("# narrow retrieval\nretrieval.k = 2\n", encoding="utf-8")
        monkeypatch.setenv("NEXT_SEARCH_CONFIG", str(cfg))
        sid = open_session(capsys, sid="ses_cli_narrow")
        code, out, _ = run(capsys, "session", "show", "--id", sid, "--stage", "retrieval")
        assert code == 0
        evidence = json.loads(out)
        lengths = [len(rl["entries"]) for rl in evidence["per_subquery"].values()]
        assert lengths and all(n <= 2 for n in lengths)

    def test_config_flag_beats_the_env_var_at_open_time(self, env, tmp_path, capsys, monkeypatch):
        wide = tmp_path / "wide.conf"
        wide.write_text("retrieval.k = 5\n", encoding="utf-8")
        narrow = tmp_path / "narrow.conf"
        narrow.write_text("retrieval.k = 1\n", encoding="utf-8")
        monkeypatch.setenv("NEXT_SEARCH_CONFIG", str(wide))
        code, out, err = run(capsys, "--config", str(narrow),
                             "session", "open", "--query", QUERY, "--session-id", "ses_cli_one")
        assert code == 0, err
        code, out, _ = run(capsys, "session", "show", "--id", "ses_cli_one", "--stage", "retrieval")
        assert code == 0
        evidence = json.loads(out)
        lengths = [len(rl["entries"]) for rl in evidence["per_subquery"].values()]
        assert lengths and all(n <= 1 for n in lengths)

    def test_malformed_config_is_a_usage_error(self, env, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("retrieval.k = soup\n", encoding="utf-8")
        monkeypatch.setenv("NEXT_SEARCH_CONFIG", str(cfg))
        code, _, err = run(capsys, "session", "open", "--query", QUERY)
        assert code == 2
        assert "bad value" in err
