"""Command-line entry point.

Exit codes: 0 on success, 2 on validation/config/usage errors, 1 on
anything else. State lives under --data-dir (or NEXT_SEARCH_DATA_DIR),
pipeline knobs under --config (or NEXT_SEARCH_CONFIG).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import uuid
from datetime import datetime, timezone
from pathlib import Path

from . import agent
from . import records as rec
from .compiler import Window, compile_batch, export_batch, read_session_logs
from .errors import ConfigError, FeedbackRejected, SearchloopError
from .index import build_index, load_index, read_corpus, save_index
from .model import Stage, UserQuery
from .pipeline import PipelineConfig, PipelineDeps, load_config
from .session import load_log, open_session, replay, save_snapshot, submit_feedback
from .store import FeedbackStore, apply_template, package_template, template_record


def _data_dir(args) -> Path:
    if args.data_dir:
        return Path(args.data_dir)
    return Path(os.environ.get("NEXT_SEARCH_DATA_DIR", "data"))


def _config(args) -> PipelineConfig:
    path = args.config or os.environ.get("NEXT_SEARCH_CONFIG")
    if path:
        return load_config(path)
    return PipelineConfig()


def _deps(args, data_dir: Path) -> PipelineDeps:
    config = _config(args)
    corpus = getattr(args, "corpus", None)
    index_path = data_dir / "index"
    if corpus:
        index = build_index(read_corpus(corpus))
        index_path.parent.mkdir(parents=True, exist_ok=True)
        save_index(index, index_path)
    elif index_path.exists():
        index = load_index(index_path)
    else:
        raise ConfigError(
            f"no index at {index_path}; pass --corpus or run `index build` into that path first"
        )
    return PipelineDeps(index=index, config=config)


def _session_paths(data_dir: Path, session_id: str) -> tuple[Path, Path]:
    sdir = data_dir / "sessions" / session_id
    return sdir / "log", sdir / "snapshot"


def _load_session(args, data_dir: Path):
    deps = _deps(args, data_dir)
    log_path, _ = _session_paths(data_dir, args.id)
    if not log_path.exists():
        raise ConfigError(f"no session log at {log_path}")
    state = replay(load_log(log_path), deps)
    state.log.path = log_path
    return state, deps


def _emit(record: dict) -> None:
    print(rec.canonical_dumps(record))


# -- subcommand bodies


def cmd_index_build(args) -> int:
    index = build_index(read_corpus(args.corpus))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_index(index, args.out)
    _emit(
        {
            "chunks": len(index.chunk_store),
            "terms": len(index.postings),
            "avg_chunk_length": index.stats.avg_chunk_length,
            "out": str(args.out),
        }
    )
    return 0


def cmd_session_open(args) -> int:
    data_dir = _data_dir(args)
    deps = _deps(args, data_dir)
    session_id = args.session_id or "ses_" + uuid.uuid4().hex[:12]
    query = UserQuery(
        query_id="q_" + uuid.uuid4().hex[:12],
        user_id=args.user,
        text=args.query,
        submitted_at=datetime.now(timezone.utc),
    )
    log_path, snap_path = _session_paths(data_dir, session_id)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    state = open_session(query, deps, session_id=session_id, log_path=log_path)
    save_snapshot(state, snap_path)
    print(session_id)
    return 0


def cmd_session_feedback(args) -> int:
    data_dir = _data_dir(args)
    state, deps = _load_session(args, data_dir)
    raw = sys.stdin.read() if args.file == "-" else Path(args.file).read_text(encoding="utf-8")
    body = json.loads(raw)
    body.setdefault("type", "feedback_event")
    body.setdefault("session_id", state.session_id)
    body.setdefault("event_id", "ev_" + uuid.uuid4().hex[:12])
    body.setdefault("occurred_at", rec.format_timestamp(datetime.now(timezone.utc)))
    if body.get("seq") is None:
        body["seq"] = state.log_offset + 1
    event = rec.parse_feedback_event(body)
    submit_feedback(state, event, deps)
    _, snap_path = _session_paths(data_dir, args.id)
    save_snapshot(state, snap_path)
    _emit(
        {
            "applied_seq": event.seq,
            "stage_status": {s.value: st.value for s, st in state.stage_status.items()},
        }
    )
    return 0


def cmd_session_replay(args) -> int:
    data_dir = _data_dir(args)
    state, _ = _load_session(args, data_dir)
    _emit(state.stage_output(Stage.GENERATION))
    return 0


def cmd_session_show(args) -> int:
    data_dir = _data_dir(args)
    state, _ = _load_session(args, data_dir)
    if args.stage:
        _emit(state.stage_output(Stage(args.stage)))
    else:
        _emit(state.canonical_record())
    return 0


def cmd_agent_learn(args) -> int:
    data_dir = _data_dir(args)
    logs_dir = Path(args.logs) if args.logs else data_dir / "sessions"
    logs = [
        records
        for records in read_session_logs(logs_dir)
        if records and records[0].get("query", {}).get("user_id") == args.user
    ]
    profile_path = data_dir / "profiles" / args.user
    profile = agent.load_profile(profile_path, args.user)
    profile = agent.update_profile(profile, logs)
    profile_path.parent.mkdir(parents=True, exist_ok=True)
    agent.save_profile(profile_path, profile)
    _emit(rec.user_profile_record(profile))
    return 0


def cmd_agent_suggest(args) -> int:
    data_dir = _data_dir(args)
    ns = argparse.Namespace(**vars(args), id=args.session)
    state, _ = _load_session(ns, data_dir)
    profile = agent.load_profile(data_dir / "profiles" / state.query.user_id, state.query.user_id)
    proposals = agent.suggest_feedback(Stage(args.stage), state, profile)
    for proposal in proposals:
        _emit(agent.proposal_record(proposal))
    return 0


def cmd_agent_prompt(args) -> int:
    data_dir = _data_dir(args)
    ns = argparse.Namespace(**vars(args), id=args.session)
    state, _ = _load_session(ns, data_dir)
    profile = agent.load_profile(data_dir / "profiles" / state.query.user_id, state.query.user_id)
    stage = Stage(args.stage)
    print(agent.render_prompt(stage, profile, state.query.text, state.stage_output(stage)))
    return 0


def cmd_compile(args) -> int:
    data_dir = _data_dir(args)
    deps = _deps(args, data_dir)
    logs_dir = Path(args.logs) if args.logs else data_dir / "sessions"
    out_dir = Path(args.out) if args.out else data_dir / "batches"
    window = Window(rec.parse_date(args.start), rec.parse_date(args.end))
    batch = compile_batch(read_session_logs(logs_dir), window, deps)
    manifest = export_batch(batch, window, out_dir)
    _emit(manifest)
    return 0


def cmd_store_package(args) -> int:
    data_dir = _data_dir(args)
    ns = argparse.Namespace(**vars(args), id=args.session)
    state, deps = _load_session(ns, data_dir)
    template = package_template(
        list(state.log.records),
        deps,
        title=args.title,
        price_credits=args.price,
        publish=args.publish,
    )
    store = FeedbackStore(data_dir / "store")
    store.add_template(template)
    _emit(template_record(template))
    return 0


def cmd_store_match(args) -> int:
    data_dir = _data_dir(args)
    store = FeedbackStore(data_dir / "store")
    for template, score in store.match(args.query):
        _emit(dict(template_record(template), match_score=round(score, 6)))
    return 0


def cmd_store_apply(args) -> int:
    data_dir = _data_dir(args)
    ns = argparse.Namespace(**vars(args), id=args.session)
    state, deps = _load_session(ns, data_dir)
    store = FeedbackStore(data_dir / "store")
    template = store.get_template(args.template)
    state, report = apply_template(template, state, deps)
    _, snap_path = _session_paths(data_dir, args.session)
    save_snapshot(state, snap_path)
    _emit({"template_id": template.template_id, "report": report, "log_offset": state.log_offset})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import GatewayService, create_app

    data_dir = _data_dir(args)
    deps = _deps(args, data_dir)
    service = GatewayService(data_dir, deps)
    uvicorn.run(create_app(service), host=args.host, port=args.port, log_level="info")
    return 0


# -- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="searchloop",
        description="Event-sourced generative search sessions with stage-level feedback.",
    )
    parser.add_argument("--data-dir", help="state directory (default: $NEXT_SEARCH_DATA_DIR or ./data)")
    parser.add_argument("--config", help="pipeline config file (default: $NEXT_SEARCH_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="corpus indexing").add_subparsers(dest="sub", required=True)
    p = p_index.add_parser("build", help="build an index from a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index_build)

    p_session = sub.add_parser("session", help="session lifecycle").add_subparsers(dest="sub", required=True)
    p = p_session.add_parser("open", help="open a session and run the bootstrap pipeline")
    p.add_argument("--query", required=True)
    p.add_argument("--user", default="anonymous")
    p.add_argument("--session-id")
    p.add_argument("--corpus", help="build the index from this corpus before opening")
    p.set_defaults(func=cmd_session_open)
    p = p_session.add_parser("feedback", help="apply one feedback event from a JSON file")
    p.add_argument("--id", required=True)
    p.add_argument("--file", required=True, help="event record path, or - for stdin")
    p.set_defaults(func=cmd_session_feedback)
    p = p_session.add_parser("replay", help="rebuild state from the log and print the answer")
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_session_replay)
    p = p_session.add_parser("show", help="print session state or one stage output")
    p.add_argument("--id", required=True)
    p.add_argument("--stage", choices=[s.value for s in Stage if s is not Stage.FINAL])
    p.set_defaults(func=cmd_session_show)

    p_agent = sub.add_parser("agent", help="shadow-user agent").add_subparsers(dest="sub", required=True)
    p = p_agent.add_parser("learn", help="update a user profile from their session logs")
    p.add_argument("--user", required=True)
    p.add_argument("--logs", help="sessions directory (default: <data-dir>/sessions)")
    p.set_defaults(func=cmd_agent_learn)
    p = p_agent.add_parser("suggest", help="print feedback proposals for a stage")
    p.add_argument("--session", required=True)
    p.add_argument("--stage", required=True, choices=[s.value for s in Stage if s is not Stage.FINAL])
    p.set_defaults(func=cmd_agent_suggest)
    p = p_agent.add_parser("prompt", help="print the prompt an LLM proposer would receive")
    p.add_argument("--stage", required=True, choices=[s.value for s in Stage if s is not Stage.FINAL])
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_agent_prompt)

    p = sub.add_parser("compile", help="compile session logs into a training batch")
    p.add_argument("--from", dest="start", required=True, help="window start date, inclusive (YYYY-MM-DD)")
    p.add_argument("--to", dest="end", required=True, help="window end date, exclusive (YYYY-MM-DD)")
    p.add_argument("--logs", help="sessions directory (default: <data-dir>/sessions)")
    p.add_argument("--out", help="batch output directory (default: <data-dir>/batches)")
    p.set_defaults(func=cmd_compile)

    p_store = sub.add_parser("store", help="debug-template store").add_subparsers(dest="sub", required=True)
    p = p_store.add_parser("package", help="package a session's feedback into a template")
    p.add_argument("--session", required=True)
    p.add_argument("--title", required=True)
    p.add_argument("--price", type=int, default=0)
    p.add_argument("--publish", action="store_true", help="package even without a like rating")
    p.set_defaults(func=cmd_store_package)
    p = p_store.add_parser("match", help="rank stored templates against a query")
    p.add_argument("--query", required=True)
    p.set_defaults(func=cmd_store_match)
    p = p_store.add_parser("apply", help="replay a template onto an open session")
    p.add_argument("--template", required=True)
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_store_apply)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--corpus", help="build the index from this corpus before serving")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FeedbackRejected, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SearchloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
