"""HTTP gateway: sessions, feedback, proposals, store, compilation.

Every state change goes through the session runtime's validate/append
path; the service only adds persistence, locking, and response
envelopes. Responses carry either a payload or an error, never both.
"""

from __future__ import annotations

import asyncio
import threading
import uuid
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from . import agent
from . import records as rec
from .agent import Proposal, proposal_record, suggest_feedback, confirm_proposal
from .compiler import Window, compile_batch, export_batch, read_session_logs
from .errors import (
    AllStepsUnresolvable,
    ExpiredProposal,
    FeedbackRejected,
    InsufficientCredits,
    SearchloopError,
    StageExecutionError,
    UnknownTemplate,
    Unpublishable,
)
from .model import Stage, UserQuery
from .pipeline import DEFAULT_STYLE, PipelineDeps
from .session import SessionState, load_log, open_session, replay, save_snapshot, submit_feedback
from .store import FeedbackStore, UsageKind, apply_template, package_template, template_record


class UnknownSession(SearchloopError):
    pass


class UnknownProposal(SearchloopError):
    pass


class GatewayService:
    """Owns live sessions, their locks, the store, and the data directory."""

    def __init__(self, data_dir: str | Path, deps: PipelineDeps):
        self.data_dir = Path(data_dir)
        self.deps = deps
        self.sessions: dict[str, SessionState] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.proposals: dict[str, dict[str, Proposal]] = {}
        self.store = FeedbackStore(self.data_dir / "store")

    # -- paths

    def session_dir(self, session_id: str) -> Path:
        return self.data_dir / "sessions" / session_id

    def _profile_path(self, user_id: str) -> Path:
        return self.data_dir / "profiles" / user_id

    def _lock(self, session_id: str) -> threading.Lock:
        return self.locks.setdefault(session_id, threading.Lock())

    def _persist(self, state: SessionState) -> None:
        save_snapshot(state, self.session_dir(state.session_id) / "snapshot")

    # -- sessions

    def open(self, query_text: str, user_id: str = "anonymous", style=None) -> SessionState:
        session_id = "ses_" + uuid.uuid4().hex[:12]
        query = UserQuery(
            query_id="q_" + uuid.uuid4().hex[:12],
            user_id=user_id,
            text=query_text,
            submitted_at=datetime.now(timezone.utc),
        )
        sdir = self.session_dir(session_id)
        sdir.mkdir(parents=True, exist_ok=True)
        state = open_session(
            query,
            self.deps,
            session_id=session_id,
            log_path=sdir / "log",
            style=style if style is not None else DEFAULT_STYLE,
        )
        self.sessions[session_id] = state
        self._lock(session_id)
        self._persist(state)
        return state

    def get(self, session_id: str) -> SessionState:
        if session_id in self.sessions:
            return self.sessions[session_id]
        log_path = self.session_dir(session_id) / "log"
        if not log_path.exists():
            raise UnknownSession(session_id)
        with self._lock(session_id):
            if session_id not in self.sessions:
                state = replay(load_log(log_path), self.deps)
                state.log.path = log_path
                self.sessions[session_id] = state
        return self.sessions[session_id]

    def feedback(self, session_id: str, event_record: dict) -> SessionState:
        state = self.get(session_id)
        with self._lock(session_id):
            body = dict(event_record)
            body.setdefault("type", "feedback_event")
            body.setdefault("session_id", session_id)
            body.setdefault("event_id", "ev_" + uuid.uuid4().hex[:12])
            body.setdefault("occurred_at", rec.format_timestamp(datetime.now(timezone.utc)))
            if body["session_id"] != session_id:
                raise FeedbackRejected("session_mismatch", "event addressed to a different session")
            try:
                event = rec.parse_feedback_event(body)
            except KeyError as exc:
                raise ValueError(f"event record is missing field {exc}") from exc
            submit_feedback(state, event, self.deps)
            self._persist(state)
        return state

    # -- shadow agent

    def propose(self, session_id: str, stage: Stage) -> list[Proposal]:
        state = self.get(session_id)
        profile = agent.load_profile(self._profile_path(state.query.user_id), state.query.user_id)
        proposals = suggest_feedback(stage, state, profile)
        shelf = self.proposals.setdefault(session_id, {})
        for p in proposals:
            shelf.setdefault(p.proposal_id, p)
        return [shelf[p.proposal_id] for p in proposals]

    def confirm(self, session_id: str, proposal_id: str, decision: str) -> tuple[SessionState, Proposal]:
        state = self.get(session_id)
        shelf = self.proposals.get(session_id, {})
        if proposal_id not in shelf:
            raise UnknownProposal(proposal_id)
        with self._lock(session_id):
            state, resolved = confirm_proposal(state, shelf[proposal_id], decision, self.deps)
            shelf[proposal_id] = resolved
            self._persist(state)
        return state, resolved

    # -- store

    def package(self, session_id: str, title: str, price_credits: int = 0, publish: bool = False):
        state = self.get(session_id)
        template = package_template(
            list(state.log.records), self.deps, title=title,
            price_credits=price_credits, publish=publish,
        )
        self.store.add_template(template)
        return template

    def apply(self, template_id: str, session_id: str) -> tuple[SessionState, list[dict]]:
        template = self.store.get_template(template_id)
        state = self.get(session_id)
        with self._lock(session_id):
            state, report = apply_template(template, state, self.deps)
            self._persist(state)
        return state, report

    # -- compilation

    def compile(self, start: str, end: str) -> dict:
        window = Window(rec.parse_date(start), rec.parse_date(end))
        logs = read_session_logs(self.data_dir / "sessions")
        batch = compile_batch(logs, window, self.deps)
        return export_batch(batch, window, self.data_dir / "batches")

    def flush(self) -> None:
        for state in self.sessions.values():
            self._persist(state)


# ---------------------------------------------------------------------------
# FastAPI wiring


def _ok(payload: dict, status: int = 200) -> JSONResponse:
    return JSONResponse({"request_id": uuid.uuid4().hex, "payload": payload}, status_code=status)


def _err(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        {"request_id": uuid.uuid4().hex, "error": {"code": code, "message": message}},
        status_code=status,
    )


def _session_payload(state: SessionState) -> dict:
    return {"session": state.canonical_record()}


def create_app(service: GatewayService) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        service.flush()

    app = FastAPI(title="searchloop gateway", docs_url=None, redoc_url=None, lifespan=lifespan)

    @app.exception_handler(UnknownSession)
    async def _unknown_session(_, exc):
        return _err(404, "unknown_session", str(exc))

    @app.exception_handler(UnknownProposal)
    async def _unknown_proposal(_, exc):
        return _err(404, "unknown_proposal", str(exc))

    @app.exception_handler(UnknownTemplate)
    async def _unknown_template(_, exc):
        return _err(404, "unknown_template", str(exc))

    @app.exception_handler(FeedbackRejected)
    async def _rejected(_, exc):
        status = 409 if exc.code == "stale_sequence" else 400
        return _err(status, exc.code, exc.detail or exc.code)

    @app.exception_handler(ExpiredProposal)
    async def _expired(_, exc):
        return _err(409, "expired_proposal", str(exc))

    @app.exception_handler(Unpublishable)
    async def _unpublishable(_, exc):
        return _err(400, "unpublishable", str(exc))

    @app.exception_handler(AllStepsUnresolvable)
    async def _unresolvable(_, exc):
        return _err(409, "all_steps_unresolvable", str(exc))

    @app.exception_handler(InsufficientCredits)
    async def _poor(_, exc):
        return _err(409, "insufficient_credits", str(exc))

    @app.exception_handler(StageExecutionError)
    async def _stage_failed(_, exc):
        return _err(500, "stage_execution_error", str(exc))

    @app.exception_handler(ValueError)
    async def _bad_value(_, exc):
        return _err(400, "invalid_request", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _bad_request(_, exc):
        return _err(400, "invalid_request", "; ".join(e["msg"] for e in exc.errors()) or "invalid request")

    # -- sessions

    @app.post("/sessions")
    async def open_session_ep(body: dict):
        if not isinstance(body.get("query_text"), str) or not body["query_text"].strip():
            return _err(400, "invalid_request", "query_text is required")
        style = rec.parse_style(body["style"]) if "style" in body else None
        state = await asyncio.to_thread(
            service.open, body["query_text"], body.get("user_id", "anonymous"), style
        )
        return _ok(_session_payload(state), status=201)

    @app.get("/sessions/{session_id}")
    async def get_session_ep(session_id: str):
        return _ok(_session_payload(service.get(session_id)))

    @app.get("/sessions/{session_id}/stage/{stage}")
    async def get_stage_ep(session_id: str, stage: str):
        state = service.get(session_id)
        try:
            which = Stage(stage)
        except ValueError:
            return _err(404, "unknown_stage", f"no stage named {stage!r}")
        if which is Stage.FINAL:
            return _err(404, "unknown_stage", "final is not an inspectable stage")
        return _ok(
            {
                "stage": which.value,
                "status": state.stage_status[which].value,
                "output": state.stage_output(which),
            }
        )

    @app.post("/sessions/{session_id}/feedback")
    async def feedback_ep(session_id: str, body: dict):
        state = await asyncio.to_thread(service.feedback, session_id, body)
        applied = state.log.records[-1]
        return _ok({"applied_seq": applied["seq"], "session": state.canonical_record()})

    @app.get("/sessions/{session_id}/proposals")
    async def proposals_ep(session_id: str, stage: str):
        try:
            which = Stage(stage)
        except ValueError:
            return _err(400, "invalid_request", f"no stage named {stage!r}")
        proposals = await asyncio.to_thread(service.propose, session_id, which)
        return _ok({"proposals": [proposal_record(p) for p in proposals]})

    @app.post("/sessions/{session_id}/proposals/{proposal_id}/confirm")
    async def confirm_ep(session_id: str, proposal_id: str, body: dict):
        decision = body.get("decision")
        if decision not in ("accept", "reject"):
            return _err(400, "invalid_request", "decision must be accept or reject")
        state, proposal = await asyncio.to_thread(service.confirm, session_id, proposal_id, decision)
        return _ok({"proposal": proposal_record(proposal), "session": state.canonical_record()})

    # -- event feed: server push with a polling fallback

    @app.get("/sessions/{session_id}/events")
    async def events_ep(session_id: str, request: Request, since: int = 0):
        state = service.get(session_id)
        if "text/event-stream" not in request.headers.get("accept", ""):
            return _ok(
                {
                    "events": list(state.log.records[since:]),
                    "log_offset": state.log_offset,
                }
            )

        async def stream():
            cursor = since
            while not await request.is_disconnected():
                records = state.log.records
                while cursor < len(records):
                    record = records[cursor]
                    cursor += 1
                    yield f"id: {record['seq']}\ndata: {rec.canonical_dumps(record)}\n\n"
                await asyncio.sleep(0.2)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- store

    @app.get("/store/templates")
    async def store_list_ep(query: str | None = None):
        if query is None:
            rows = [template_record(t) for _, t in sorted(service.store.templates.items())]
            return _ok({"templates": rows})
        hits = service.store.match(query)
        return _ok(
            {
                "templates": [
                    dict(template_record(t), match_score=round(score, 6)) for t, score in hits
                ]
            }
        )

    @app.get("/store/templates/{template_id}")
    async def store_get_ep(template_id: str):
        return _ok({"template": template_record(service.store.get_template(template_id))})

    @app.post("/store/templates")
    async def store_package_ep(body: dict):
        for field in ("session_id", "title"):
            if not isinstance(body.get(field), str) or not body[field]:
                return _err(400, "invalid_request", f"{field} is required")
        template = await asyncio.to_thread(
            service.package,
            body["session_id"],
            body["title"],
            int(body.get("price_credits", 0)),
            bool(body.get("publish", False)),
        )
        return _ok({"template": template_record(template)}, status=201)

    @app.post("/store/templates/{template_id}/apply")
    async def store_apply_ep(template_id: str, body: dict):
        session_id = body.get("session_id")
        if not isinstance(session_id, str) or not session_id:
            return _err(400, "invalid_request", "session_id is required")
        state, report = await asyncio.to_thread(service.apply, template_id, session_id)
        return _ok({"report": report, "session": state.canonical_record()})

    @app.post("/store/templates/{template_id}/usage")
    async def store_usage_ep(template_id: str, body: dict):
        try:
            kind = UsageKind(body.get("kind", ""))
        except ValueError:
            return _err(400, "invalid_request", f"unknown usage kind {body.get('kind')!r}")
        payer = body.get("payer_id", "anonymous")
        entry = service.store.record_usage(template_id, kind, payer)
        return _ok(
            {
                "entry": {
                    "template_id": entry.template_id,
                    "payer_id": entry.payer_id,
                    "kind": entry.kind.value,
                    "credits": entry.credits,
                    "at": rec.format_timestamp(entry.at),
                },
                "balances": dict(sorted(service.store.balances.items())),
            }
        )

    @app.get("/store/balances")
    async def store_balances_ep():
        return _ok({"balances": dict(sorted(service.store.balances.items()))})

    @app.post("/store/grants")
    async def store_grant_ep(body: dict):
        user_id = body.get("user_id")
        credits = body.get("credits")
        if not isinstance(user_id, str) or not isinstance(credits, int):
            return _err(400, "invalid_request", "user_id and integer credits are required")
        service.store.grant(user_id, credits)
        return _ok({"balances": dict(sorted(service.store.balances.items()))})

    # -- offline compilation

    @app.post("/compile")
    async def compile_ep(body: dict):
        for field in ("from", "to"):
            if not isinstance(body.get(field), str):
                return _err(400, "invalid_request", f"{field} date is required (YYYY-MM-DD)")
        manifest = await asyncio.to_thread(service.compile, body["from"], body["to"])
        return _ok({"manifest": manifest})

    return app
