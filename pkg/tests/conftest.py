from __future__ import annotations

from pathlib import Path

import pytest

from searchloop import records as rec
from searchloop.demo import DEMO_SESSION_ID, demo_events, demo_query
from searchloop.index import build_index, read_corpus
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.session import open_session, submit_feedback

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_chunks():
    return read_corpus(FIXTURES / "corpus.records")


@pytest.fixture(scope="session")
def deps(corpus_chunks) -> PipelineDeps:
    return PipelineDeps(index=build_index(corpus_chunks), config=PipelineConfig())


@pytest.fixture(scope="session")
def golden_records() -> list[dict]:
    return list(rec.read_records(FIXTURES / "golden_log.records"))


@pytest.fixture(scope="session")
def golden_state_record() -> dict:
    return next(iter(rec.read_records(FIXTURES / "golden_state.records")))


@pytest.fixture
def golden_session(deps):
    """The golden session rebuilt live: bootstrap plus the eight events."""
    state = open_session(demo_query(), deps, session_id=DEMO_SESSION_ID)
    for event in demo_events(DEMO_SESSION_ID):
        submit_feedback(state, event, deps)
    return state
