"""The bundled demo scenario: a conference-trip query over a small corpus.

The corpus is eight passage chunks about SIGIR 2025 logistics, authored
so that BM25 ranks a misleading news chunk (D1, wrong venue and dates)
above the organizer's announcement (D2) for the dates sub-query. The
canned event sequence then walks every stage of the feedback loop:
pruning and extending the plan, cleaning up the ranking, restricting
sources, and correcting the answer. Tests and the demos/ scripts both
build on it, and the committed fixture files are frozen from it.
"""

from __future__ import annotations

from datetime import date, datetime, timezone

from . import actions as act
from .index import Index, build_index
from .model import (
    Actor,
    DocumentChunk,
    RelevanceLabel,
    RetrievalFilter,
    Stage,
    UserQuery,
)

DEMO_USER_ID = "u_demo"
DEMO_QUERY_ID = "q_demo_0001"
DEMO_SESSION_ID = "ses_demo_0001"
DEMO_QUERY_TEXT = "Plan a trip to attend SIGIR 2025"

#: Submission instant of the demo query; events follow one minute apart.
DEMO_OPENED_AT = datetime(2025, 3, 15, 9, 59, 0, tzinfo=timezone.utc)
_EVENT_BASE = datetime(2025, 3, 15, 10, 0, 0, tzinfo=timezone.utc)

DEMO_CHUNKS: tuple[DocumentChunk, ...] = (
    DocumentChunk(
        chunk_id="D1",
        doc_id="news-ai-conferences-2025",
        text=(
            "SIGIR 2025 will be held at the University of Padua, Italy, from July 15-19. "
            "The flagship information retrieval conference joins a packed calendar of AI "
            "events this summer, and organizers expect record attendance. Exactly where "
            "the workshop sessions will be held is still being finalized."
        ),
        source_domain="news.example.com",
        published_date=date(2025, 1, 10),
        url="https://news.example.com/ai-conferences-2025",
    ),
    DocumentChunk(
        chunk_id="D2",
        doc_id="sigir2025-venue",
        text=(
            "SIGIR 2025 will be hosted at the Padova Congress Center in Padua, Italy, "
            "from July 13-17. The organizing committee confirmed the dates today and the "
            "full program schedule arrives in May."
        ),
        source_domain="sigir.org",
        published_date=date(2025, 2, 1),
        url="https://sigir.org/sigir2025/venue",
    ),
    DocumentChunk(
        chunk_id="D3",
        doc_id="sigir2023-proceedings",
        text=(
            "Proceedings of SIGIR 2023, which was held in Taipei during July 2023. "
            "Earlier editions of the conference were held in Madrid and in Tokyo, and "
            "the front matter lists where each edition took place."
        ),
        source_domain="dl.acm.org",
        published_date=date(2023, 7, 20),
        url="https://dl.acm.org/doi/proceedings/sigir-2023",
    ),
    DocumentChunk(
        chunk_id="D4",
        doc_id="sigir2025-registration",
        text=(
            "Registration for SIGIR 2025 is now open on the conference site. The "
            "registration process has three steps and the early registration cost is "
            "650 euros for ACM members."
        ),
        source_domain="sigir.org",
        published_date=date(2025, 3, 1),
        url="https://sigir.org/sigir2025/registration",
    ),
    DocumentChunk(
        chunk_id="D5",
        doc_id="travel-padua-hotels",
        text=(
            "The recommended conference hotels include NH Hotel Padova and Best Western "
            "Hotel Biri, with prices starting at 120 euros per night. Both hotels are "
            "within walking distance of the city centre."
        ),
        source_domain="travel.example.com",
        published_date=date(2025, 2, 15),
        url="https://travel.example.com/padua-hotels",
    ),
    DocumentChunk(
        chunk_id="D6",
        doc_id="sigir2025-accommodations",
        text=(
            "Recommended accommodations near the SIGIR 2025 venue: NH Hotel Padova, 120 "
            "euros per night, 10 minutes on foot. Best Western Hotel Biri, 165 euros per "
            "night, 20 minutes. B&B Hotel Padova, 90 euros per night, 10 minutes on "
            "foot. Book early."
        ),
        source_domain="sigir.org",
        published_date=date(2025, 3, 10),
        url="https://sigir.org/sigir2025/accommodations",
    ),
    DocumentChunk(
        chunk_id="D7",
        doc_id="venice-flights",
        text=(
            "Direct flight options from most major European cities to Venice Marco Polo "
            "Airport run daily in July. From the airport, the conference location in "
            "Padua is a 40 minute train ride, and the best budget fares start at 60 euros."
        ),
        source_domain="flights.example.com",
        published_date=date(2025, 1, 20),
        url="https://flights.example.com/venice-summer",
    ),
    DocumentChunk(
        chunk_id="D8",
        doc_id="padua-sights",
        text=(
            "Top sightseeing attractions near the old town include Prato della Valle, "
            "the Scrovegni Chapel, and the botanical garden of the university. Most "
            "attractions are a short walk from the conference venue."
        ),
        source_domain="tourism.example.com",
        published_date=date(2024, 11, 5),
        url="https://tourism.example.com/padua-sights",
    ),
)

#: The text the demo user pastes over the hotels section, mirroring the
#: organizer's accommodation page plus the budget option they found.
HOTEL_EDIT_TEXT = (
    "- NH Hotel Padova (120€/night, 10 min walk)\n"
    "- Best Western Hotel Biri (165€/night, 20 min walk)\n"
    "- B&B Hotel Padova (90€/night, 10 min walk)"
)

CORRECTION_NOTE = "The conference dates and venue are incorrect; verify with the official SIGIR website."


def demo_query() -> UserQuery:
    return UserQuery(
        query_id=DEMO_QUERY_ID,
        user_id=DEMO_USER_ID,
        text=DEMO_QUERY_TEXT,
        submitted_at=DEMO_OPENED_AT,
    )


def demo_index() -> Index:
    return build_index(DEMO_CHUNKS)


def _event(seq: int, stage: Stage, action: act.FeedbackAction, session_id: str = DEMO_SESSION_ID) -> act.FeedbackEvent:
    return act.FeedbackEvent(
        event_id=f"ev{seq:03d}",
        session_id=session_id,
        seq=seq,
        stage=stage,
        actor=Actor.HUMAN,
        occurred_at=_EVENT_BASE.replace(minute=seq - 4),
        action=action,
    )


def demo_events(session_id: str = DEMO_SESSION_ID, start_seq: int = 5) -> tuple[act.FeedbackEvent, ...]:
    """The canned debug walk: three plan edits, three ranking edits, two
    answer edits. Seqs are contiguous from ``start_seq``."""
    steps: tuple[tuple[Stage, act.FeedbackAction], ...] = (
        (Stage.DECOMPOSITION, act.RemoveSubQuery(sub_id="Q4")),
        (
            Stage.DECOMPOSITION,
            act.AddSubQuery(
                text="What is the registration process and cost for SIGIR 2025?",
                insert_position=3,
            ),
        ),
        (Stage.DECOMPOSITION, act.ReorderSubQueries(order=("Q2", "Q1", "Q3", "Q5"))),
        (Stage.RETRIEVAL, act.AnnotateRelevance(sub_id="Q2", chunk_id="D3", label=RelevanceLabel.IRRELEVANT)),
        (Stage.RETRIEVAL, act.RerankEvidence(sub_id="Q2", chunk_id="D2", new_rank=1)),
        (Stage.RETRIEVAL, act.SetFilter(filter=RetrievalFilter(domain_allow=("sigir.org",)))),
        (Stage.GENERATION, act.CorrectFact(section_id="s_Q2", note=CORRECTION_NOTE)),
        (Stage.GENERATION, act.EditSection(section_id="s_Q3", new_text=HOTEL_EDIT_TEXT)),
    )
    return tuple(
        _event(start_seq + i, stage, action, session_id) for i, (stage, action) in enumerate(steps)
    )
