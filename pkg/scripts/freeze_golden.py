"""Regenerate the committed golden fixtures under tests/fixtures/.

Run after an intentional behavior change, then review the diff like any
other code change. Tests compare live runs against these bytes; they
never call this script.
"""

from __future__ import annotations

import sys
from datetime import date
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from searchloop import records as rec
from searchloop.compiler import Window, compile_batch, export_batch
from searchloop.demo import DEMO_CHUNKS, DEMO_SESSION_ID, demo_events, demo_index, demo_query
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.session import open_session, snapshot_record, submit_feedback
from searchloop.store import package_template, template_record

FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN_TEMPLATE_CREATED_AT = demo_events(DEMO_SESSION_ID)[-1].occurred_at


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    deps = PipelineDeps(index=demo_index(), config=PipelineConfig())

    rec.write_records(FIXTURES / "corpus.records", [rec.document_chunk_record(c) for c in DEMO_CHUNKS])

    state = open_session(demo_query(), deps, session_id=DEMO_SESSION_ID)
    bootstrap_state = snapshot_record(state)
    for event in demo_events(DEMO_SESSION_ID):
        submit_feedback(state, event, deps)

    rec.write_records(FIXTURES / "golden_log.records", state.log.records)
    rec.write_records(FIXTURES / "golden_bootstrap_state.records", [bootstrap_state])
    rec.write_records(FIXTURES / "golden_state.records", [snapshot_record(state)])

    window = Window(date(2025, 3, 15), date(2025, 3, 16))
    batch = compile_batch([state.log.records], window, deps)
    manifest = export_batch(batch, window, FIXTURES / "golden_batch")

    template = package_template(
        state.log.records,
        deps,
        title="Conference trip planning cleanup",
        price_credits=5,
        publish=True,
        created_at=GOLDEN_TEMPLATE_CREATED_AT,
    )
    rec.write_records(FIXTURES / "golden_template.records", [template_record(template)])

    print(f"froze fixtures under {FIXTURES}")
    print(f"  log records:    {len(state.log.records)}")
    print(f"  batch counts:   {manifest['counts']}")
    print(f"  batch hash:     {manifest['content_hash']}")
    print(f"  template id:    {template.template_id}")


if __name__ == "__main__":
    main()
