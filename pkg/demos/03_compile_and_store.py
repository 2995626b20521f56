"""Compile a day of session logs into training samples, then resell the fix.

The offline compiler folds each log, extracts per-stage preference
pairs (chosen vs rejected), reconciles every feedback event into
exactly one sample or sidecar row, and exports a manifest whose content
hash is stable across re-exports. The same session then becomes a store
template: a positional script of its edits that replays onto a fresh
session and earns the author credits when someone buys it.

Run from the repo root:

    python3 demos/03_compile_and_store.py
"""

from __future__ import annotations

import tempfile
from datetime import date
from pathlib import Path

from searchloop.compiler import Window, compile_batch, export_batch
from searchloop.demo import demo_events, demo_index, demo_query
from searchloop.pipeline import PipelineConfig, PipelineDeps
from searchloop.session import open_session, submit_feedback
from searchloop.store import FeedbackStore, UsageKind, apply_template, package_template


def main() -> None:
    deps = PipelineDeps(index=demo_index(), config=PipelineConfig())
    author = open_session(demo_query(), deps, session_id="ses_demo_author")
    for event in demo_events("ses_demo_author"):
        submit_feedback(author, event, deps)
    log = list(author.log.records)

    window = Window(date(2025, 3, 15), date(2025, 3, 16))
    batch = compile_batch([log], window, deps)
    print(f"compiled window {window.start} to {window.end}: counts={batch.counts()}")

    pair = batch.decomposition[0]
    print("decomposition pair (one line each):")
    print(f"  rejected: {pair['negative_plan'][0]!r} ...")
    print(f"  chosen:   {pair['positive_plan'][0]!r} ...")
    for sample in batch.retrieval:
        if sample["sub_id"] == "Q2":
            print(f"retrieval sample for Q2: positives={sample['positive_chunks']} "
                  f"negatives={sample['negative_chunks']}")
    for row in batch.accepted:
        print(f"sidecar: {row['kind']} from events {row['event_ids']}")
    print()

    with tempfile.TemporaryDirectory() as tmp:
        first = export_batch(batch, window, Path(tmp) / "a")
        second = export_batch(compile_batch([log], window, deps), window, Path(tmp) / "b")
        print(f"export hash {first['content_hash'][:16]}..., "
              f"re-export identical: {first == second}")
        print()

        template = package_template(
            log, deps, title="Conference trip planning cleanup",
            price_credits=5, publish=True,
        )
        store = FeedbackStore(Path(tmp) / "store")
        store.add_template(template)
        print(f"packaged {template.template_id}: {len(template.steps)} positional steps, "
              f"price {template.price_credits} credits")

        hits = store.match("Plan a trip to attend SIGIR 2026")
        for matched, score in hits:
            print(f"match against a 2026 paraphrase: {matched.template_id} score {score:.2f}")

        fresh = open_session(demo_query(), deps, session_id="ses_demo_buyer")
        fresh, report = apply_template(template, fresh, deps)
        applied = sum(1 for row in report if row["status"] == "applied")
        print(f"applied to a fresh session: {applied}/{len(report)} steps, "
              f"final state matches author: {fresh.content_bytes() == author.content_bytes()}")

        store.grant("u_buyer", 10)
        store.record_usage(template.template_id, UsageKind.PURCHASE, "u_buyer")
        balances = {k: v for k, v in sorted(store.balances.items()) if k != "__system__"}
        print(f"after a 5-credit purchase: balances={balances}")


if __name__ == "__main__":
    main()
