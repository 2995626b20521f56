"""Retrieval: tokenizer, filters, ranking against the exhaustive reference."""

from __future__ import annotations

from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchloop import index as ix
from searchloop.model import DocumentChunk, RetrievalFilter, SubQuery

from reference import ref_chunk_passes, ref_search, ref_tokenize

WORDS = st.lists(
    st.sampled_from("apple banana cherry durian elder fig grape haze iris jade".split()),
    min_size=0,
    max_size=12,
)


def _chunk(cid: str, text: str, domain: str = "example.com", published: date | None = date(2025, 1, 1)) -> DocumentChunk:
    return DocumentChunk(chunk_id=cid, doc_id=f"doc_{cid}", text=text, source_domain=domain, published_date=published)


# ---------------------------------------------------------------------------
# tokenizer


def test_tokenizer_lowercases_and_splits_on_non_alnum():
    assert ix.tokenize("SIGIR 2025, Padua (Italy)!") == ["sigir", "2025", "padua", "italy"]


def test_tokenizer_empty_and_punctuation_only():
    assert ix.tokenize("") == []
    assert ix.tokenize("--- ...") == []


@given(st.text(max_size=200))
@settings(max_examples=300)
def test_tokenizer_matches_reference_and_is_idempotent(text):
    tokens = ix.tokenize(text)
    assert tokens == ref_tokenize(text)
    assert ix.tokenize(" ".join(tokens)) == tokens


# ---------------------------------------------------------------------------
# filter semantics


def test_domain_matches_exact_and_suffix_only():
    assert ix.domain_matches("sigir.org", "sigir.org")
    assert ix.domain_matches("www.sigir.org", "sigir.org")
    assert not ix.domain_matches("notsigir.org", "sigir.org")
    assert not ix.domain_matches("sigir.org.evil.com", "sigir.org")


def test_date_window_bounds_are_inclusive():
    chunk = _chunk("D1", "x", published=date(2025, 3, 15))
    assert ix.chunk_passes_filter(chunk, RetrievalFilter(time_from=date(2025, 3, 15)))
    assert ix.chunk_passes_filter(chunk, RetrievalFilter(time_to=date(2025, 3, 15)))
    assert not ix.chunk_passes_filter(chunk, RetrievalFilter(time_from=date(2025, 3, 16)))
    assert not ix.chunk_passes_filter(chunk, RetrievalFilter(time_to=date(2025, 3, 14)))


def test_unknown_date_fails_any_dated_window():
    chunk = _chunk("D1", "x", published=None)
    assert ix.chunk_passes_filter(chunk, RetrievalFilter())
    assert not ix.chunk_passes_filter(chunk, RetrievalFilter(time_from=date(2000, 1, 1)))
    assert not ix.chunk_passes_filter(chunk, RetrievalFilter(time_to=date(2100, 1, 1)))


def test_block_wins_over_allow():
    chunk = _chunk("D1", "x", domain="bad.sigir.org")
    filt = RetrievalFilter(domain_allow=("sigir.org",), domain_block=("bad.sigir.org",))
    assert not ix.chunk_passes_filter(chunk, filt)


@given(
    domain=st.sampled_from(["a.com", "www.a.com", "b.org", "sub.b.org", "c.net"]),
    published=st.one_of(st.none(), st.dates(min_value=date(2020, 1, 1), max_value=date(2026, 1, 1))),
    allow=st.lists(st.sampled_from(["a.com", "b.org"]), max_size=2).map(tuple),
    block=st.lists(st.sampled_from(["www.a.com", "c.net"]), max_size=2).map(tuple),
    t_from=st.one_of(st.none(), st.dates(min_value=date(2021, 1, 1), max_value=date(2025, 1, 1))),
    t_to=st.one_of(st.none(), st.dates(min_value=date(2021, 1, 1), max_value=date(2025, 1, 1))),
)
@settings(max_examples=300)
def test_filter_matches_reference(domain, published, allow, block, t_from, t_to):
    chunk = _chunk("D1", "x", domain=domain, published=published)
    if t_from and t_to and t_from > t_to:
        t_from, t_to = t_to, t_from
    filt = RetrievalFilter(time_from=t_from, time_to=t_to, domain_allow=allow, domain_block=block)
    assert ix.chunk_passes_filter(chunk, filt) == ref_chunk_passes(chunk, t_from, t_to, allow, block)


# ---------------------------------------------------------------------------
# ranking


def test_filtered_out_chunks_still_count_in_corpus_stats():
    # Filtering happens before ranking but idf/avg length come from the whole
    # corpus, so adding a blocked near-duplicate changes nothing about which
    # chunks pass yet does change the scores.
    base = [_chunk("C1", "apple banana"), _chunk("C2", "banana cherry")]
    extra = base + [_chunk("C3", "apple apple", domain="spam.io")]
    filt = RetrievalFilter(domain_block=("spam.io",))
    sub = SubQuery(sub_id="Q1", text="apple")

    small = ix.search(ix.build_index(base), sub, filt)
    large = ix.search(ix.build_index(extra), sub, filt)
    assert [e.chunk_id for e in small.entries] == [e.chunk_id for e in large.entries] == ["C1"]
    assert small.entries[0].score != large.entries[0].score


def test_zero_score_chunks_are_dropped():
    idx = ix.build_index([_chunk("C1", "apple"), _chunk("C2", "banana")])
    result = ix.search(idx, SubQuery(sub_id="Q1", text="apple"))
    assert [e.chunk_id for e in result.entries] == ["C1"]


def test_ties_break_by_ascending_chunk_id():
    idx = ix.build_index([_chunk("C9", "apple pie"), _chunk("C2", "apple pie")])
    result = ix.search(idx, SubQuery(sub_id="Q1", text="apple"))
    assert [e.chunk_id for e in result.entries] == ["C2", "C9"]
    assert result.entries[0].score == result.entries[1].score


def test_constraint_values_join_the_query_terms():
    idx = ix.build_index([_chunk("C1", "apple"), _chunk("C2", "banana")])
    sub = SubQuery(sub_id="Q1", text="apple", constraints=(("fruit", "banana"),))
    assert ix.query_terms_for(sub) == ["apple", "banana"]
    result = ix.search(idx, sub)
    assert {e.chunk_id for e in result.entries} == {"C1", "C2"}


def test_search_rejects_k_below_one():
    idx = ix.build_index([_chunk("C1", "apple")])
    with pytest.raises(ValueError):
        ix.search(idx, SubQuery(sub_id="Q1", text="apple"), k=0)


@given(
    texts=st.lists(WORDS, min_size=1, max_size=8),
    query=st.lists(st.sampled_from("apple banana cherry durian elder".split()), min_size=1, max_size=3),
    k=st.integers(min_value=1, max_value=6),
    data=st.data(),
)
@settings(max_examples=150, deadline=None)
def test_search_matches_exhaustive_reference(texts, query, k, data):
    chunks = []
    for i, words in enumerate(texts):
        domain = data.draw(st.sampled_from(["a.com", "b.org", "spam.io"]))
        published = data.draw(st.one_of(st.none(), st.dates(min_value=date(2024, 1, 1), max_value=date(2025, 12, 31))))
        chunks.append(_chunk(f"C{i:02d}", " ".join(words) or "emptyfiller", domain=domain, published=published))
    filt = data.draw(
        st.one_of(
            st.just(RetrievalFilter()),
            st.just(RetrievalFilter(domain_block=("spam.io",))),
            st.just(RetrievalFilter(domain_allow=("a.com", "b.org"))),
            st.just(RetrievalFilter(time_from=date(2024, 6, 1))),
        )
    )
    idx = ix.build_index(chunks)
    sub = SubQuery(sub_id="Q1", text=" ".join(query))
    got = ix.search(idx, sub, filt, k=k)
    want = ref_search(ix.tokenize(sub.text), chunks, filt, k)
    assert [(e.chunk_id, e.rank) for e in got.entries] == [(cid, i + 1) for i, (cid, _) in enumerate(want)]
    for entry, (_, score) in zip(got.entries, want):
        assert entry.score == pytest.approx(score, rel=1e-12)


# ---------------------------------------------------------------------------
# persistence


def test_save_load_round_trip_is_bit_exact(tmp_path, corpus_chunks):
    idx = ix.build_index(corpus_chunks)
    path = tmp_path / "index"
    ix.save_index(idx, path)
    loaded = ix.load_index(path)
    assert loaded.stats == idx.stats
    assert loaded.postings == idx.postings
    assert loaded.chunk_store == idx.chunk_store
    sub = SubQuery(sub_id="Q1", text="sigir 2025 registration")
    assert ix.search(loaded, sub) == ix.search(idx, sub)


def test_load_rejects_unknown_format_version(tmp_path):
    from searchloop.errors import VersionMismatch

    idx = ix.build_index([_chunk("C1", "apple")])
    path = tmp_path / "index"
    ix.save_index(idx, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert '"version":1' in lines[0]
    lines[0] = lines[0].replace('"version":1', '"version":99')
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(VersionMismatch):
        ix.load_index(path)


def test_read_corpus_round_trip(tmp_path, corpus_chunks):
    from searchloop import records as rec

    path = tmp_path / "corpus.records"
    rec.write_records(path, [rec.document_chunk_record(c) for c in corpus_chunks])
    assert ix.read_corpus(path) == list(corpus_chunks)
