"""Lexical retrieval: tokenizer, BM25 index, filtering, and ranked search.

Scoring uses BM25 with the non-negative idf form
``ln(1 + (N - df + 0.5) / (df + 0.5))`` and term-frequency saturation
``tf * (k1 + 1) / (tf + k1 * (1 - b + b * length / avg_length))``.
Everything here is deterministic: ties break on ascending chunk_id and
no randomness or wall-clock input is involved.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import records as rec
from .errors import DuplicateChunkId, EmptyCorpus, UnknownChunk, VersionMismatch
from .model import DocumentChunk, RankedEntry, RankedList, RetrievalFilter, SubQuery

K1_DEFAULT = 1.2
B_DEFAULT = 0.75
INDEX_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric run. No stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class IndexStats:
    total_chunks: int
    avg_chunk_length: float
    doc_freq: dict[str, int] = field(default_factory=dict)
    chunk_lengths: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Index:
    postings: dict[str, tuple[tuple[str, int], ...]]
    stats: IndexStats
    chunk_store: dict[str, DocumentChunk]

    def tf(self, term: str, chunk_id: str) -> int:
        for cid, tf in self.postings.get(term, ()):
            if cid == chunk_id:
                return tf
        return 0


def build_index(corpus: Iterable[DocumentChunk]) -> Index:
    """Build an in-memory index over a chunk corpus.

    Raises DuplicateChunkId on a repeated chunk_id and EmptyCorpus when no
    chunks are given.
    """
    chunk_store: dict[str, DocumentChunk] = {}
    term_counts: dict[str, dict[str, int]] = {}
    lengths: dict[str, int] = {}
    for chunk in corpus:
        if chunk.chunk_id in chunk_store:
            raise DuplicateChunkId(chunk.chunk_id)
        chunk_store[chunk.chunk_id] = chunk
        tokens = tokenize(chunk.text)
        lengths[chunk.chunk_id] = len(tokens)
        for tok in tokens:
            term_counts.setdefault(tok, {})
            term_counts[tok][chunk.chunk_id] = term_counts[tok].get(chunk.chunk_id, 0) + 1
    if not chunk_store:
        raise EmptyCorpus("cannot index an empty corpus")

    postings = {
        term: tuple(sorted(per_chunk.items()))
        for term, per_chunk in sorted(term_counts.items())
    }
    doc_freq = {term: len(entries) for term, entries in postings.items()}
    total = len(chunk_store)
    avg = sum(lengths.values()) / total
    stats = IndexStats(total_chunks=total, avg_chunk_length=avg, doc_freq=doc_freq, chunk_lengths=lengths)
    return Index(postings=postings, stats=stats, chunk_store=dict(sorted(chunk_store.items())))


def idf(index: Index, term: str) -> float:
    n = index.stats.total_chunks
    df = index.stats.doc_freq.get(term, 0)
    return max(0.0, math.log(1.0 + (n - df + 0.5) / (df + 0.5)))


def bm25_score(
    query_terms: Sequence[str],
    chunk_id: str,
    index: Index,
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> float:
    """Score one chunk against a term sequence. Empty input scores 0.0."""
    if chunk_id not in index.chunk_store:
        raise UnknownChunk(chunk_id)
    length = index.stats.chunk_lengths[chunk_id]
    avg = index.stats.avg_chunk_length
    score = 0.0
    for term in query_terms:
        tf = index.tf(term, chunk_id)
        if tf == 0:
            continue
        norm = tf + k1 * (1.0 - b + b * length / avg)
        score += idf(index, term) * (tf * (k1 + 1.0)) / norm
    return score


def domain_matches(domain: str, suffix: str) -> bool:
    """Hostname-suffix match on label boundaries."""
    domain = domain.lower()
    suffix = suffix.lower().lstrip(".")
    return domain == suffix or domain.endswith("." + suffix)


def chunk_passes_filter(chunk: DocumentChunk, filt: RetrievalFilter) -> bool:
    if filt.time_from is not None or filt.time_to is not None:
        if chunk.published_date is None:
            return False
        if filt.time_from is not None and chunk.published_date < filt.time_from:
            return False
        if filt.time_to is not None and chunk.published_date > filt.time_to:
            return False
    if filt.domain_allow is not None:
        if not any(domain_matches(chunk.source_domain, s) for s in filt.domain_allow):
            return False
    if filt.domain_block is not None:
        if any(domain_matches(chunk.source_domain, s) for s in filt.domain_block):
            return False
    return True


def apply_filter(candidates: Sequence[str], filt: RetrievalFilter, index: Index) -> list[str]:
    """Keep candidates that satisfy the filter, preserving relative order.

    A chunk with unknown published_date survives only when no time window
    is set. Domain rules match on hostname suffixes.
    """
    out = []
    for cid in candidates:
        chunk = index.chunk_store.get(cid)
        if chunk is None:
            raise UnknownChunk(cid)
        if chunk_passes_filter(chunk, filt):
            out.append(cid)
    return out


def query_terms_for(sub: SubQuery) -> list[str]:
    """Terms for retrieval: the sub-query text plus constraint values."""
    terms = tokenize(sub.text)
    for _, value in sub.constraints:
        terms.extend(tokenize(value))
    return terms


def search(
    index: Index,
    sub: SubQuery,
    filt: RetrievalFilter = RetrievalFilter(),
    k: int = 5,
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> RankedList:
    """Top-k chunks for a sub-query, filter applied before ranking.

    Only chunks matching at least one query term appear (a no-term match
    would score 0.0 and is excluded), ordered by score descending with
    ascending chunk_id as tie-break; ranks are contiguous from 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = query_terms_for(sub)
    candidates = sorted({cid for term in set(terms) for cid, _ in index.postings.get(term, ())})
    surviving = apply_filter(candidates, filt, index)
    scored = [(bm25_score(terms, cid, index, k1, b), cid) for cid in surviving]
    scored = [(s, cid) for s, cid in scored if s > 0.0]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    entries = tuple(
        RankedEntry(chunk_id=cid, score=score, rank=i + 1)
        for i, (score, cid) in enumerate(scored[:k])
    )
    return RankedList(entries=entries)


# ---------------------------------------------------------------------------
# persistence


def save_index(index: Index, path: str | Path) -> None:
    """Persist the index as a versioned record file (atomic write)."""
    header = {
        "type": "index_header",
        "version": INDEX_FORMAT_VERSION,
        "total_chunks": index.stats.total_chunks,
        "avg_chunk_length": index.stats.avg_chunk_length,
    }
    lines: list[dict] = [header]
    for cid in sorted(index.chunk_store):
        lines.append(
            {
                "type": "index_chunk",
                "chunk": rec.document_chunk_record(index.chunk_store[cid]),
                "length": index.stats.chunk_lengths[cid],
            }
        )
    for term in sorted(index.postings):
        lines.append(
            {
                "type": "index_posting",
                "term": term,
                "entries": [[cid, tf] for cid, tf in index.postings[term]],
            }
        )
    rec.write_records(path, lines)


def load_index(path: str | Path) -> Index:
    records = list(rec.read_records(path))
    if not records or records[0].get("type") != "index_header":
        raise VersionMismatch(f"{path} is not an index file")
    header = records[0]
    if header.get("version") != INDEX_FORMAT_VERSION:
        raise VersionMismatch(f"index format {header.get('version')!r}, expected {INDEX_FORMAT_VERSION}")
    chunk_store: dict[str, DocumentChunk] = {}
    lengths: dict[str, int] = {}
    postings: dict[str, tuple[tuple[str, int], ...]] = {}
    for record in records[1:]:
        if record["type"] == "index_chunk":
            chunk = rec.parse_document_chunk(record["chunk"])
            chunk_store[chunk.chunk_id] = chunk
            lengths[chunk.chunk_id] = record["length"]
        elif record["type"] == "index_posting":
            postings[record["term"]] = tuple((cid, tf) for cid, tf in record["entries"])
    doc_freq = {term: len(entries) for term, entries in postings.items()}
    stats = IndexStats(
        total_chunks=header["total_chunks"],
        avg_chunk_length=header["avg_chunk_length"],
        doc_freq=doc_freq,
        chunk_lengths=lengths,
    )
    return Index(postings=postings, stats=stats, chunk_store=chunk_store)


def read_corpus(path: str | Path) -> list[DocumentChunk]:
    """Read a line-delimited document_chunk corpus file."""
    chunks = []
    for record in rec.read_records(path):
        if record.get("type") != "document_chunk":
            raise ValueError(f"unexpected record type {record.get('type')!r} in corpus")
        chunks.append(rec.parse_document_chunk(record))
    return chunks
