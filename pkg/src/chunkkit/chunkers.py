"""Baseline chunking strategies: fixed-length, boundary-aware, semantic.

All chunkers emit valid chunk sets whose spans re-slice exactly from the
source document. Oversize single sentences are emitted whole and flagged
via a warning, never split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from .scoring import Embedder, cosine
from .text import (
    ChunkSet,
    DEFAULT_SENTENCE_POLICY,
    Document,
    SentencePolicy,
    split_sentences,
)

logger = logging.getLogger(__name__)

CHUNKER_METHODS = ("fixed", "boundary", "semantic")


@dataclass(frozen=True)
class ChunkerConfig:
    """Knobs for the baseline chunkers; length unit defaults to characters."""

    method: str
    target_len: int = 178
    unit: str = "chars"
    overlap: int = 0
    similarity_threshold: float = 0.5

    def __post_init__(self):
        if self.method not in CHUNKER_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.target_len <= 0:
            raise ValueError("target_len must be positive")
        if not (0 <= self.overlap < self.target_len):
            raise ValueError("overlap must satisfy 0 <= overlap < target_len")
        if not (-1.0 < self.similarity_threshold < 1.0):
            raise ValueError("similarity_threshold must be in (-1, 1)")


def chunk_fixed(doc: Document, length: int) -> ChunkSet:
    """Segments of exactly ``length`` characters (last may be shorter)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    n = len(doc.text)
    spans = [(i, min(i + length, n)) for i in range(0, n, length)]
    return ChunkSet.from_spans(doc, spans, method="fixed")


def chunk_boundary_aware(
    doc: Document,
    target: int,
    overlap: int = 0,
    policy: SentencePolicy = DEFAULT_SENTENCE_POLICY,
) -> ChunkSet:
    """Greedy whole-sentence packing up to ``target`` characters.

    Chunks are concatenations of consecutive sentence spans; a chunk never
    splits a sentence. A single sentence longer than ``target`` is emitted
    alone (flagged with a warning). With ``overlap`` > 0 each chunk after
    the first re-includes trailing whole sentences of its predecessor worth
    up to ``overlap`` characters, so spans may overlap while starts stay
    strictly increasing.
    """
    if target < 1:
        raise ValueError("target must be >= 1")
    if not (0 <= overlap < target):
        raise ValueError("overlap must satisfy 0 <= overlap < target")
    sentences = split_sentences(doc, policy)
    spans: list[tuple[int, int]] = []
    oversize: list[int] = []

    start_idx = 0  # index of the first sentence of the current chunk
    while start_idx < len(sentences):
        chunk_start = sentences[start_idx].start
        end_idx = start_idx
        # always take one sentence, then fill while the budget allows
        while (
            end_idx + 1 < len(sentences)
            and sentences[end_idx + 1].end - chunk_start <= target
        ):
            end_idx += 1
        chunk_end = sentences[end_idx].end
        if end_idx == start_idx and chunk_end - chunk_start > target:
            oversize.append(len(spans))
        spans.append((chunk_start, chunk_end))

        next_idx = end_idx + 1
        if next_idx >= len(sentences):
            break
        if overlap > 0:
            # back up over whole trailing sentences, staying past the
            # previous chunk's first sentence so starts keep increasing
            backed = next_idx
            while (
                backed - 1 > start_idx
                and sentences[next_idx].start - sentences[backed - 1].start <= overlap
            ):
                backed -= 1
            next_idx = backed
        start_idx = next_idx

    if oversize:
        logger.warning(
            "doc %s: %d oversize single-sentence chunk(s) emitted whole: %s",
            doc.id, len(oversize), oversize,
        )
    return ChunkSet.from_spans(doc, spans, method="boundary")


def chunk_semantic(
    doc: Document,
    embedder: Embedder,
    threshold: float,
    policy: SentencePolicy = DEFAULT_SENTENCE_POLICY,
) -> ChunkSet:
    """Split between consecutive sentences whose embedding similarity drops
    below ``threshold``; a chunk is a maximal run of similar sentences."""
    if not (-1.0 <= threshold <= 1.0):
        raise ValueError("threshold must be in [-1, 1]")
    sentences = split_sentences(doc, policy)
    if len(sentences) == 1:
        return ChunkSet.from_spans(doc, [(sentences[0].start, sentences[0].end)],
                                   method="semantic")
    vectors = embedder.embed_many([doc.text[s.start:s.end] for s in sentences])
    spans: list[tuple[int, int]] = []
    run_start = sentences[0].start
    for i in range(len(sentences) - 1):
        if cosine(vectors[i], vectors[i + 1]) < threshold:
            spans.append((run_start, sentences[i].end))
            run_start = sentences[i + 1].start
    spans.append((run_start, sentences[-1].end))
    return ChunkSet.from_spans(doc, spans, method="semantic")


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of searching a chunker knob for a target mean chunk length."""

    config: ChunkerConfig
    achieved_avg: float
    target_avg: float
    tolerance: float
    ok: bool


def _corpus_mean_length(chunksets: Iterable[ChunkSet]) -> float:
    lengths = [len(c) for cs in chunksets for c in cs.chunks]
    if not lengths:
        raise ValueError("no chunks produced")
    return sum(lengths) / len(lengths)


def calibrate_avg_len(
    method: str,
    docs: Sequence[Document],
    target_avg: float = 178,
    tolerance: float = 5,
    embedder: Embedder | None = None,
    policy: SentencePolicy = DEFAULT_SENTENCE_POLICY,
) -> CalibrationResult:
    """Search the method's size knob until the corpus mean chunk length is
    within ``tolerance`` of ``target_avg``, or the knob space is exhausted.

    Fixed-length has the closed form L = target. Unreachable targets yield a
    best-effort result with ``ok`` False rather than an error.
    """
    if not docs:
        raise ValueError("calibration needs a non-empty corpus")
    if method not in CHUNKER_METHODS:
        raise ValueError(f"unknown method {method!r}")

    def result(config: ChunkerConfig, achieved: float) -> CalibrationResult:
        ok = abs(achieved - target_avg) <= tolerance
        if not ok:
            logger.warning(
                "calibration best-effort: method=%s achieved=%.1f target=%.1f",
                method, achieved, target_avg,
            )
        return CalibrationResult(config, achieved, target_avg, tolerance, ok)

    if method == "fixed":
        length = max(1, round(target_avg))
        achieved = _corpus_mean_length(chunk_fixed(d, length) for d in docs)
        return result(ChunkerConfig(method="fixed", target_len=length), achieved)

    if method == "boundary":
        lo, hi = 1, max(len(d.text) for d in docs)
        best = None  # (|gap|, knob, achieved)
        while lo <= hi:
            mid = (lo + hi) // 2
            achieved = _corpus_mean_length(
                chunk_boundary_aware(d, mid, policy=policy) for d in docs
            )
            gap = achieved - target_avg
            if best is None or abs(gap) < best[0]:
                best = (abs(gap), mid, achieved)
            if abs(gap) <= tolerance:
                break
            if gap < 0:
                lo = mid + 1
            else:
                hi = mid - 1
        _, knob, achieved = best
        return result(ChunkerConfig(method="boundary", target_len=knob), achieved)

    # semantic: mean length decreases as the threshold rises (more splits)
    if embedder is None:
        raise ValueError("semantic calibration needs an embedder")
    lo, hi = -0.999, 0.999
    best = None
    for _ in range(40):
        mid = (lo + hi) / 2
        achieved = _corpus_mean_length(
            chunk_semantic(d, embedder, mid, policy=policy) for d in docs
        )
        gap = achieved - target_avg
        if best is None or abs(gap) < best[0]:
            best = (abs(gap), mid, achieved)
        if abs(gap) <= tolerance:
            break
        if gap > 0:
            lo = mid  # chunks too long: split more
        else:
            hi = mid
    _, knob, achieved = best
    config = ChunkerConfig(
        method="semantic",
        target_len=max(1, round(target_avg)),
        similarity_threshold=knob,
    )
    return result(config, achieved)
