"""Chunking-quality metrics.

Boundary clarity BC(q, d) = ppl(q|d) / ppl(q): near 1 the chunks are
independent, near 0 strongly entangled. Edge(q, d) = (ppl(q) - ppl(q|d)) /
ppl(q), clamped below at 0, so Edge == 1 - BC whenever BC <= 1. Chunk
stickiness is the base-2 entropy of the degree distribution of a semantic
graph whose edges keep pairs with Edge above a threshold K: lower means a
cleaner, more independent chunking. Conditional perplexity prepends the
context chunk and scores only the target's tokens.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import fmean
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import GraphBuildError, UndefinedCorrelationError
from .scoring import Embedder, Scorer, cosine, perplexity
from .text import Chunk, ChunkSet, Document

logger = logging.getLogger(__name__)

GRAPH_VARIANTS = ("complete", "sequence")


def _text_of(piece: Chunk | str) -> str:
    return piece.text if isinstance(piece, Chunk) else piece


def boundary_clarity(q: Chunk | str, d: Chunk | str, scorer: Scorer) -> float:
    """ppl(q|d) / ppl(q); > 0, near 1 means q is independent of d."""
    qt, dt = _text_of(q), _text_of(d)
    if not qt or not dt:
        raise ValueError("boundary clarity needs two non-empty chunks")
    ppl_q = perplexity(scorer.score(qt))
    ppl_q_given_d = perplexity(scorer.score(qt, context=dt))
    return ppl_q_given_d / ppl_q


def _edge_from_ppl(ppl_q: float, ppl_q_given_d: float) -> float:
    return max(0.0, (ppl_q - ppl_q_given_d) / ppl_q)


def edge_weight(q: Chunk | str, d: Chunk | str, scorer: Scorer) -> float:
    """Normalized perplexity reduction of q given d, clamped into [0, 1]."""
    qt, dt = _text_of(q), _text_of(d)
    if not qt or not dt:
        raise ValueError("edge weight needs two non-empty chunks")
    ppl_q = perplexity(scorer.score(qt))
    ppl_q_given_d = perplexity(scorer.score(qt, context=dt))
    return _edge_from_ppl(ppl_q, ppl_q_given_d)


@dataclass(frozen=True)
class SemanticGraph:
    """Thresholded chunk-affinity graph.

    Nodes are chunks in document order. Edges are stored as (i, j, weight)
    with i < j; the degree of a node is the number of incident edges. The
    "complete" variant considers every unordered pair and keeps the larger
    of the two conditional directions; the "sequence" variant scores only
    the later chunk against the earlier one for pairs with j - i > delta.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]
    variant: str = "complete"
    delta: int = 0
    threshold: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise GraphBuildError(f"graph needs >= 2 nodes, got {self.n}")
        if self.variant not in GRAPH_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        seen = set()
        for i, j, w in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range or unordered")
            if self.variant == "sequence" and j - i <= self.delta:
                raise ValueError(
                    f"edge ({i}, {j}) violates sequence constraint delta={self.delta}"
                )
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> list[int]:
        degs = [0] * self.n
        for i, j, _ in self.edges:
            degs[i] += 1
            degs[j] += 1
        return degs


def _parallel_map(fn: Callable, items: Sequence, max_workers: int) -> list:
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def build_graph(
    chunks: ChunkSet | Sequence[Chunk | str],
    scorer: Scorer,
    k: float = 0.8,
    variant: str = "complete",
    delta: int = 0,
    max_workers: int = 1,
) -> SemanticGraph:
    """Score pairwise edges and keep those strictly above the threshold ``k``.

    Pair scoring is a pure map and runs on up to ``max_workers`` threads;
    graph assembly is a single-threaded reduction.
    """
    texts = [_text_of(c) for c in chunks]
    n = len(texts)
    if n < 2:
        raise GraphBuildError(f"graph needs >= 2 chunks, got {n}")
    if not (0.0 < k < 1.0):
        raise ValueError(f"threshold K must be in (0, 1), got {k}")
    if variant not in GRAPH_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if delta < 0:
        raise ValueError("delta must be >= 0")

    ppl_plain = _parallel_map(
        lambda t: perplexity(scorer.score(t)), texts, max_workers
    )

    if variant == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

        def weigh(pair: tuple[int, int]) -> float:
            i, j = pair
            # q conditioned on d, both directions; keep the stronger pull
            w_ij = _edge_from_ppl(
                ppl_plain[i], perplexity(scorer.score(texts[i], context=texts[j]))
            )
            w_ji = _edge_from_ppl(
                ppl_plain[j], perplexity(scorer.score(texts[j], context=texts[i]))
            )
            return max(w_ij, w_ji)

    else:
        pairs = [
            (i, j) for i in range(n) for j in range(i + 1, n) if j - i > delta
        ]

        def weigh(pair: tuple[int, int]) -> float:
            i, j = pair
            # reading order: the later chunk is scored given the earlier one
            return _edge_from_ppl(
                ppl_plain[j], perplexity(scorer.score(texts[j], context=texts[i]))
            )

    weights = _parallel_map(weigh, pairs, max_workers)
    edges = tuple(
        (i, j, w) for (i, j), w in zip(pairs, weights) if w > k
    )
    return SemanticGraph(n=n, edges=edges, variant=variant, delta=delta, threshold=k)


def chunk_stickiness(graph: SemanticGraph) -> float:
    """Base-2 entropy of the degree distribution h_i / 2m.

    Isolated nodes contribute nothing (x log x -> 0); an edgeless graph has
    stickiness 0 by convention so threshold sweeps stay total.
    """
    m = graph.edge_count
    if m == 0:
        return 0.0
    two_m = 2.0 * m
    total = 0.0
    for h in graph.degrees():
        if h > 0:
            p = h / two_m
            total -= p * math.log2(p)
    return total


def dissimilarity(chunks: ChunkSet | Sequence[Chunk | str], embedder: Embedder) -> float:
    """Mean over adjacent chunk pairs of 1 - cosine(embeddings) in [0, 1]."""
    texts = [_text_of(c) for c in chunks]
    if len(texts) < 2:
        raise ValueError("dissimilarity needs >= 2 chunks")
    vectors = embedder.embed_many(texts)
    gaps = [
        1.0 - cosine(vectors[i], vectors[i + 1]) for i in range(len(vectors) - 1)
    ]
    return min(1.0, max(0.0, fmean(gaps)))


def conditional_support(
    answer: str,
    retrieved: Sequence[Chunk | str],
    scorer: Scorer,
    joiner: str = "\n",
) -> float:
    """Mean negative log-probability of the answer given retrieved chunks.

    Lower means the retrieved context supports the answer more strongly.
    """
    if not answer:
        raise ValueError("answer must be non-empty")
    context = joiner.join(_text_of(c) for c in retrieved)
    scored = scorer.score(answer, context=context if context else None)
    return -fmean(scored.logprobs)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation in [-1, 1]."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("correlation needs at least two points")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = float(np.dot(xd, xd))
    sy = float(np.dot(yd, yd))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined for a zero-variance sequence"
        )
    r = float(np.dot(xd, yd) / math.sqrt(sx * sy))
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# Corpus-level evaluation reports
# ---------------------------------------------------------------------------

KNOWN_METRICS = ("bc", "cs_c", "cs_i", "ds", "cp")


@dataclass
class DocMetrics:
    doc_id: str
    values: dict[str, float | None] = field(default_factory=dict)

    def as_record(self) -> dict:
        return {"doc_id": self.doc_id, **self.values}


@dataclass
class MetricsReport:
    """Per-document metric rows plus corpus aggregates and the parameters used."""

    params: dict
    rows: list[DocMetrics]

    def aggregate(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        keys = sorted({k for row in self.rows for k in row.values})
        for key in keys:
            present = [
                row.values[key] for row in self.rows
                if row.values.get(key) is not None
            ]
            out[key] = fmean(present) if present else None
        return out

    def records(self) -> list[dict]:
        body = [row.as_record() for row in self.rows]
        body.append({"doc_id": "__aggregate__", **self.aggregate()})
        return body


def evaluate_chunksets(
    documents: Mapping[str, Document],
    chunksets: Sequence[ChunkSet],
    metrics: Sequence[str] = ("bc", "cs_c", "cs_i"),
    scorer: Scorer | None = None,
    embedder: Embedder | None = None,
    k: float = 0.8,
    delta: int = 0,
    answer_key: str = "answer",
    max_workers: int = 1,
) -> MetricsReport:
    """Compute the requested metrics for every chunk set.

    BC is the mean over adjacent pairs (later chunk given earlier); CP reads
    the reference answer from ``doc.meta[answer_key]`` and scores it against
    the document's own chunks, skipping documents without one.
    """
    unknown = [m for m in metrics if m not in KNOWN_METRICS]
    if unknown:
        raise ValueError(f"unknown metrics: {unknown}; known: {KNOWN_METRICS}")
    needs_scorer = {"bc", "cs_c", "cs_i", "cp"}
    if scorer is None and any(m in needs_scorer for m in metrics):
        raise ValueError("these metrics need a scorer: "
                         f"{sorted(needs_scorer & set(metrics))}")
    if embedder is None and "ds" in metrics:
        raise ValueError("the ds metric needs an embedder")
    orphans = [cs.doc_id for cs in chunksets if cs.doc_id not in documents]
    if orphans:
        raise ValueError(f"chunk sets reference unknown documents: {orphans}")

    rows = []
    for cs in chunksets:
        doc = documents[cs.doc_id]
        values: dict[str, float | None] = {}
        if "bc" in metrics:
            pairs = list(zip(cs.chunks, cs.chunks[1:]))
            values["bc"] = (
                fmean(boundary_clarity(b, a, scorer) for a, b in pairs)
                if pairs else None
            )
        if "cs_c" in metrics:
            values["cs_c"] = chunk_stickiness(
                build_graph(cs, scorer, k=k, variant="complete",
                            max_workers=max_workers)
            ) if len(cs) >= 2 else None
        if "cs_i" in metrics:
            values["cs_i"] = chunk_stickiness(
                build_graph(cs, scorer, k=k, variant="sequence", delta=delta,
                            max_workers=max_workers)
            ) if len(cs) >= 2 else None
        if "ds" in metrics:
            values["ds"] = dissimilarity(cs, embedder) if len(cs) >= 2 else None
        if "cp" in metrics:
            answer = doc.meta.get(answer_key)
            if answer:
                values["cp"] = conditional_support(answer, cs.chunks, scorer)
            else:
                values["cp"] = None
                logger.warning("doc %s has no %r meta; cp skipped", doc.id, answer_key)
        rows.append(DocMetrics(doc_id=cs.doc_id, values=values))

    params = {
        "metrics": list(metrics),
        "k": k,
        "delta": delta,
        "scorer": _backend_name(scorer),
        "embedder": _backend_name(embedder),
    }
    return MetricsReport(params=params, rows=rows)


def _backend_name(backend) -> str | None:
    """Class name, plus the remote model id when the backend has one."""
    if backend is None:
        return None
    handle = getattr(backend, "handle", None)
    model = getattr(handle, "model", None) or getattr(backend, "model", None)
    name = type(backend).__name__
    return f"{name}:{model}" if model else name
