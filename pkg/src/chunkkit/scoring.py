"""Language-model scoring, generation, and embedding interfaces.

Two deterministic in-process scorers back the offline tests: a table-driven
fixture (exact control over every logprob) and a character n-gram scorer
with add-one smoothing (realistic perplexity gradients). Remote backends
implementing the same protocols live in :mod:`chunkkit.backends`.

Log-probabilities are natural log throughout; any base-2 conversion happens
at the metrics layer only.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import FixtureMissingError, UndefinedSimilarityError


@dataclass(frozen=True)
class ScoredText:
    """Per-token log-probabilities of a text, excluding any context tokens.

    ``context_len`` counts conditioning tokens that were scored over but
    excluded from ``logprobs``; ``truncated`` is set when the context had to
    be left-truncated to fit a backend limit.
    """

    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]
    context_len: int = 0
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "logprobs", tuple(float(x) for x in self.logprobs))
        if len(self.tokens) != len(self.logprobs):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.logprobs)} logprobs"
            )
        if not self.tokens:
            raise ValueError("scored text must contain at least one token")
        if any(lp > 0.0 for lp in self.logprobs):
            raise ValueError("logprobs must be <= 0")
        if self.context_len < 0:
            raise ValueError("context_len must be >= 0")


def perplexity(scored: ScoredText) -> float:
    """exp(-mean logprob); >= 1 for any valid ScoredText."""
    return math.exp(-fmean(scored.logprobs))


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters; chunking calls default to near-greedy sampling."""

    temperature: float = 0.1
    top_p: float = 0.1
    top_k: int | None = None
    max_tokens: int = 1024


@dataclass(frozen=True)
class GenerationResult:
    text: str
    finish_reason: str = "stop"

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


@runtime_checkable
class Scorer(Protocol):
    def score(self, text: str, context: str | None = None) -> ScoredText: ...


@runtime_checkable
class Generator(Protocol):
    def generate(
        self, prompt: str, params: GenerationParams | None = None
    ) -> GenerationResult: ...


@runtime_checkable
class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero vectors have no defined similarity."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("similarity with a zero vector is undefined")
    value = float(np.dot(u, v) / (nu * nv))
    return max(-1.0, min(1.0, value))


# ---------------------------------------------------------------------------
# Character n-gram scorer
# ---------------------------------------------------------------------------

class NGramScorer:
    """Character-level n-gram scorer with add-one smoothing.

    Deterministic: the same training corpus and text always produce the same
    logprobs. P(c | ctx) = (count(ctx, c) + 1) / (count(ctx) + V) where V is
    the alphabet size; at sequence start the longest available shorter
    context is used. Conditional scoring is exactly the suffix of scoring
    the concatenation: score(text, context) == score(context + text)
    restricted to the text positions.

    Read-only after :meth:`fit`; safe to share across threads.
    """

    def __init__(
        self,
        order: int = 2,
        corpus: str | Iterable[str] | None = None,
        alphabet: Iterable[str] | None = None,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        # _counts[k][ctx] -> Counter of next char, for context length k-1
        self._counts: list[dict[str, Counter]] = [dict() for _ in range(order + 1)]
        self._alphabet: set[str] = set(alphabet or ())
        if corpus is not None:
            self.fit([corpus] if isinstance(corpus, str) else corpus)

    def fit(self, texts: Iterable[str]) -> "NGramScorer":
        for text in texts:
            self._alphabet.update(text)
            for k in range(1, self.order + 1):
                table = self._counts[k]
                for t in range(len(text) - k + 1):
                    ctx = text[t:t + k - 1]
                    nxt = text[t + k - 1]
                    bucket = table.get(ctx)
                    if bucket is None:
                        bucket = table[ctx] = Counter()
                    bucket[nxt] += 1
        return self

    @property
    def alphabet_size(self) -> int:
        return len(self._alphabet)

    def prob(self, history: str, char: str) -> float:
        """Smoothed probability of ``char`` after ``history``."""
        v = len(self._alphabet)
        if v == 0:
            raise ValueError("scorer has an empty alphabet; fit it or pass one")
        k = min(self.order, len(history) + 1)
        ctx = history[len(history) - (k - 1):] if k > 1 else ""
        bucket = self._counts[k].get(ctx)
        count = bucket[char] if bucket else 0
        total = sum(bucket.values()) if bucket else 0
        return (count + 1) / (total + v)

    def score(self, text: str, context: str | None = None) -> ScoredText:
        if not text:
            raise ValueError("cannot score empty text")
        full = (context or "") + text
        offset = len(context or "")
        logprobs = [
            math.log(self.prob(full[:t], full[t]))
            for t in range(offset, len(full))
        ]
        return ScoredText(
            tokens=tuple(text),
            logprobs=tuple(min(lp, 0.0) for lp in logprobs),
            context_len=offset,
        )


# ---------------------------------------------------------------------------
# Table-driven fixtures (fail closed on unknown inputs)
# ---------------------------------------------------------------------------

class FixtureScorer:
    """Scorer returning preset logprobs for exact (text, context) pairs."""

    def __init__(self):
        self._table: dict[tuple[str, str | None], ScoredText] = {}

    def add(
        self,
        text: str,
        context: str | None = None,
        *,
        logprobs: Sequence[float] | None = None,
        probs: Sequence[float] | None = None,
        tokens: Sequence[str] | None = None,
    ) -> "FixtureScorer":
        if (logprobs is None) == (probs is None):
            raise ValueError("provide exactly one of logprobs or probs")
        if probs is not None:
            logprobs = [math.log(p) for p in probs]
        toks = tuple(tokens) if tokens is not None else tuple(text)
        if len(toks) != len(logprobs):
            toks = tuple(f"t{i}" for i in range(len(logprobs)))
        self._table[(text, context)] = ScoredText(
            tokens=toks,
            logprobs=tuple(logprobs),
            context_len=len(context) if context else 0,
        )
        return self

    def add_ppl(
        self, text: str, context: str | None = None, *, ppl: float, length: int = 4
    ) -> "FixtureScorer":
        """Convenience: constant logprobs realizing the given perplexity."""
        if ppl < 1.0:
            raise ValueError("perplexity must be >= 1")
        return self.add(text, context, logprobs=[-math.log(ppl)] * length)

    def score(self, text: str, context: str | None = None) -> ScoredText:
        if not text:
            raise ValueError("cannot score empty text")
        try:
            return self._table[(text, context)]
        except KeyError:
            raise FixtureMissingError(
                f"no fixture for text={text[:40]!r} context="
                f"{None if context is None else context[:40]!r}"
            ) from None


class FixtureGenerator:
    """Generator returning canned responses for exact prompts."""

    def __init__(self, table: Mapping[str, str] | None = None, model: str = "fixture"):
        self._table: dict[str, GenerationResult] = {}
        self.model = model
        self.calls: list[str] = []
        for prompt, response in (table or {}).items():
            self.add(prompt, response)

    def add(
        self, prompt: str, response: str, finish_reason: str = "stop"
    ) -> "FixtureGenerator":
        self._table[prompt] = GenerationResult(response, finish_reason)
        return self

    def generate(
        self, prompt: str, params: GenerationParams | None = None
    ) -> GenerationResult:
        if not prompt:
            raise ValueError("cannot generate from an empty prompt")
        self.calls.append(prompt)
        try:
            return self._table[prompt]
        except KeyError:
            raise FixtureMissingError(
                f"no fixture for prompt starting {prompt[:60]!r}"
            ) from None


class FixtureEmbedder:
    """Embedder returning preset vectors for exact texts."""

    def __init__(self, table: Mapping[str, Sequence[float]] | None = None):
        self._table: dict[str, np.ndarray] = {}
        for text, vector in (table or {}).items():
            self.add(text, vector)

    def add(self, text: str, vector: Sequence[float]) -> "FixtureEmbedder":
        self._table[text] = np.asarray(vector, dtype=float)
        return self

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        try:
            return self._table[text]
        except KeyError:
            raise FixtureMissingError(f"no fixture for text {text[:40]!r}") from None

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HashEmbedder:
    """Deterministic character n-gram hashing embedder.

    Dependency-free stand-in for a sentence embedding model: texts sharing
    character n-grams land near each other. FNV-1a hashes each n-gram into
    one of ``dim`` buckets; the count vector is L2-normalized.
    """

    def __init__(self, dim: int = 64, ngram: int = 3):
        if dim < 2 or ngram < 1:
            raise ValueError("dim must be >= 2 and ngram >= 1")
        self.dim = dim
        self.ngram = ngram

    @staticmethod
    def _fnv1a(data: bytes) -> int:
        h = 0x811C9DC5
        for byte in data:
            h ^= byte
            h = (h * 0x01000193) & 0xFFFFFFFF
        return h

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=float)
        padded = text if len(text) >= self.ngram else text.ljust(self.ngram)
        for i in range(len(padded) - self.ngram + 1):
            gram = padded[i:i + self.ngram]
            vec[self._fnv1a(gram.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm else vec

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]
