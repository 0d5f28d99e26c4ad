"""Training-data distillation: windows, cleaning, rule and label synthesis.

A long document is cut into sub-token-budget windows (preferring paragraph
breaks, then sentence ends, then hard cuts), a generator proposes chunk
texts per window, hallucinated chunks are flagged by minimum edit distance
against the source, surviving chunks become anchor rules and granularity
labels, and router/expert training files are emitted per label.

Token counting uses a character proxy (chars / chars_per_token) since the
backend tokenizer is remote; windows only need to respect a budget.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import prompts
from .errors import RuleParseError, ScoringError
from .fuzzy import best_substring_match
from .rules import (
    DEFAULT_PLACEHOLDER,
    ChunkRule,
    GranularityLabel,
    RuleList,
    label_for_mean,
    render_rule_targets,
)
from .scoring import GenerationParams, Generator
from .text import (
    ChunkSet,
    DEFAULT_SENTENCE_POLICY,
    Document,
    SentencePolicy,
    split_sentences,
)

logger = logging.getLogger(__name__)

_PARAGRAPH_BREAK = re.compile(r"\n[ \t]*\n+")


@dataclass(frozen=True)
class Window:
    """One sub-budget slice of a document; ``carried_prefix`` holds text
    re-offered from the previous window by the chunk buffer."""

    doc_id: str
    start: int
    end: int
    carried_prefix: str = ""

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid window span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


def sliding_windows(
    doc: Document,
    max_tokens: int = 1024,
    chars_per_token: float = 1.0,
    policy: SentencePolicy = DEFAULT_SENTENCE_POLICY,
) -> list[Window]:
    """Tile the document into windows of at most ``max_tokens``.

    Cut points are chosen at the last paragraph break within budget, else
    the last sentence end, else a hard cut exactly at the budget.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    if chars_per_token <= 0:
        raise ValueError("chars_per_token must be positive")
    budget = max(1, int(max_tokens * chars_per_token))
    text = doc.text
    n = len(text)

    sentence_ends = [
        s.end for s in split_sentences(doc, policy) if s.terminal is not None
    ]

    windows: list[Window] = []
    pos = 0
    while pos < n:
        limit = pos + budget
        if limit >= n:
            windows.append(Window(doc.id, pos, n))
            break
        cut = None
        last_break = None
        for match in _PARAGRAPH_BREAK.finditer(text, pos, limit):
            last_break = match.end()
        if last_break is not None and pos < last_break <= limit:
            cut = last_break
        if cut is None:
            idx = bisect.bisect_right(sentence_ends, limit) - 1
            if idx >= 0 and sentence_ends[idx] > pos:
                cut = sentence_ends[idx]
        if cut is None:
            cut = limit
        windows.append(Window(doc.id, pos, cut))
        pos = cut
    return windows


def apply_chunk_buffer(
    prev_chunks: ChunkSet, next_window: Window
) -> tuple[ChunkSet, Window]:
    """Drop the last chunk of the preceding window and re-offer its text as
    the next window's prefix. A single-chunk window is left intact (the only
    chunk cannot be dropped) with a notice."""
    if not prev_chunks.chunks:
        raise ValueError("previous chunk set is empty")
    if len(prev_chunks.chunks) == 1:
        logger.warning(
            "doc %s: single-chunk window, chunk buffer skipped",
            prev_chunks.doc_id,
        )
        return prev_chunks, next_window
    dropped = prev_chunks.chunks[-1]
    trimmed = ChunkSet(
        doc_id=prev_chunks.doc_id,
        chunks=prev_chunks.chunks[:-1],
        method=prev_chunks.method,
    )
    return trimmed, replace(next_window, carried_prefix=dropped.text)


# ---------------------------------------------------------------------------
# Hallucination detection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CleaningVerdict:
    """Minimum-edit-distance audit of one generated chunk.

    Flagged when the distance strictly exceeds 10% of the chunk length
    (threshold = ceil(0.10 * len)).
    """

    chunk_index: int
    min_edit_distance: int
    threshold: int
    flagged: bool
    start: int
    end: int

    def __post_init__(self):
        if self.flagged != (self.min_edit_distance > self.threshold):
            raise ValueError("flag inconsistent with distance and threshold")


def detect_hallucination(
    generated_chunk: str,
    doc: Document,
    index: int = 0,
    search_from: int = 0,
    flag_ratio: float = 0.10,
) -> CleaningVerdict:
    """Compare a generated chunk against the closest span of the source."""
    if not generated_chunk:
        raise ValueError("chunk must be non-empty")
    match = best_substring_match(generated_chunk, doc.text, search_from)
    threshold = math.ceil(flag_ratio * len(generated_chunk))
    return CleaningVerdict(
        chunk_index=index,
        min_edit_distance=match.distance,
        threshold=threshold,
        flagged=match.distance > threshold,
        start=match.start,
        end=match.end,
    )


# ---------------------------------------------------------------------------
# Rule and label synthesis
# ---------------------------------------------------------------------------

def make_rules(
    chunks: ChunkSet,
    anchor_len: int = 10,
    placeholder: str = DEFAULT_PLACEHOLDER,
) -> RuleList:
    """Anchor rules from real chunks: first/last ``anchor_len`` characters
    around one placeholder. Chunks of at most 2 * anchor_len characters
    become literal rules (anchors would overlap)."""
    if anchor_len < 1:
        raise ValueError("anchor_len must be >= 1")
    rules = []
    for chunk in chunks.chunks:
        text = chunk.text
        if len(text) <= 2 * anchor_len:
            rules.append(ChunkRule(prefix=text, placeholder=None))
        else:
            rules.append(ChunkRule(
                prefix=text[:anchor_len],
                placeholder=placeholder,
                suffix=text[-anchor_len:],
            ))
    return RuleList(rules=tuple(rules), source="anchors")


def label_granularity(chunks: ChunkSet) -> GranularityLabel:
    """Granularity label of a chunking from its mean chunk length."""
    if not chunks.chunks:
        raise ValueError("cannot label an empty chunk set")
    return label_for_mean(chunks.mean_length())


# ---------------------------------------------------------------------------
# Training samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RouterSample:
    """A ~target-length text with the granularity label of its source doc."""

    doc_id: str
    text: str
    label: GranularityLabel


@dataclass(frozen=True)
class ChunkerSample:
    """A prompt/target pair for one granularity expert."""

    doc_id: str
    label: GranularityLabel
    prompt: str
    target: str


def shape_router_texts(
    pairs: Iterable[tuple[Document, ChunkSet]],
    target_chars: int = 1024,
) -> list[RouterSample]:
    """Build router samples by keeping whole-chunk prefixes closest to the
    target length (never splitting a chunk; ties go to fewer chunks).

    Documents whose smallest chunk exceeds twice the target are skipped
    with a notice.
    """
    if target_chars < 1:
        raise ValueError("target_chars must be >= 1")
    samples: list[RouterSample] = []
    for doc, chunkset in pairs:
        if not chunkset.chunks:
            logger.warning("doc %s: empty chunk set skipped", doc.id)
            continue
        if min(len(c) for c in chunkset.chunks) > 2 * target_chars:
            logger.warning(
                "doc %s: smallest chunk exceeds 2x target (%d), skipped",
                doc.id, 2 * target_chars,
            )
            continue
        first = chunkset.chunks[0].start
        best_k = 1
        best_gap = abs((chunkset.chunks[0].end - first) - target_chars)
        for k in range(2, len(chunkset.chunks) + 1):
            gap = abs((chunkset.chunks[k - 1].end - first) - target_chars)
            if gap < best_gap:
                best_k, best_gap = k, gap
        end = chunkset.chunks[best_k - 1].end
        samples.append(RouterSample(
            doc_id=doc.id,
            text=doc.text[first:end],
            label=label_granularity(chunkset),
        ))
    return samples


def build_chunker_samples(
    doc: Document,
    chunkset: ChunkSet,
    anchor_len: int = 10,
    placeholder: str = DEFAULT_PLACEHOLDER,
    max_window_tokens: int = 1024,
    chars_per_token: float = 1.0,
    prompt_template: str = prompts.RULE_CHUNK_PROMPT,
) -> list[ChunkerSample]:
    """Expert training pairs: per window, the rule-chunking prompt over the
    window text and the rule list of the chunks falling inside it."""
    label = label_granularity(chunkset)
    samples = []
    for window in sliding_windows(doc, max_tokens=max_window_tokens,
                                  chars_per_token=chars_per_token):
        inside = [
            c for c in chunkset.chunks
            if c.start >= window.start and c.end <= window.end
        ]
        if not inside:
            continue
        window_rules = make_rules(
            ChunkSet(doc_id=doc.id,
                     chunks=tuple(
                         replace(c, index=i) for i, c in enumerate(inside)
                     ),
                     method=chunkset.method),
            anchor_len=anchor_len,
            placeholder=placeholder,
        )
        samples.append(ChunkerSample(
            doc_id=doc.id,
            label=label,
            prompt=prompts.render(
                prompt_template,
                text=doc.text[window.start:window.end],
                placeholder=placeholder,
            ),
            target=render_rule_targets(window_rules),
        ))
    return samples


def emit_training_sets(
    samples: Sequence[RouterSample | ChunkerSample],
    out_dir: str | Path,
) -> dict:
    """Partition samples into per-label expert files plus one router file.

    Writes ``expert_<label>.jsonl`` for each granularity label, plus
    ``router.jsonl`` and ``manifest.json``. A document id appearing under
    two different labels is an error (label buckets must be independent);
    empty buckets produce manifest warnings.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    chunker = [s for s in samples if isinstance(s, ChunkerSample)]
    router = [s for s in samples if isinstance(s, RouterSample)]

    doc_labels: dict[str, GranularityLabel] = {}
    for sample in chunker:
        prior = doc_labels.setdefault(sample.doc_id, sample.label)
        if prior != sample.label:
            raise ValueError(
                f"doc {sample.doc_id!r} appears under labels "
                f"{prior.value} and {sample.label.value}"
            )

    expert_counts = {}
    for label in GranularityLabel:
        bucket = [s for s in chunker if s.label == label]
        path = out_dir / f"expert_{label.value}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for s in bucket:
                fh.write(json.dumps(
                    {"doc_id": s.doc_id, "prompt": s.prompt, "target": s.target},
                    ensure_ascii=False, sort_keys=True,
                ))
                fh.write("\n")
        expert_counts[str(label.value)] = len(bucket)

    router_path = out_dir / "router.jsonl"
    with router_path.open("w", encoding="utf-8") as fh:
        for s in router:
            fh.write(json.dumps(
                {"doc_id": s.doc_id, "text": s.text, "label": s.label.value},
                ensure_ascii=False, sort_keys=True,
            ))
            fh.write("\n")

    warnings = [
        f"expert bucket {label} is empty"
        for label, count in expert_counts.items() if count == 0
    ]
    manifest = {
        "expert_counts": expert_counts,
        "router_count": len(router),
        "total_samples": len(samples),
        "warnings": warnings,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    for warning in warnings:
        logger.warning("%s", warning)
    return manifest


# ---------------------------------------------------------------------------
# Distillation driver
# ---------------------------------------------------------------------------

_CHUNK_TAG = re.compile(r"<chunk>(.*?)</chunk>", re.DOTALL)


def parse_tagged_chunks(generated: str) -> list[str]:
    """Chunk texts from a <chunk>...</chunk> tagged generation."""
    found = [m.group(1) for m in _CHUNK_TAG.finditer(generated)]
    found = [t for t in found if t.strip()]
    if not found:
        raise RuleParseError("generation contains no <chunk> elements",
                             raw=generated)
    return found


@dataclass
class DistillResult:
    """Per-document outcome of the distillation pipeline."""

    chunkset: ChunkSet
    verdicts: list[CleaningVerdict] = field(default_factory=list)
    window_count: int = 0
    failed_windows: int = 0

    @property
    def flagged(self) -> int:
        return sum(1 for v in self.verdicts if v.flagged)


def distill_document(
    doc: Document,
    generator: Generator,
    prompt_template: str = prompts.DISTILL_PROMPT,
    max_window_tokens: int = 1024,
    chars_per_token: float = 1.0,
    flag_ratio: float = 0.10,
    params: GenerationParams | None = None,
) -> DistillResult:
    """Generate raw chunk texts per window, anchor them to source spans in
    order, flag hallucinations, and stitch windows via the chunk buffer."""
    windows = sliding_windows(doc, max_tokens=max_window_tokens,
                              chars_per_token=chars_per_token)
    spans: list[tuple[int, int]] = []
    verdicts: list[CleaningVerdict] = []
    region_start = 0
    failed = 0
    chunk_counter = 0
    for wi, window in enumerate(windows):
        last_window = wi == len(windows) - 1
        region = doc.text[region_start:window.end]
        prompt = prompts.render(prompt_template, text=region)
        try:
            generation = generator.generate(prompt, params or GenerationParams())
            chunk_texts = parse_tagged_chunks(generation.text)
        except (ScoringError, RuleParseError) as exc:
            logger.warning("doc %s window %d failed: %s", doc.id, wi, exc)
            failed += 1
            region_start = window.end
            continue
        window_spans: list[tuple[int, int]] = []
        cursor = region_start
        for text in chunk_texts:
            text = text.strip()
            verdict = detect_hallucination(
                text, doc, index=chunk_counter,
                search_from=min(cursor, len(doc.text) - 1),
                flag_ratio=flag_ratio,
            )
            chunk_counter += 1
            verdicts.append(verdict)
            if verdict.flagged or verdict.start >= verdict.end:
                continue
            window_spans.append((verdict.start, verdict.end))
            cursor = verdict.end
        if not last_window and len(window_spans) > 1:
            dropped = window_spans.pop()
            region_start = dropped[0]
        else:
            region_start = window.end
        spans.extend(window_spans)

    chunkset = ChunkSet.from_spans(doc, spans, method="distilled")
    return DistillResult(
        chunkset=chunkset,
        verdicts=verdicts,
        window_count=len(windows),
        failed_windows=failed,
    )
