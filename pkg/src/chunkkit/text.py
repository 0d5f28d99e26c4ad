"""Document, chunk, and sentence primitives plus line-oriented corpus IO.

All offsets are Python string indices (code points) into ``Document.text``,
so ``doc.text[chunk.start:chunk.end] == chunk.text`` holds exactly for any
valid chunk, including CJK and mixed-script text. Types are immutable after
construction and safe to share across threads.

Corpus files are JSON lines, one document per line: ``{id, text, meta?}``.
Chunk-set files are JSON lines too: ``{doc_id, method, chunks: [{index,
start, end}]}`` — chunk text is never duplicated on disk, it is re-sliced
from the source document on load.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CorpusFormatError

logger = logging.getLogger(__name__)

_NEWLINES = frozenset("\n\r")


@dataclass(frozen=True)
class Document:
    """A raw long-form text with a corpus-unique id."""

    id: str
    text: str
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.id!r}: text is empty")

    def __len__(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class Chunk:
    """One contiguous span of a document."""

    doc_id: str
    index: int
    start: int
    end: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("chunk index must be >= 0")
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid chunk span [{self.start}, {self.end})")
        if len(self.text) != self.end - self.start:
            raise ValueError(
                f"chunk text length {len(self.text)} does not match span "
                f"[{self.start}, {self.end})"
            )

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ChunkSet:
    """An ordered segmentation of one document.

    Starts are strictly increasing. Chunks are normally disjoint; chunkers
    that emit overlapping spans (boundary-aware with overlap > 0) relax the
    disjointness but keep starts strictly increasing.
    """

    doc_id: str
    chunks: tuple[Chunk, ...]
    method: str

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(self.chunks))
        prev_start = -1
        for position, chunk in enumerate(self.chunks):
            if chunk.doc_id != self.doc_id:
                raise ValueError(
                    f"chunk doc_id {chunk.doc_id!r} != set doc_id {self.doc_id!r}"
                )
            if chunk.index != position:
                raise ValueError(
                    f"chunk index {chunk.index} at position {position}: "
                    "indexes must be consecutive from 0"
                )
            if chunk.start <= prev_start:
                raise ValueError("chunk starts must be strictly increasing")
            prev_start = chunk.start

    @classmethod
    def from_spans(
        cls, doc: Document, spans: Iterable[tuple[int, int]], method: str
    ) -> "ChunkSet":
        """Build a chunk set by slicing ``doc`` at the given (start, end) spans."""
        chunks = []
        for i, (start, end) in enumerate(spans):
            if end > len(doc.text):
                raise ValueError(f"span [{start}, {end}) exceeds document length")
            chunks.append(
                Chunk(doc_id=doc.id, index=i, start=start, end=end,
                      text=doc.text[start:end])
            )
        return cls(doc_id=doc.id, chunks=tuple(chunks), method=method)

    def __len__(self) -> int:
        return len(self.chunks)

    def __iter__(self) -> Iterator[Chunk]:
        return iter(self.chunks)

    def texts(self) -> list[str]:
        return [c.text for c in self.chunks]

    def mean_length(self) -> float:
        if not self.chunks:
            raise ValueError("empty chunk set has no mean length")
        return sum(len(c) for c in self.chunks) / len(self.chunks)

    def is_disjoint(self) -> bool:
        return all(
            a.end <= b.start for a, b in zip(self.chunks, self.chunks[1:])
        )

    def validate_against(self, doc: Document) -> None:
        """Check every chunk re-slices exactly from ``doc``."""
        if doc.id != self.doc_id:
            raise ValueError(f"document {doc.id!r} does not match set {self.doc_id!r}")
        for chunk in self.chunks:
            if chunk.end > len(doc.text):
                raise ValueError(
                    f"chunk {chunk.index} span [{chunk.start}, {chunk.end}) "
                    f"exceeds document length {len(doc.text)}"
                )
            if doc.text[chunk.start:chunk.end] != chunk.text:
                raise ValueError(
                    f"chunk {chunk.index} text does not match document slice"
                )


def skipped_runs(doc: Document, chunkset: ChunkSet) -> list[tuple[int, int]]:
    """Spans of the document not covered by any chunk (separator runs)."""
    gaps = []
    pos = 0
    for chunk in chunkset.chunks:
        if chunk.start > pos:
            gaps.append((pos, chunk.start))
        pos = max(pos, chunk.end)
    if pos < len(doc.text):
        gaps.append((pos, len(doc.text)))
    return gaps


def reassemble(doc: Document, chunkset: ChunkSet) -> str:
    """Interleave chunk texts with the skipped separator runs.

    For a disjoint chunk set this reconstructs ``doc.text`` exactly.
    """
    pieces = []
    pos = 0
    for chunk in chunkset.chunks:
        if chunk.start > pos:
            pieces.append(doc.text[pos:chunk.start])
        pieces.append(chunk.text)
        pos = max(pos, chunk.end)
    if pos < len(doc.text):
        pieces.append(doc.text[pos:])
    return "".join(pieces)


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SentencePolicy:
    """Which characters close a sentence.

    ``terminals`` end a sentence; any directly following ``closers`` (quotes,
    brackets) stay attached to it. Newline runs also split when
    ``split_newline_runs`` is set, with the run attached to the span it ends.
    """

    terminals: frozenset[str]
    closers: frozenset[str]
    split_newline_runs: bool = True


DEFAULT_SENTENCE_POLICY = SentencePolicy(
    terminals=frozenset(".!?;。！？；"),
    closers=frozenset("\"'”’』」》〉〕】)]"),
)


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence-like span; ``terminal`` is None at EOF / newline splits."""

    start: int
    end: int
    terminal: str | None = None

    def __len__(self) -> int:
        return self.end - self.start


def split_sentences(
    doc: Document | str, policy: SentencePolicy = DEFAULT_SENTENCE_POLICY
) -> list[SentenceSpan]:
    """Split a document into sentence spans that tile its text.

    Splits occur only after a terminal (plus trailing closers) or at newline
    runs; a text with no terminals yields a single span. Deterministic, and
    idempotent on its own output boundaries.
    """
    text = doc.text if isinstance(doc, Document) else doc
    n = len(text)
    spans: list[SentenceSpan] = []
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in policy.terminals:
            j = i + 1
            while j < n and text[j] in policy.closers:
                j += 1
            spans.append(SentenceSpan(start, j, ch))
            start = j
            i = j
        elif policy.split_newline_runs and ch in _NEWLINES:
            j = i + 1
            while j < n and text[j] in _NEWLINES:
                j += 1
            if start < i:
                # The run terminates the sentence in progress.
                spans.append(SentenceSpan(start, j, None))
                start = j
            # A run at span start just accumulates into the next span.
            i = j
        else:
            i += 1
    if start < n:
        spans.append(SentenceSpan(start, n, None))
    return spans


# ---------------------------------------------------------------------------
# Corpus and chunk-set IO
# ---------------------------------------------------------------------------

def load_corpus(path: str | Path) -> Iterator[Document]:
    """Stream documents from a JSONL corpus file.

    Lazy: one record is held in memory at a time (plus the set of seen ids
    for duplicate detection). Raises :class:`CorpusFormatError` naming the
    offending line on malformed records or duplicate ids.
    """
    path = Path(path)

    def _records() -> Iterator[Document]:
        seen: set[str] = set()
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(
                        f"{path}: line {line_no}: invalid JSON: {exc}"
                    ) from exc
                if not isinstance(record, dict) or "id" not in record \
                        or "text" not in record:
                    raise CorpusFormatError(
                        f"{path}: line {line_no}: record needs 'id' and 'text'"
                    )
                doc_id = record["id"]
                if doc_id in seen:
                    raise CorpusFormatError(
                        f"{path}: line {line_no}: duplicate document id {doc_id!r}"
                    )
                seen.add(doc_id)
                try:
                    yield Document(
                        id=doc_id,
                        text=record["text"],
                        meta=record.get("meta") or {},
                    )
                except (ValueError, TypeError) as exc:
                    raise CorpusFormatError(
                        f"{path}: line {line_no}: {exc}"
                    ) from exc

    return _records()


def save_corpus(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents as JSONL. Returns the number of records written."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            record: dict = {"id": doc.id, "text": doc.text}
            if doc.meta:
                record["meta"] = dict(doc.meta)
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def save_chunksets(chunksets: Iterable[ChunkSet], path: str | Path) -> int:
    """Write chunk sets as JSONL records of offsets (no chunk text)."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for cs in chunksets:
            record = {
                "doc_id": cs.doc_id,
                "method": cs.method,
                "chunks": [
                    {"index": c.index, "start": c.start, "end": c.end}
                    for c in cs.chunks
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def load_chunksets(
    path: str | Path,
    documents: Mapping[str, Document] | Iterable[Document],
) -> list[ChunkSet]:
    """Load chunk sets, re-slicing chunk text from the source documents."""
    path = Path(path)
    if not isinstance(documents, Mapping):
        documents = {d.id: d for d in documents}
    out: list[ChunkSet] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(
                    f"{path}: line {line_no}: invalid JSON: {exc}"
                ) from exc
            try:
                doc_id = record["doc_id"]
                method = record["method"]
                chunk_records = record["chunks"]
            except (KeyError, TypeError) as exc:
                raise CorpusFormatError(
                    f"{path}: line {line_no}: record needs "
                    "'doc_id', 'method' and 'chunks'"
                ) from exc
            doc = documents.get(doc_id)
            if doc is None:
                raise CorpusFormatError(
                    f"{path}: line {line_no}: unknown document id {doc_id!r}"
                )
            try:
                spans = [(c["start"], c["end"]) for c in chunk_records]
                out.append(ChunkSet.from_spans(doc, spans, method))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(
                    f"{path}: line {line_no}: {exc}"
                ) from exc
    return out
