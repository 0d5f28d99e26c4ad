"""Chunk rules: anchor prefix + placeholder + anchor suffix.

A rule locates one chunk in the source text by its first and last few
characters, with one placeholder standing in for the omitted middle. Rules
with no placeholder are literal (the full chunk text). Parsing accepts any
of the eight known placeholders regardless of which one a generation was
asked to use, since models occasionally echo a different one.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable

from .errors import RuleParseError

#: The eight literal markers a rule may use in place of a chunk's middle.
PLACEHOLDERS: tuple[str, ...] = (
    "<omitted>", "<ellipsis>", "[MASK]", "[ELLIPSIS]", ".*?", "<...>", "<.*>", "<pad>",
)

DEFAULT_PLACEHOLDER = "[MASK]"


class GranularityLabel(IntEnum):
    """Average-chunk-length class; smaller labels mean finer chunking.

    Intervals (characters, right-closed): 0 -> (0, 120], 1 -> (120, 150],
    2 -> (150, 180], 3 -> (180, +inf).
    """

    FINE = 0
    MEDIUM = 1
    COARSE = 2
    BROAD = 3

    @property
    def interval(self) -> tuple[float, float]:
        bounds = _LABEL_BOUNDS[self.value]
        return bounds


_LABEL_BOUNDS = {
    0: (0.0, 120.0),
    1: (120.0, 150.0),
    2: (150.0, 180.0),
    3: (180.0, float("inf")),
}


def label_for_mean(mean_len: float) -> GranularityLabel:
    """Map a mean chunk length onto its granularity label (right-closed)."""
    if mean_len <= 0:
        raise ValueError(f"mean length must be positive, got {mean_len}")
    if mean_len <= 120:
        return GranularityLabel.FINE
    if mean_len <= 150:
        return GranularityLabel.MEDIUM
    if mean_len <= 180:
        return GranularityLabel.COARSE
    return GranularityLabel.BROAD


@dataclass(frozen=True)
class ChunkRule:
    """One "prefix + placeholder + suffix" pattern; literal when the
    placeholder is absent (then ``prefix`` holds the whole chunk text)."""

    prefix: str
    placeholder: str | None
    suffix: str = ""

    def __post_init__(self):
        if self.placeholder is None:
            if not self.prefix:
                raise ValueError("literal rule needs non-empty text")
            if self.suffix:
                raise ValueError("literal rule must keep its text in prefix")
        else:
            if self.placeholder not in PLACEHOLDERS:
                raise ValueError(f"unknown placeholder {self.placeholder!r}")
            if not self.prefix or not self.suffix:
                raise ValueError(
                    "anchored rule needs non-empty prefix and suffix"
                )

    @property
    def literal(self) -> bool:
        return self.placeholder is None

    def pattern_text(self) -> str:
        """The rule as it appears in a generated list element."""
        if self.literal:
            return self.prefix
        return f"{self.prefix}{self.placeholder}{self.suffix}"


@dataclass(frozen=True)
class RuleList:
    """Ordered rules for one document plus provenance for auditing."""

    rules: tuple[ChunkRule, ...]
    source: str = ""
    raw: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)


def split_rule_element(element: str) -> ChunkRule:
    """Split one list element at its placeholder (earliest match wins,
    longest placeholder on position ties); no placeholder means literal."""
    if not element:
        raise RuleParseError("empty rule element", raw=element)
    hit: tuple[int, str] | None = None
    for marker in PLACEHOLDERS:
        pos = element.find(marker)
        if pos < 0:
            continue
        if hit is None or pos < hit[0] or (pos == hit[0] and len(marker) > len(hit[1])):
            hit = (pos, marker)
    if hit is None:
        return ChunkRule(prefix=element, placeholder=None)
    pos, marker = hit
    prefix = element[:pos]
    suffix = element[pos + len(marker):]
    if not prefix or not suffix:
        raise RuleParseError(
            f"placeholder {marker!r} at the edge of element {element[:60]!r}",
            raw=element,
        )
    return ChunkRule(prefix=prefix, placeholder=marker, suffix=suffix)


_QUOTED = re.compile(r'"(?:[^"\\]|\\.)*"')


def parse_rule_elements(text: str) -> list[str]:
    """Extract the string elements of the first bracketed list in ``text``.

    Tries strict JSON first; falls back to scanning quoted strings inside
    the bracket block for the almost-JSON that models tend to emit.
    """
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end <= start:
        raise RuleParseError("no bracketed list found in generation", raw=text)
    block = text[start:end + 1]
    try:
        data = json.loads(block)
        if isinstance(data, list) and all(isinstance(x, str) for x in data):
            return data
    except json.JSONDecodeError:
        pass
    elements = []
    for match in _QUOTED.finditer(block):
        try:
            elements.append(json.loads(match.group(0)))
        except json.JSONDecodeError:
            continue
    if not elements:
        raise RuleParseError("bracketed list contains no string elements", raw=text)
    return elements


def parse_rule_list(generated: str, source: str = "") -> RuleList:
    """Parse a generation into an ordered ``RuleList``."""
    elements = parse_rule_elements(generated)
    rules = tuple(split_rule_element(el) for el in elements)
    return RuleList(rules=rules, source=source, raw=generated)


def render_rule_targets(rules: Iterable[ChunkRule]) -> str:
    """Serialize rules back into the JSON list format used for training
    targets and fixture generations."""
    return json.dumps([r.pattern_text() for r in rules], ensure_ascii=False, indent=1)
