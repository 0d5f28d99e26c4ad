"""LM-guided chunking: granularity routing, rule generation, extraction.

The pipeline windows a document, routes each window to a granularity
expert, asks the expert for anchor+placeholder rules, extracts chunk spans
from the source text with exact search plus edit-distance recovery, and
stitches windows with the chunk-buffer discipline (the last chunk of a
window is dropped and its text re-offered to the next window).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

from . import prompts
from .dataset import sliding_windows
from .errors import (
    AnchorNotFoundError,
    ExtractionError,
    RoutingError,
    RuleParseError,
    ScoringError,
)
from .fuzzy import recover_anchor
from .rules import (
    DEFAULT_PLACEHOLDER,
    GranularityLabel,
    RuleList,
    parse_rule_list,
)
from .scoring import GenerationParams, Generator, Scorer
from .text import ChunkSet, Document

logger = logging.getLogger(__name__)


def route(
    text: str,
    scorer: Scorer,
    prompt_template: str = prompts.ROUTER_PROMPT,
) -> GranularityLabel:
    """Pick the granularity label whose token is most probable at the end
    of the routing prompt; ties break toward the smaller (finer) label."""
    if not text:
        raise ValueError("cannot route empty text")
    prompt = prompts.render(prompt_template, text=text)
    best: tuple[float, GranularityLabel] | None = None
    errors = []
    for label in GranularityLabel:
        try:
            scored = scorer.score(str(label.value), context=prompt)
        except (ScoringError, ValueError) as exc:
            errors.append(f"{label.value}: {exc}")
            continue
        logprob = sum(scored.logprobs)
        if best is None or logprob > best[0]:
            best = (logprob, label)
    if best is None:
        raise RoutingError(
            "no probability for any label token: " + "; ".join(errors)
        )
    return best[1]


def generate_rules(
    text: str,
    label: GranularityLabel,
    generator: Generator,
    placeholder: str = DEFAULT_PLACEHOLDER,
    params: GenerationParams | None = None,
    prompt_template: str = prompts.RULE_CHUNK_PROMPT,
) -> RuleList:
    """Ask the expert for a rule list over ``text`` and parse it.

    The prompt requests one placeholder, but parsing accepts any of the
    known set. Raises :class:`RuleParseError` (raw generation attached) on
    unparseable or empty output.
    """
    if not text:
        raise ValueError("cannot chunk empty text")
    prompt = prompts.render(prompt_template, text=text, placeholder=placeholder)
    result = generator.generate(prompt, params or GenerationParams())
    source = getattr(generator, "model", type(generator).__name__)
    rule_list = parse_rule_list(result.text, source=f"{source}/label{label.value}")
    if not rule_list.rules:
        raise RuleParseError("generation produced an empty rule list",
                             raw=result.text)
    return rule_list


@dataclass(frozen=True)
class RuleMatch:
    """How one rule resolved: exact, recovered (with distance), or failed."""

    rule_index: int
    mode: str  # "exact" | "recovered" | "failed"
    distance: int = 0
    start: int | None = None
    end: int | None = None


@dataclass
class ExtractionReport:
    doc_id: str
    matches: list[RuleMatch] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for m in self.matches if m.mode == "failed")

    @property
    def recovered(self) -> int:
        return sum(1 for m in self.matches if m.mode == "recovered")


def _locate(
    needle: str, text: str, start: int, max_ratio: float
) -> tuple[int, int, int] | None:
    """(start, end, distance) of the earliest acceptable occurrence of
    ``needle`` at or after ``start``; None when nothing qualifies."""
    if start >= len(text):
        return None
    pos = text.find(needle, start)
    if pos >= 0:
        return pos, pos + len(needle), 0
    try:
        match = recover_anchor(needle, text, search_from=start, max_ratio=max_ratio)
    except AnchorNotFoundError:
        return None
    return match.start, match.end, match.distance


def _extract_spans(
    text: str,
    rules: RuleList,
    max_ratio: float,
    doc_id: str,
    base_offset: int = 0,
) -> tuple[list[tuple[int, int]], ExtractionReport]:
    """Resolve rules against ``text`` with a forward-only cursor.

    Anchors match earliest-first; the cursor advances past each resolved
    chunk, so spans come out strictly increasing and non-overlapping.
    Unresolvable rules are skipped and reported; more than 50% failures
    raise :class:`ExtractionError`.
    """
    report = ExtractionReport(doc_id=doc_id)
    spans: list[tuple[int, int]] = []
    cursor = 0
    for idx, rule in enumerate(rules.rules):
        if rule.literal:
            hit = _locate(rule.prefix, text, cursor, max_ratio)
            if hit is None:
                report.matches.append(RuleMatch(idx, "failed"))
                continue
            start, end, distance = hit
        else:
            head = _locate(rule.prefix, text, cursor, max_ratio)
            if head is None:
                report.matches.append(RuleMatch(idx, "failed"))
                continue
            tail = _locate(rule.suffix, text, head[1], max_ratio)
            if tail is None:
                report.matches.append(RuleMatch(idx, "failed"))
                continue
            start, end = head[0], tail[1]
            distance = head[2] + tail[2]
        mode = "exact" if distance == 0 else "recovered"
        report.matches.append(
            RuleMatch(idx, mode, distance, base_offset + start, base_offset + end)
        )
        spans.append((base_offset + start, base_offset + end))
        cursor = end
    if rules.rules and report.failed * 2 > len(rules.rules):
        raise ExtractionError(
            f"{report.failed} of {len(rules.rules)} rules failed to resolve",
            report=report,
        )
    return spans, report


def extract_chunks(
    doc: Document,
    rules: RuleList,
    max_ratio: float = 0.5,
    method: str = "moc",
) -> tuple[ChunkSet, ExtractionReport]:
    """Turn a rule list into document chunk spans.

    For each rule the prefix anchor is located from the cursor (exact
    search first, then recovery), the suffix anchor strictly after the
    prefix; the chunk runs from prefix start to suffix end.
    """
    if not rules.rules:
        raise ValueError("rule list is empty")
    spans, report = _extract_spans(doc.text, rules, max_ratio, doc.id)
    return ChunkSet.from_spans(doc, spans, method=method), report


def moc_chunk(
    doc: Document,
    router: Scorer,
    experts: Mapping[GranularityLabel | int, Generator],
    max_window_tokens: int = 1024,
    chars_per_token: float = 1.0,
    placeholder: str = DEFAULT_PLACEHOLDER,
    params: GenerationParams | None = None,
    max_ratio: float = 0.5,
    router_prompt: str = prompts.ROUTER_PROMPT,
    expert_prompt: str = prompts.RULE_CHUNK_PROMPT,
) -> tuple[ChunkSet, list[ExtractionReport]]:
    """Route, generate, and extract per window; stitch with the chunk buffer.

    Every label must resolve to an expert (aliases allowed). A window whose
    routing, generation, or extraction fails contributes no chunks; the
    document fails only when every window fails.
    """
    experts = {GranularityLabel(int(k)): v for k, v in experts.items()}
    missing = [lab.value for lab in GranularityLabel if lab not in experts]
    if missing:
        raise ValueError(f"no expert configured for labels {missing}")

    windows = sliding_windows(doc, max_tokens=max_window_tokens,
                              chars_per_token=chars_per_token)
    reports: list[ExtractionReport] = []
    all_spans: list[tuple[int, int]] = []
    region_start = 0
    failures = 0
    for wi, window in enumerate(windows):
        last_window = wi == len(windows) - 1
        region = doc.text[region_start:window.end]
        try:
            label = route(region, router, prompt_template=router_prompt)
            rule_list = generate_rules(
                region, label, experts[label], placeholder=placeholder,
                params=params, prompt_template=expert_prompt,
            )
            spans, report = _extract_spans(
                region, rule_list, max_ratio, doc.id, base_offset=region_start
            )
        except (RoutingError, RuleParseError, ExtractionError, ScoringError) as exc:
            logger.warning("doc %s window %d failed: %s", doc.id, wi, exc)
            failures += 1
            region_start = window.end
            continue
        reports.append(report)
        if not last_window and len(spans) > 1:
            # chunk buffer: re-offer the final chunk's text to the next window
            dropped = spans.pop()
            region_start = dropped[0]
        else:
            region_start = window.end
        all_spans.extend(spans)

    if failures == len(windows):
        raise ExtractionError(f"all {len(windows)} windows failed for doc {doc.id}")
    return ChunkSet.from_spans(doc, all_spans, method="moc"), reports
