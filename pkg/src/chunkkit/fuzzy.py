"""Levenshtein edit distance and approximate substring location.

The substring search finds the span of a haystack minimizing the edit
distance to a needle. It runs a free-start DP sweep (distance of the needle
to every haystack prefix-suffix, O(|needle| * |haystack|)), then recovers
the exact start for each candidate end with a reversed DP over a bounded
window. Ties are resolved smallest distance, then smallest start, then
span length closest to the needle's (a one-substitution match beats a
one-deletion match), then smallest end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AnchorNotFoundError


def edit_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions, or
    substitutions transforming ``a`` into ``b``."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        append = cur.append
        for j, cb in enumerate(b, 1):
            if ca == cb:
                append(min(cur[j - 1] + 1, prev[j] + 1, prev[j - 1]))
            else:
                append(min(cur[j - 1], prev[j], prev[j - 1]) + 1)
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class SpanMatch:
    """A located substring with its edit distance to the needle."""

    start: int
    end: int
    distance: int

    def __len__(self) -> int:
        return self.end - self.start


def _distance_per_end(needle: str, hay: str) -> list[int]:
    """Free-start DP row: entry j = min edit distance of needle to any
    substring of ``hay`` ending at j."""
    prev = [0] * (len(hay) + 1)
    for i, ca in enumerate(needle, 1):
        cur = [i]
        append = cur.append
        for j, cb in enumerate(hay, 1):
            if ca == cb:
                append(min(cur[j - 1] + 1, prev[j] + 1, prev[j - 1]))
            else:
                append(min(cur[j - 1], prev[j], prev[j - 1]) + 1)
        prev = cur
    return prev


def _best_start_for_end(needle: str, hay: str, end: int, max_len: int) -> tuple[int, int]:
    """(distance, start) of the best substring of ``hay`` ending at ``end``.

    One reversed DP yields the distance for every start in the window
    [end - max_len, end]; among minimal distances the smallest start wins.
    """
    lo = max(0, end - max_len)
    a = needle[::-1]
    b = hay[lo:end][::-1]
    prev = list(range(len(b) + 1))  # exact distances, not free-start
    for i, ca in enumerate(a, 1):
        cur = [i]
        append = cur.append
        for j, cb in enumerate(b, 1):
            if ca == cb:
                append(min(cur[j - 1] + 1, prev[j] + 1, prev[j - 1]))
            else:
                append(min(cur[j - 1], prev[j], prev[j - 1]) + 1)
        prev = cur
    # prev[k] = distance(needle, hay[end-k:end]); start = end - k.
    best_dist = min(prev)
    best_start = end - max(k for k, d in enumerate(prev) if d == best_dist)
    return best_dist, best_start


def best_substring_match(needle: str, haystack: str, search_from: int = 0) -> SpanMatch:
    """The substring of ``haystack[search_from:]`` closest to ``needle``.

    Among all spans with minimal edit distance the smallest start wins,
    then the span length closest to the needle's length, then the smallest
    end. Worst case is quadratic in the needle length around each optimal
    end, which stays cheap for the short anchors and document-sized
    haystacks this is used on.
    """
    if not needle:
        raise ValueError("needle must be non-empty")
    if not (0 <= search_from < len(haystack)):
        raise ValueError(
            f"search_from {search_from} outside haystack of length {len(haystack)}"
        )
    hay = haystack[search_from:]
    m = len(needle)

    row = _distance_per_end(needle, hay)
    d_star = min(row)
    max_len = m + d_star  # any optimal span has length in [m - d*, m + d*]

    # candidate key: (start, |length - m|, end); compared lexicographically
    best: tuple[int, int, int] | None = None
    for end, dist in enumerate(row):
        if dist != d_star:
            continue
        if best is not None and end - max_len > best[0]:
            break  # no later end can reach an earlier start
        _, start = _best_start_for_end(needle, hay, end, max_len)
        key = (start, abs((end - start) - m), end)
        if best is None or key < best:
            best = key
        if best[0] == max(0, end - max_len) and best[1] == 0:
            break  # smallest reachable start with exact length: unbeatable
    assert best is not None
    start, _, end = best
    return SpanMatch(
        start=search_from + start,
        end=search_from + end,
        distance=d_star,
    )


def recover_anchor(
    anchor: str,
    haystack: str,
    search_from: int = 0,
    max_ratio: float = 0.5,
) -> SpanMatch:
    """Locate a possibly-corrupted anchor in the haystack.

    Accepts the best span only if its edit distance is within
    ``ceil(max_ratio * len(anchor))``; otherwise raises
    :class:`AnchorNotFoundError` carrying the best distance found.
    """
    if not anchor:
        raise ValueError("anchor must be non-empty")
    limit = math.ceil(max_ratio * len(anchor))
    match = best_substring_match(anchor, haystack, search_from)
    if match.distance > limit:
        raise AnchorNotFoundError(
            f"best match distance {match.distance} exceeds limit {limit} "
            f"for anchor {anchor[:30]!r}",
            best_distance=match.distance,
            limit=limit,
        )
    return match
