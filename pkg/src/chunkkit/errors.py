"""Exception types shared across the toolkit."""

from __future__ import annotations


class ChunkKitError(Exception):
    """Base class for all toolkit errors."""


class CorpusFormatError(ChunkKitError):
    """A corpus or chunk-set file violates the line-record schema."""


class ScoringError(ChunkKitError):
    """Base class for scoring/generation/embedding backend failures."""


class TransportError(ScoringError):
    """Backend unreachable after the configured number of attempts."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (attempts={attempts})")
        self.attempts = attempts


class ProtocolError(ScoringError):
    """Backend returned a malformed response (e.g. token/logprob mismatch)."""


class FixtureMissingError(ScoringError):
    """A fixture backend has no entry for the requested input (fail-closed)."""


class UndefinedSimilarityError(ChunkKitError):
    """Cosine similarity requested against a zero vector."""


class UndefinedCorrelationError(ChunkKitError):
    """Pearson correlation requested for a zero-variance sequence."""


class GraphBuildError(ChunkKitError):
    """Semantic graph cannot be built (fewer than two chunks)."""


class RuleParseError(ChunkKitError):
    """A generated rule list could not be parsed.

    The offending generation text is kept on ``raw`` for auditing.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class AnchorNotFoundError(ChunkKitError):
    """No substring within the edit-distance budget matches the anchor."""

    def __init__(self, message: str, best_distance: int, limit: int):
        super().__init__(message)
        self.best_distance = best_distance
        self.limit = limit


class ExtractionError(ChunkKitError):
    """Whole-document extraction failed (too many unresolvable rules)."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class RoutingError(ChunkKitError):
    """The router backend produced no probability for any label token."""


class ConfigError(ChunkKitError):
    """Invalid or incomplete run configuration."""
