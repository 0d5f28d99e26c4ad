"""Run configuration: one structured file wiring backends and parameters.

JSON or YAML by extension. Every key can be overridden by a CLI flag of the
same name; only endpoint secrets come from environment variables (via each
backend's ``api_key_env``). Seeded randomness funnels through one root seed;
consumers derive child seeds from it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .backends import BackendHandle, HttpEmbedder, HttpGenerator, HttpScorer
from .errors import ConfigError
from .rules import DEFAULT_PLACEHOLDER, PLACEHOLDERS, GranularityLabel
from .scoring import (
    FixtureEmbedder,
    FixtureGenerator,
    FixtureScorer,
    HashEmbedder,
    NGramScorer,
)

_SCORER_KINDS = ("http", "ngram", "fixture")
_GENERATOR_KINDS = ("http", "fixture")
_EMBEDDER_KINDS = ("http", "hash", "fixture")


@dataclass(frozen=True)
class BackendSpec:
    """One backend role: a kind plus kind-specific options."""

    kind: str
    options: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, raw: Mapping[str, Any], role: str) -> "BackendSpec":
        if not isinstance(raw, Mapping) or "kind" not in raw:
            raise ConfigError(f"backend {role!r} needs a 'kind' key")
        options = {k: v for k, v in raw.items() if k != "kind"}
        return cls(kind=str(raw["kind"]), options=options)


@dataclass(frozen=True)
class MetricsParams:
    k: float = 0.8
    graph: str = "complete"
    delta: int = 0

    def __post_init__(self):
        if not (0.0 < self.k < 1.0):
            raise ConfigError(f"metrics.k must be in (0, 1), got {self.k}")
        if self.graph not in ("complete", "sequence"):
            raise ConfigError(f"metrics.graph must be complete|sequence")
        if self.delta < 0:
            raise ConfigError("metrics.delta must be >= 0")


@dataclass(frozen=True)
class ChunkerParams:
    method: str = "fixed"
    target_len: int = 178
    overlap: int = 0
    threshold: float = 0.5
    unit: str = "chars"


@dataclass(frozen=True)
class DatasetParams:
    max_window_tokens: int = 1024
    chars_per_token: float = 1.0
    anchor_len: int = 10
    placeholder: str = DEFAULT_PLACEHOLDER
    router_target_chars: int = 1024
    flag_ratio: float = 0.10

    def __post_init__(self):
        if self.placeholder not in PLACEHOLDERS:
            raise ConfigError(f"unknown placeholder {self.placeholder!r}")


@dataclass(frozen=True)
class RunConfig:
    scorer: BackendSpec | None = None
    generator: BackendSpec | None = None
    embedder: BackendSpec | None = None
    router: BackendSpec | None = None
    experts: Mapping[int, BackendSpec] = field(default_factory=dict)
    metrics: MetricsParams = field(default_factory=MetricsParams)
    chunker: ChunkerParams = field(default_factory=ChunkerParams)
    dataset: DatasetParams = field(default_factory=DatasetParams)
    concurrency: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")


def load_config(path: str | Path) -> RunConfig:
    """Parse a JSON or YAML config file into a validated RunConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        raw = yaml.safe_load(text)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: config must be a mapping")
    return parse_config(raw)


def parse_config(raw: Mapping[str, Any]) -> RunConfig:
    known = {
        "scorer", "generator", "embedder", "router", "experts",
        "metrics", "chunker", "dataset", "concurrency", "seed",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def section(name: str, cls):
        data = raw.get(name, {})
        if not isinstance(data, Mapping):
            raise ConfigError(f"config section {name!r} must be a mapping")
        allowed = {f.name for f in fields(cls)}
        bad = set(data) - allowed
        if bad:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"invalid section {name!r}: {exc}") from exc

    experts_raw = raw.get("experts", {}) or {}
    if not isinstance(experts_raw, Mapping):
        raise ConfigError("'experts' must map labels 0-3 to backends")
    experts = {}
    for key, value in experts_raw.items():
        try:
            label = int(key)
            GranularityLabel(label)
        except ValueError as exc:
            raise ConfigError(f"invalid expert label {key!r}") from exc
        experts[label] = BackendSpec.parse(value, f"experts.{key}")

    return RunConfig(
        scorer=BackendSpec.parse(raw["scorer"], "scorer") if "scorer" in raw else None,
        generator=(BackendSpec.parse(raw["generator"], "generator")
                   if "generator" in raw else None),
        embedder=(BackendSpec.parse(raw["embedder"], "embedder")
                  if "embedder" in raw else None),
        router=BackendSpec.parse(raw["router"], "router") if "router" in raw else None,
        experts=experts,
        metrics=section("metrics", MetricsParams),
        chunker=section("chunker", ChunkerParams),
        dataset=section("dataset", DatasetParams),
        concurrency=int(raw.get("concurrency", 1)),
        seed=int(raw.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# Backend construction
# ---------------------------------------------------------------------------

def _handle_from(options: Mapping[str, Any], role: str) -> BackendHandle:
    allowed = {f.name for f in fields(BackendHandle)}
    bad = set(options) - allowed
    if bad:
        raise ConfigError(f"unknown http options for {role!r}: {sorted(bad)}")
    try:
        return BackendHandle(**options)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid http backend {role!r}: {exc}") from exc


def build_scorer(spec: BackendSpec, role: str = "scorer"):
    if spec.kind == "http":
        return HttpScorer(_handle_from(spec.options, role))
    if spec.kind == "ngram":
        order = int(spec.options.get("order", 2))
        corpus_path = spec.options.get("corpus")
        texts: list[str] = []
        if corpus_path:
            from .text import load_corpus  # local import avoids a cycle

            texts = [d.text for d in load_corpus(corpus_path)]
        alphabet = spec.options.get("alphabet")
        if not texts and not alphabet:
            raise ConfigError(
                f"ngram backend {role!r} needs 'corpus' and/or 'alphabet'"
            )
        return NGramScorer(order=order, corpus=texts, alphabet=alphabet)
    if spec.kind == "fixture":
        table_path = spec.options.get("table")
        if not table_path:
            raise ConfigError(f"fixture backend {role!r} needs a 'table' file")
        scorer = FixtureScorer()
        for entry in _fixture_entries(table_path, role):
            scorer.add(
                entry.get("text", ""),
                entry.get("context"),
                logprobs=entry.get("logprobs"),
                probs=entry.get("probs"),
            )
        return scorer
    raise ConfigError(f"scorer kind must be one of {_SCORER_KINDS}, "
                      f"got {spec.kind!r}")


def build_generator(spec: BackendSpec, role: str = "generator"):
    if spec.kind == "http":
        return HttpGenerator(_handle_from(spec.options, role))
    if spec.kind == "fixture":
        table_path = spec.options.get("table")
        if not table_path:
            raise ConfigError(f"fixture backend {role!r} needs a 'table' file")
        generator = FixtureGenerator(model=str(spec.options.get("model", "fixture")))
        for entry in _fixture_entries(table_path, role):
            generator.add(
                entry["prompt"], entry["response"],
                entry.get("finish_reason", "stop"),
            )
        return generator
    raise ConfigError(f"generator kind must be one of {_GENERATOR_KINDS}, "
                      f"got {spec.kind!r}")


def build_embedder(spec: BackendSpec, role: str = "embedder"):
    if spec.kind == "http":
        return HttpEmbedder(_handle_from(spec.options, role))
    if spec.kind == "hash":
        return HashEmbedder(
            dim=int(spec.options.get("dim", 64)),
            ngram=int(spec.options.get("ngram", 3)),
        )
    if spec.kind == "fixture":
        table_path = spec.options.get("table")
        if not table_path:
            raise ConfigError(f"fixture backend {role!r} needs a 'table' file")
        embedder = FixtureEmbedder()
        for entry in _fixture_entries(table_path, role):
            embedder.add(entry["text"], entry["vector"])
        return embedder
    raise ConfigError(f"embedder kind must be one of {_EMBEDDER_KINDS}, "
                      f"got {spec.kind!r}")


def _fixture_entries(table_path: str, role: str) -> list[dict]:
    path = Path(table_path)
    if not path.exists():
        raise ConfigError(f"fixture table for {role!r} not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"fixture table {path}: invalid JSON: {exc}") from exc
    entries = data.get("entries") if isinstance(data, dict) else None
    if not isinstance(entries, list):
        raise ConfigError(f"fixture table {path} needs an 'entries' list")
    return entries


def build_experts(config: RunConfig) -> dict[GranularityLabel, Any]:
    """Generators for all four labels; missing labels are a config error."""
    missing = [
        lab.value for lab in GranularityLabel if lab.value not in config.experts
    ]
    if missing:
        raise ConfigError(f"experts missing for labels {missing}")
    return {
        GranularityLabel(label): build_generator(spec, f"experts.{label}")
        for label, spec in config.experts.items()
    }


def override(config: RunConfig, **section_updates: Mapping[str, Any]) -> RunConfig:
    """Return a copy with per-section field overrides (CLI flags)."""
    updates: dict[str, Any] = {}
    for name, patch in section_updates.items():
        patch = {k: v for k, v in patch.items() if v is not None}
        if not patch:
            continue
        current = getattr(config, name)
        if isinstance(current, (MetricsParams, ChunkerParams, DatasetParams)):
            updates[name] = replace(current, **patch)
        else:
            updates[name] = patch
    return replace(config, **updates) if updates else config
