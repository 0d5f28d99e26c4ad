"""Config parsing, validation, and backend construction."""

from __future__ import annotations

import json

import pytest

from chunkkit.config import (
    BackendSpec,
    RunConfig,
    build_embedder,
    build_experts,
    build_generator,
    build_scorer,
    load_config,
    override,
    parse_config,
)
from chunkkit.errors import ConfigError
from chunkkit.rules import GranularityLabel
from chunkkit.scoring import (
    FixtureEmbedder,
    FixtureGenerator,
    FixtureScorer,
    HashEmbedder,
    NGramScorer,
)
from chunkkit.text import Document, save_corpus


class TestLoadConfig:
    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "metrics": {"k": 0.7, "graph": "sequence", "delta": 1},
            "concurrency": 3,
            "seed": 9,
        }))
        config = load_config(path)
        assert config.metrics.k == 0.7
        assert config.metrics.graph == "sequence"
        assert config.concurrency == 3
        assert config.seed == 9

    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            "scorer: {kind: ngram, order: 3, alphabet: abc}\n"
            "chunker: {method: boundary, target_len: 120, overlap: 10}\n"
        )
        config = load_config(path)
        assert config.scorer.kind == "ngram"
        assert config.chunker.method == "boundary"
        assert config.chunker.overlap == 10

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            parse_config({"scroer": {"kind": "ngram"}})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="unknown keys in 'metrics'"):
            parse_config({"metrics": {"kk": 0.8}})

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError, match="k must be in"):
            parse_config({"metrics": {"k": 1.5}})

    def test_bad_expert_label(self):
        with pytest.raises(ConfigError, match="invalid expert label"):
            parse_config({"experts": {"7": {"kind": "http"}}})

    def test_bad_placeholder(self):
        with pytest.raises(ConfigError, match="placeholder"):
            parse_config({"dataset": {"placeholder": "<nope>"}})


class TestBuildBackends:
    def test_ngram_scorer_from_corpus_file(self, tmp_path):
        corpus = tmp_path / "c.jsonl"
        save_corpus([Document(id="a", text="aab")], corpus)
        scorer = build_scorer(BackendSpec("ngram", {"order": 1,
                                                    "corpus": str(corpus)}))
        assert isinstance(scorer, NGramScorer)
        assert scorer.alphabet_size == 2

    def test_ngram_requires_corpus_or_alphabet(self):
        with pytest.raises(ConfigError, match="corpus"):
            build_scorer(BackendSpec("ngram", {"order": 2}))

    def test_fixture_scorer_from_table(self, tmp_path):
        table = tmp_path / "t.json"
        table.write_text(json.dumps({"entries": [
            {"text": "ab", "probs": [0.5, 0.5]},
        ]}))
        scorer = build_scorer(BackendSpec("fixture", {"table": str(table)}))
        assert isinstance(scorer, FixtureScorer)
        assert len(scorer.score("ab").logprobs) == 2

    def test_fixture_generator_from_table(self, tmp_path):
        table = tmp_path / "t.json"
        table.write_text(json.dumps({"entries": [
            {"prompt": "p", "response": "r"},
        ]}))
        gen = build_generator(BackendSpec("fixture", {"table": str(table)}))
        assert isinstance(gen, FixtureGenerator)
        assert gen.generate("p").text == "r"

    def test_fixture_embedder_from_table(self, tmp_path):
        table = tmp_path / "t.json"
        table.write_text(json.dumps({"entries": [
            {"text": "x", "vector": [1.0, 0.0]},
        ]}))
        emb = build_embedder(BackendSpec("fixture", {"table": str(table)}))
        assert isinstance(emb, FixtureEmbedder)
        assert list(emb.embed("x")) == [1.0, 0.0]

    def test_hash_embedder(self):
        emb = build_embedder(BackendSpec("hash", {"dim": 16}))
        assert isinstance(emb, HashEmbedder)
        assert emb.dim == 16

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="scorer kind"):
            build_scorer(BackendSpec("quantum", {}))

    def test_http_options_validated(self):
        with pytest.raises(ConfigError, match="unknown http options"):
            build_scorer(BackendSpec("http", {"endpoint": "http://x",
                                              "model": "m", "portt": 1}))

    def test_experts_require_all_labels(self, tmp_path):
        table = tmp_path / "t.json"
        table.write_text(json.dumps({"entries": [
            {"prompt": "p", "response": "r"},
        ]}))
        spec = BackendSpec("fixture", {"table": str(table)})
        config = parse_config({})
        with pytest.raises(ConfigError, match="missing for labels"):
            build_experts(override(config, experts={0: spec}))
        full = override(config, experts={i: spec for i in range(4)})
        experts = build_experts(full)
        assert set(experts) == set(GranularityLabel)


class TestOverride:
    def test_section_patch_ignores_none(self):
        config = RunConfig()
        patched = override(config, metrics={"k": None, "delta": 2})
        assert patched.metrics.k == 0.8
        assert patched.metrics.delta == 2

    def test_no_patch_returns_same_values(self):
        config = RunConfig()
        assert override(config, metrics={"k": None}) == config
