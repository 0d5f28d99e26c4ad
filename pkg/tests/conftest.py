"""Shared fixtures and corpus generators."""

from __future__ import annotations

import random
import string

import pytest
from hypothesis import settings

from chunkkit.text import Document

# deterministic property tests, no per-example deadline on slow machines
settings.register_profile("chunkkit", deadline=None, derandomize=True)
settings.load_profile("chunkkit")

# Two disjoint letter pools for synthetic two-topic corpora.
TOPIC_A_LETTERS = "abcdef"
TOPIC_B_LETTERS = "tuvwxyz"


def make_doc(text: str, doc_id: str = "doc") -> Document:
    return Document(id=doc_id, text=text)


def random_word(rng: random.Random, letters: str = string.ascii_lowercase,
                lo: int = 3, hi: int = 8) -> str:
    return "".join(rng.choice(letters) for _ in range(rng.randint(lo, hi)))


def random_sentence(rng: random.Random, letters: str = string.ascii_lowercase,
                    words: int = 6) -> str:
    return " ".join(random_word(rng, letters) for _ in range(words)) + "."


def random_text(rng: random.Random, sentences: int = 10,
                letters: str = string.ascii_lowercase) -> str:
    return " ".join(random_sentence(rng, letters) for _ in range(sentences))


def two_topic_doc(rng: random.Random, doc_id: str = "doc",
                  sentences_per_topic: int = 6) -> tuple[Document, int]:
    """A document with a single topic shift; returns (doc, boundary offset)."""
    part_a = " ".join(
        random_sentence(rng, TOPIC_A_LETTERS) for _ in range(sentences_per_topic)
    )
    part_b = " ".join(
        random_sentence(rng, TOPIC_B_LETTERS) for _ in range(sentences_per_topic)
    )
    text = part_a + " " + part_b
    return Document(id=doc_id, text=text), len(part_a) + 1


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
