"""Shared fixtures: hand-built instances and deterministic toy corpora."""

from __future__ import annotations

import random

import pytest

from prunekit.backends.ngram import NgramBackend, fit_ngram
from prunekit.core import Instance, units_from_texts


def mk_instance(inst_id="i1", question=(), reasoning=("a",), answer=("a",), meta=None):
    return Instance(
        id=inst_id,
        question=units_from_texts(question),
        reasoning=units_from_texts(reasoning),
        answer=units_from_texts(answer),
        meta=meta or {},
    )


@pytest.fixture
def abc_unigram():
    """Unigram with p(a)=1/2, p(b)=1/4, p(c)=1/8 (and p(d)=1/8), alpha=0."""
    corpus = [["a"] * 4 + ["b"] * 2 + ["c"] + ["d"]]
    return fit_ngram(corpus, order=1, alpha=0.0)


@pytest.fixture
def abc_backend(abc_unigram):
    return NgramBackend(abc_unigram)


def random_corpus(rng: random.Random, vocab_size=20, sequences=30, max_len=25):
    vocab = [f"w{i} " for i in range(vocab_size)]
    return [
        [rng.choice(vocab) for _ in range(rng.randint(2, max_len))]
        for _ in range(sequences)
    ]


def random_instance(rng: random.Random, inst_id, vocab_size=20, max_n=20, q_len=3, a_len=2):
    vocab = [f"w{i} " for i in range(vocab_size)]
    n = rng.randint(1, max_n)
    return mk_instance(
        inst_id=inst_id,
        question=[rng.choice(vocab) for _ in range(q_len)],
        reasoning=[rng.choice(vocab) for _ in range(n)],
        answer=[rng.choice(vocab) for _ in range(a_len)],
    )
