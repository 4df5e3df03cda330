"""Shared fixtures: small synthetic corpora and quick pooled thresholds.

Session scope keeps the expensive trainings to one per run; tests must not
mutate these fixtures.
"""

from __future__ import annotations

import pytest

from topicbench.corpus import build_cooccurrence, parse_bow, parse_sequences
from topicbench.harness import pool_thresholds
from topicbench.synth import synth_corpus


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def bow_corpus(tmp_path):
    """Factory: build a corpus from bag-of-words lines 'doc\\ttok:cnt ...'."""

    def build(lines):
        return parse_bow(write_lines(tmp_path / "corpus.bow", lines))

    return build


@pytest.fixture
def seq_corpus(tmp_path):
    """Factory: build a corpus from sequence lines 'doc\\ttok tok tok'."""

    def build(lines):
        return parse_sequences(write_lines(tmp_path / "corpus.seq", lines))

    return build


@pytest.fixture(scope="session")
def corpus_small():
    corpus, truth = synth_corpus(seed=101, vocab_size=50, n_topics=5, n_docs=150, mean_len=60)
    return corpus, truth


@pytest.fixture(scope="session")
def cooc_small(corpus_small):
    corpus, _ = corpus_small
    return build_cooccurrence(corpus)


@pytest.fixture(scope="session")
def thresholds_small(corpus_small, cooc_small):
    """Pooled thresholds over quick baseline series on the small corpus."""
    corpus, _ = corpus_small
    tok, intra, _series = pool_thresholds(
        corpus, num_topics=5, runs=2, em_iterations=10, cooc=cooc_small
    )
    return tok, intra
