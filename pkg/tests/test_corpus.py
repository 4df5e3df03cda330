"""Corpus ingestion, filtering, persistence, and co-occurrence counting."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicbench.corpus import (
    Corpus,
    build_cooccurrence,
    filter_vocabulary,
    parse_bow,
    parse_sequences,
    unigram_distribution,
)
from topicbench.errors import ConfigError, DataError


def test_parse_bow_hand_example(bow_corpus):
    corpus = bow_corpus(["d1\ta:2 b:1", "d2\tb:3"])
    assert corpus.num_documents == 2
    assert corpus.vocab_size == 2
    assert corpus.total_tokens == 6
    doc = corpus.document(0)
    by_surface = {corpus.vocabulary.surfaces[t]: c for t, c in zip(doc.token_ids, doc.counts)}
    assert by_surface == {"a": 2, "b": 1}
    corpus.validate()


def test_parse_bow_sums_repeated_tokens(bow_corpus):
    corpus = bow_corpus(["d1\ta:2 a:3 b:1"])
    doc = corpus.document(0)
    by_surface = {corpus.vocabulary.surfaces[t]: c for t, c in zip(doc.token_ids, doc.counts)}
    assert by_surface == {"a": 5, "b": 1}


def test_parse_bow_skips_blank_lines(bow_corpus):
    corpus = bow_corpus(["d1\ta:1", "", "d2\tb:1", ""])
    assert corpus.num_documents == 2


def test_parse_bow_malformed_field_reports_location(bow_corpus):
    with pytest.raises(DataError, match=r":2"):
        bow_corpus(["d1\ta:1", "d2\tnocount"])


def test_parse_bow_malformed_count(bow_corpus):
    with pytest.raises(DataError, match="count"):
        bow_corpus(["d1\ta:zzz"])


def test_parse_bow_duplicate_doc_id(bow_corpus):
    with pytest.raises(DataError, match="duplicate"):
        bow_corpus(["d1\ta:1", "d1\tb:1"])


def test_parse_sequences_keeps_order_and_derives_bow(seq_corpus):
    corpus = seq_corpus(["d1\ta b a a", "d2\tb b"])
    assert corpus.has_sequences
    doc = corpus.document(0)
    surfaces = [corpus.vocabulary.surfaces[t] for t in doc.sequence]
    assert surfaces == ["a", "b", "a", "a"]
    by_surface = {corpus.vocabulary.surfaces[t]: c for t, c in zip(doc.token_ids, doc.counts)}
    assert by_surface == {"a": 3, "b": 1}
    corpus.validate()


def test_parse_sequences_rejects_empty_document(seq_corpus):
    with pytest.raises(DataError):
        seq_corpus(["d1\t"])


def test_roundtrip_bow(bow_corpus, tmp_path):
    corpus = bow_corpus(["d1\ta:2 b:1", "d2\tb:3 c:1"])
    path = tmp_path / "c.tbc"
    corpus.save(path)
    loaded = Corpus.load(path)
    loaded.validate()
    assert loaded.doc_ids == corpus.doc_ids
    assert list(loaded.vocabulary.surfaces) == list(corpus.vocabulary.surfaces)
    assert np.array_equal(loaded.token_ids, corpus.token_ids)
    assert np.array_equal(loaded.counts, corpus.counts)
    assert np.array_equal(loaded.doc_ptr, corpus.doc_ptr)
    assert loaded.seq_tokens is None


def test_roundtrip_sequences(seq_corpus, tmp_path):
    corpus = seq_corpus(["d1\ta b a", "d2\tc c b"])
    path = tmp_path / "c.tbc"
    corpus.save(path)
    loaded = Corpus.load(path)
    loaded.validate()
    assert loaded.has_sequences
    assert np.array_equal(loaded.seq_tokens, corpus.seq_tokens)
    assert np.array_equal(loaded.seq_ptr, corpus.seq_ptr)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tbc"
    path.write_bytes(b"definitely not a corpus")
    with pytest.raises(DataError):
        Corpus.load(path)


def test_filter_df_min(bow_corpus):
    corpus = bow_corpus(["d1\ta:1 b:1", "d2\ta:1 c:1", "d3\ta:1"])
    filtered = filter_vocabulary(corpus, df_min=2)
    assert set(filtered.vocabulary.surfaces) == {"a"}
    assert filtered.num_documents == 3


def test_filter_df_max_drops_ubiquitous(bow_corpus):
    corpus = bow_corpus(["d1\ta:1 b:1", "d2\ta:1 c:1", "d3\ta:1 b:1", "d4\ta:1 c:1"])
    filtered = filter_vocabulary(corpus, df_max=0.75)
    assert "a" not in set(filtered.vocabulary.surfaces)


def test_filter_drops_emptied_documents(bow_corpus):
    corpus = bow_corpus(["d1\tc:1", "d2\ta:1 b:1", "d3\ta:1 b:1"])
    filtered = filter_vocabulary(corpus, df_min=2)
    assert set(filtered.vocabulary.surfaces) == {"a", "b"}
    assert filtered.num_documents == 2
    assert list(filtered.doc_ids) == ["d2", "d3"]


def test_filter_empty_vocabulary_raises(bow_corpus):
    corpus = bow_corpus(["d1\ta:1", "d2\tb:1"])
    with pytest.raises(DataError, match="empty vocabulary"):
        filter_vocabulary(corpus, df_min=5)


def test_filter_validates_arguments(bow_corpus):
    corpus = bow_corpus(["d1\ta:1"])
    with pytest.raises(ConfigError):
        filter_vocabulary(corpus, df_min=0)
    with pytest.raises(ConfigError):
        filter_vocabulary(corpus, df_max=1.5)


@settings(max_examples=30, deadline=None)
@given(
    docs=st.lists(
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6),
        min_size=1,
        max_size=8,
    ),
    df_min=st.integers(min_value=1, max_value=3),
)
def test_filter_is_idempotent(tmp_path_factory, docs, df_min):
    """Applying the same filter to its own output changes nothing."""
    tmp = tmp_path_factory.mktemp("filt")
    lines = [f"d{i}\t" + " ".join(f"{tok}:1" for tok in sorted(set(doc))) for i, doc in enumerate(docs)]
    path = tmp / "c.bow"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    corpus = parse_bow(path)
    try:
        once = filter_vocabulary(corpus, df_min=df_min, df_max=0.9)
    except DataError:
        return
    twice = filter_vocabulary(once, df_min=df_min, df_max=0.9)
    assert list(once.vocabulary.surfaces) == list(twice.vocabulary.surfaces)
    assert once.doc_ids == twice.doc_ids
    assert np.array_equal(once.token_ids, twice.token_ids)
    assert np.array_equal(once.counts, twice.counts)


def test_cooccurrence_hand_example(bow_corpus):
    """4 docs: {a,b}, {a,b}, {a}, {b}; df(a)=df(b)=3, joint(a,b)=2."""
    corpus = bow_corpus(["d1\ta:1 b:1", "d2\ta:5 b:2", "d3\ta:1", "d4\tb:1"])
    cooc = build_cooccurrence(corpus)
    a = corpus.vocabulary.id_of("a")
    b = corpus.vocabulary.id_of("b")
    assert cooc.doc_count == 4
    assert cooc.df(a) == 3
    assert cooc.df(b) == 3
    assert cooc.joint_df(a, b) == 2
    assert cooc.joint_df(b, a) == 2
    assert cooc.joint_df(a, a) == 3


def test_cooccurrence_counts_documents_not_tokens(bow_corpus):
    corpus = bow_corpus(["d1\ta:100 b:100"])
    cooc = build_cooccurrence(corpus)
    a = corpus.vocabulary.id_of("a")
    b = corpus.vocabulary.id_of("b")
    assert cooc.df(a) == 1
    assert cooc.joint_df(a, b) == 1


def test_unigram_distribution(bow_corpus):
    corpus = bow_corpus(["d1\ta:3 b:1"])
    dist = unigram_distribution(corpus)
    a = corpus.vocabulary.id_of("a")
    b = corpus.vocabulary.id_of("b")
    assert dist[a] == pytest.approx(0.75)
    assert dist[b] == pytest.approx(0.25)
    assert dist.sum() == pytest.approx(1.0)


def test_synthetic_corpus_validates(corpus_small):
    corpus, truth = corpus_small
    corpus.validate()
    assert corpus.has_sequences
    assert truth.phi.shape[0] == corpus.vocab_size
