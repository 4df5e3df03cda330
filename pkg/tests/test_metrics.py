"""Metric oracles: perplexity, both coherences, diversity, rank statistics."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_coherence
from topicbench.corpus import Corpus, Vocabulary, build_cooccurrence
from topicbench.errors import DataError, DegenerateModelError
from topicbench.metrics import (
    Thresholds,
    coherence_intratext,
    coherence_toptoken,
    diversity,
    evaluate_topics,
    kl_divergence,
    percentile,
    perplexity,
    relative_density,
    run_lengths,
    top_words,
    topic_assignments,
)
from topicbench.model import init_model, em_fit


def corpus_from_docs(docs):
    """Build a bag-of-words corpus straight from lists of token ids."""
    used = sorted({w for doc in docs for w in doc})
    remap = {w: i for i, w in enumerate(used)}
    df = np.zeros(len(used), dtype=np.int64)
    token_ids: list[int] = []
    counts: list[int] = []
    doc_ptr = [0]
    for doc in docs:
        bag = Counter(remap[w] for w in doc)
        for w in sorted(bag):
            token_ids.append(w)
            counts.append(bag[w])
        for w in set(bag):
            df[w] += 1
        doc_ptr.append(len(token_ids))
    vocabulary = Vocabulary(tuple(f"w{w}" for w in used), df)
    return Corpus(
        vocabulary,
        [f"d{i}" for i in range(len(docs))],
        np.asarray(token_ids, dtype=np.int32),
        np.asarray(counts, dtype=np.int64),
        np.asarray(doc_ptr, dtype=np.int64),
    )


# -- perplexity ---------------------------------------------------------------


def test_uniform_model_perplexity_is_vocab_size():
    for w in (2, 17, 400):
        n = 123
        assert perplexity(n * math.log(1.0 / w), n) == pytest.approx(w, rel=1e-12)


def test_hand_perplexity_two_tokens(bow_corpus):
    corpus = bow_corpus(["d1\ta:1 b:1"])
    phi = np.array([[0.5], [0.5]])
    model = init_model(2, 1, seed=0, num_documents=1)
    model.phi = phi
    ll = model.log_likelihood(corpus)
    assert perplexity(ll, corpus.total_tokens) == pytest.approx(2.0, rel=1e-12)


def test_perplexity_rejects_empty_sample():
    with pytest.raises(ValueError):
        perplexity(-1.0, 0)


# -- top words ----------------------------------------------------------------


def test_top_words_order_and_tie_break():
    column = np.array([0.1, 0.4, 0.4, 0.0, 0.1])
    assert top_words(column, k=4).tolist() == [1, 2, 0, 4]


def test_top_words_excludes_zeros():
    column = np.array([0.0, 0.6, 0.0, 0.4])
    assert top_words(column, k=10).tolist() == [1, 3]
    assert top_words(np.zeros(4), k=5).tolist() == []


# -- top-token coherence --------------------------------------------------------


def test_hand_pmi_is_ln_two():
    corpus = corpus_from_docs([[0, 1], [0, 1], [2], [3]])
    cooc = build_cooccurrence(corpus)
    assert coherence_toptoken([0, 1], cooc) == pytest.approx(math.log(2.0), rel=1e-12)


def test_coherence_needs_two_tokens():
    corpus = corpus_from_docs([[0, 1], [0]])
    cooc = build_cooccurrence(corpus)
    assert coherence_toptoken([0], cooc) == 0.0
    assert coherence_toptoken([], cooc) == 0.0


def test_never_cooccurring_pair_contributes_zero():
    corpus = corpus_from_docs([[0], [1], [0, 1], [2]])
    cooc = build_cooccurrence(corpus)
    # pair (0,2) never co-occurs; pair (0,1) has pmi ln((1/4)/(1/2 * 1/2)) = 0
    assert coherence_toptoken([0, 2], cooc) == 0.0
    assert coherence_toptoken([0, 1], cooc) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    docs=st.lists(
        st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=12),
        min_size=1,
        max_size=6,
    ),
    k=st.integers(min_value=2, max_value=5),
)
def test_coherence_matches_brute_force(docs, k):
    corpus = corpus_from_docs(docs)
    cooc = build_cooccurrence(corpus)
    ids = list(range(min(k, corpus.vocab_size)))
    doc_sets = [set(doc.token_ids.tolist()) for doc in corpus]
    expected = brute_coherence(ids, doc_sets)
    assert coherence_toptoken(ids, cooc) == pytest.approx(expected, rel=1e-12, abs=1e-12)


# -- intra-text coherence -------------------------------------------------------


def test_topic_assignment_ties_go_to_lowest_index():
    phi = np.array([[0.4, 0.4, 0.2]])
    assert topic_assignments(phi).tolist() == [0]


def test_topic_assignment_weighs_by_topic_size():
    phi = np.array([[0.4, 0.6]])
    assert topic_assignments(phi).tolist() == [1]
    assert topic_assignments(phi, topic_sizes=np.array([2.0, 1.0])).tolist() == [0]


def test_zero_probability_token_is_unassigned():
    phi = np.array([[0.0, 0.0], [0.5, 0.5]])
    assert topic_assignments(phi).tolist() == [-1, 0]


def test_run_lengths_hand_stream():
    totals, counts = run_lengths(np.array([0, 0, 1, 0, 0, 0]), num_topics=2)
    assert totals.tolist() == [5.0, 1.0]
    assert counts.tolist() == [2, 1]


def test_run_lengths_unassigned_breaks_runs():
    totals, counts = run_lengths(np.array([0, -1, 0]), num_topics=1)
    assert totals.tolist() == [2.0]
    assert counts.tolist() == [2]
    empty_totals, empty_counts = run_lengths(np.array([], dtype=np.int64), num_topics=2)
    assert not empty_totals.any() and not empty_counts.any()


def test_intratext_hand_stream(seq_corpus):
    corpus = seq_corpus(["d1\ta a b a a a"])
    phi = np.array([[0.9, 0.1], [0.1, 0.9]])
    values = coherence_intratext(phi, corpus, topic_sizes=np.array([1.0, 1.0]))
    assert values[0] == pytest.approx(2.5)
    assert values[1] == pytest.approx(1.0)


def test_intratext_single_topic_is_mean_doc_length(seq_corpus):
    corpus = seq_corpus(["d1\ta b a", "d2\tb b a c b"])
    phi = np.full((3, 1), 1.0 / 3)
    values = coherence_intratext(phi, corpus)
    assert values.tolist() == [4.0]


def test_intratext_never_assigned_topic_scores_zero(seq_corpus):
    corpus = seq_corpus(["d1\ta b a b"])
    phi = np.array([[0.9, 0.0], [0.8, 0.2]])
    values = coherence_intratext(phi, corpus, topic_sizes=np.array([1.0, 1.0]))
    assert values[1] == 0.0


def test_intratext_requires_word_order(bow_corpus):
    corpus = bow_corpus(["d1\ta:2 b:1"])
    with pytest.raises(DataError):
        coherence_intratext(np.full((2, 1), 0.5), corpus)


@settings(max_examples=40, deadline=None)
@given(
    streams=st.lists(
        st.lists(st.integers(min_value=0, max_value=2), min_size=1, max_size=15),
        min_size=1,
        max_size=4,
    )
)
def test_run_statistics_match_brute_force(streams):
    num_topics = 3
    totals = np.zeros(num_topics)
    counts = np.zeros(num_topics, dtype=np.int64)
    for stream in streams:
        t, c = run_lengths(np.asarray(stream, dtype=np.int64), num_topics)
        totals += t
        counts += c
    for topic in range(num_topics):
        # pool runs across documents, matching the corpus-level mean
        lengths = []
        for stream in streams:
            run = 0
            for value in stream + [-1]:
                if value == topic:
                    run += 1
                elif run:
                    lengths.append(run)
                    run = 0
        if lengths:
            assert counts[topic] == len(lengths)
            assert totals[topic] / counts[topic] == pytest.approx(sum(lengths) / len(lengths))
        else:
            assert counts[topic] == 0


# -- diversity ------------------------------------------------------------------


def test_kl_divergence_hand_value():
    assert kl_divergence(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0
    expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    assert kl_divergence(np.array([0.5, 0.5]), np.array([0.25, 0.75])) == pytest.approx(expected, rel=1e-12)


def test_diversity_identical_columns_is_zero():
    phi = np.tile(np.array([[0.3], [0.7]]), (1, 3))
    assert diversity(phi) == 0.0


def test_diversity_hand_value():
    phi = np.array([[0.5, 0.25], [0.5, 0.75]])
    kl_pq = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    kl_qp = 0.25 * math.log(0.25 / 0.5) + 0.75 * math.log(0.75 / 0.5)
    expected = math.sqrt(0.5 * (kl_pq + kl_qp))
    assert diversity(phi) == pytest.approx(expected, rel=1e-12)
    assert diversity(phi) == pytest.approx(0.3705, abs=5e-4)


def test_diversity_disjoint_one_hot_hits_floor():
    phi = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert diversity(phi) == pytest.approx(math.sqrt(math.log(1e12)), rel=1e-6)


def test_diversity_skips_degenerate_and_respects_subset():
    phi = np.array([[1.0, 0.0, 0.3], [0.0, 0.0, 0.7]])
    value = diversity(phi)  # column 1 is degenerate, pairs are (0, 2) only
    assert value == pytest.approx(math.sqrt(0.5 * (kl_divergence(phi[:, 0], phi[:, 2]) + kl_divergence(phi[:, 2], phi[:, 0]))))
    with pytest.raises(DegenerateModelError):
        diversity(phi, topics=[0, 1])


# -- rank statistics --------------------------------------------------------------


def test_percentile_hand_values():
    values = list(range(1, 11))
    assert percentile(values, 0.8) == pytest.approx(8.2)
    assert percentile(values, 0.0) == 1.0
    assert percentile(values, 1.0) == 10.0
    assert percentile([7.0], 0.3) == 7.0


def test_percentile_validation():
    with pytest.raises(ValueError):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1.0], 1.5)


def test_relative_density_hand_values():
    assert relative_density(2, 20, 0.2) == pytest.approx(0.5)
    assert relative_density(1, 2, 0.2) == pytest.approx(2.5)
    assert relative_density(4, 20, 0.2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_density(1, 0, 0.2)
    with pytest.raises(ValueError):
        relative_density(1, 10, 0.0)


# -- thresholds --------------------------------------------------------------------


def test_thresholds_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        Thresholds(theta_good=0.1, theta_bad=0.5)
    th = Thresholds(theta_good=0.8, theta_bad=0.2, source="pool")
    assert Thresholds.from_dict(th.to_dict()) == th
    path = tmp_path / "thresholds.json"
    th.save(path)
    assert Thresholds.load(path) == th
    with pytest.raises(DataError):
        Thresholds.load(tmp_path / "missing.json")


# -- topic evaluation cards ----------------------------------------------------------


def test_evaluate_topics_flags_degenerate_and_skips_background(corpus_small, cooc_small):
    corpus, _ = corpus_small
    from topicbench.model import default_roles

    model = init_model(corpus.vocab_size, 4, seed=1, num_documents=corpus.num_documents)
    model.roles = default_roles(4, background_topics=1)
    em_fit(model, corpus, iterations=3)
    model.phi[:, 1] = 0.0  # force one degenerate domain topic
    model.compute_topic_sizes(corpus)
    cards = evaluate_topics(model, corpus, cooc_small, with_intratext=True)
    assert [c.topic for c in cards] == [0, 1, 2]  # background column 3 excluded
    bad = cards[1]
    assert bad.degenerate
    assert bad.coherence == 0.0
    assert len(bad.top_token_ids) == 0
    assert all(c.intratext is not None for c in cards)
    card = cards[0].to_dict(corpus.vocabulary)
    assert all(isinstance(tok, str) for tok in card["top_tokens"])
