"""Intrinsic quality metrics: perplexity, two coherence measures, diversity.

Coherence comes in two flavors.  The top-token variant averages positive
pointwise mutual information over the top-k word pairs of a topic, with
probabilities estimated from document frequencies.  The intra-text variant
assigns every corpus position to its most probable topic and scores a topic
by the mean length of its maximal same-topic runs, so it needs a corpus
with word order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CooccurrenceStats, Corpus
from .errors import DataError, DegenerateModelError

DIVERSITY_FLOOR = 1e-12


def perplexity(log_lik: float, n_tokens: int) -> float:
    """Per-token perplexity ``exp(-L / n)``; a uniform model scores exactly
    the vocabulary size."""
    if n_tokens <= 0:
        raise ValueError("n_tokens must be positive")
    return math.exp(-log_lik / n_tokens)


def top_words(phi_column: np.ndarray, k: int = 20) -> np.ndarray:
    """Ids of the ``k`` most probable tokens, ties broken by lower id; zero
    probabilities never make the list, so fewer than ``k`` may come back."""
    col = np.asarray(phi_column, dtype=np.float64)
    ids = np.flatnonzero(col > 0.0)
    if len(ids) == 0:
        return ids.astype(np.int64)
    order = np.lexsort((ids, -col[ids]))
    return ids[order[:k]].astype(np.int64)


def coherence_toptoken(top_ids: Sequence[int], cooc: CooccurrenceStats) -> float:
    """Mean positive PMI over all unordered pairs of the given top tokens.

    ``pmi+(i, j) = max(ln(p(i, j) / (p(i) p(j))), 0)`` with probabilities as
    document frequencies over the collection; pairs never co-occurring
    contribute zero.  Fewer than two tokens give coherence zero.
    """
    ids = list(top_ids)
    if len(ids) < 2:
        return 0.0
    n_docs = cooc.doc_count
    total = 0.0
    pairs = 0
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            pairs += 1
            joint = cooc.joint_df(i, j)
            if joint == 0:
                continue
            value = math.log(joint * n_docs / (cooc.df(i) * cooc.df(j)))
            if value > 0.0:
                total += value
    return total / pairs


def topic_assignments(phi: np.ndarray, topic_sizes: np.ndarray | None = None) -> np.ndarray:
    """Most probable topic per token type, ``argmax_t phi_wt * n_t``.

    Ties go to the lowest topic index; a token with zero probability in
    every topic gets -1 and never extends a topic's runs.
    """
    scores = phi if topic_sizes is None else phi * np.asarray(topic_sizes, dtype=np.float64)[None, :]
    assigned = scores.argmax(axis=1).astype(np.int64)
    assigned[scores.max(axis=1) <= 0.0] = -1
    return assigned


def run_lengths(stream: np.ndarray, num_topics: int) -> tuple[np.ndarray, np.ndarray]:
    """Total length and count of maximal same-value runs per topic.

    Values outside ``0..num_topics-1`` (the -1 of unassigned tokens) break
    runs and are not counted.
    """
    totals = np.zeros(num_topics, dtype=np.float64)
    counts = np.zeros(num_topics, dtype=np.int64)
    if len(stream) == 0:
        return totals, counts
    boundaries = np.flatnonzero(np.diff(stream) != 0)
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries + 1, [len(stream)]))
    for lo, hi in zip(starts, ends):
        t = stream[lo]
        if 0 <= t < num_topics:
            totals[t] += hi - lo
            counts[t] += 1
    return totals, counts


def coherence_intratext(
    phi: np.ndarray,
    corpus: Corpus,
    topic_sizes: np.ndarray | None = None,
) -> np.ndarray:
    """Mean maximal same-topic run length per topic over the whole corpus.

    A topic that is never any token's most probable topic has no runs and
    scores zero.  Requires a corpus with word order.
    """
    if not corpus.has_sequences:
        raise DataError("intra-text coherence requires a corpus with word order")
    num_topics = phi.shape[1]
    assigned = topic_assignments(phi, topic_sizes)
    totals = np.zeros(num_topics, dtype=np.float64)
    counts = np.zeros(num_topics, dtype=np.int64)
    for d in range(corpus.num_documents):
        lo, hi = corpus.seq_ptr[d], corpus.seq_ptr[d + 1]
        stream = assigned[corpus.seq_tokens[lo:hi]]
        doc_totals, doc_counts = run_lengths(stream, num_topics)
        totals += doc_totals
        counts += doc_counts
    out = np.zeros(num_topics, dtype=np.float64)
    has_runs = counts > 0
    out[has_runs] = totals[has_runs] / counts[has_runs]
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray, floor: float = DIVERSITY_FLOOR) -> float:
    """KL(p || q) with both arguments floored at ``floor`` and renormalized,
    so disjoint supports stay finite."""
    p = np.maximum(np.asarray(p, dtype=np.float64), floor)
    q = np.maximum(np.asarray(q, dtype=np.float64), floor)
    p = p / p.sum()
    q = q / q.sum()
    return float(p @ np.log(p / q))


def diversity(phi: np.ndarray, topics: Sequence[int] | None = None) -> float:
    """Mean symmetrized-KL distance ``sqrt((KL(i||j) + KL(j||i)) / 2)`` over
    all pairs of non-degenerate topics; identical columns give zero."""
    cols = np.arange(phi.shape[1]) if topics is None else np.asarray(list(topics), dtype=np.int64)
    live = [t for t in cols if phi[:, t].sum() > 0.0]
    if len(live) < 2:
        raise DegenerateModelError("diversity needs at least two non-degenerate topics")
    total = 0.0
    pairs = 0
    for a in range(len(live)):
        for b in range(a + 1, len(live)):
            i, j = live[a], live[b]
            sym = 0.5 * (kl_divergence(phi[:, i], phi[:, j]) + kl_divergence(phi[:, j], phi[:, i]))
            total += math.sqrt(sym)
            pairs += 1
    return total / pairs


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile: rank ``q * (N - 1)`` on the ascending
    sort, fractional ranks interpolated between neighbors."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    return float(np.quantile(arr, q, method="linear"))


def relative_density(good_count: int, total: int, baseline_density: float) -> float:
    """Share of good topics relative to a baseline share: ``(good_count /
    total) / baseline_density``."""
    if total <= 0:
        raise ValueError("total must be positive")
    if baseline_density <= 0.0:
        raise ValueError("baseline_density must be positive")
    return (good_count / total) / baseline_density


@dataclass
class Thresholds:
    """Coherence cutoffs splitting topics into good (>= theta_good), bad
    (<= theta_bad) and neutral, plus a tag naming where they came from."""

    theta_good: float
    theta_bad: float
    source: str = ""

    def __post_init__(self):
        if self.theta_bad > self.theta_good:
            raise ValueError("theta_bad must not exceed theta_good")

    def to_dict(self) -> dict:
        return {"theta_good": self.theta_good, "theta_bad": self.theta_bad, "source": self.source}

    @classmethod
    def from_dict(cls, data: dict) -> "Thresholds":
        return cls(float(data["theta_good"]), float(data["theta_bad"]), str(data.get("source", "")))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Thresholds":
        path = Path(path)
        if not path.exists():
            raise DataError(f"thresholds file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TopicQuality:
    """Per-topic evaluation card."""

    topic: int
    coherence: float
    top_token_ids: np.ndarray
    size: float
    degenerate: bool
    intratext: float | None = None

    def to_dict(self, vocabulary=None) -> dict:
        tokens = [int(i) for i in self.top_token_ids]
        return {
            "topic": self.topic,
            "coherence": self.coherence,
            "intratext": self.intratext,
            "size": self.size,
            "degenerate": self.degenerate,
            "top_tokens": tokens if vocabulary is None else [vocabulary.surfaces[i] for i in tokens],
        }


def summarize_model(
    model,
    corpus: Corpus,
    qualities: Sequence[TopicQuality],
    workers: int = 1,
    ppl: float | None = None,
) -> dict:
    """Model-level metric row from already-computed topic cards: perplexity
    of the full model, mean coherence over live domain topics, mean
    intra-text coherence when available, diversity over live domain topics
    (None when fewer than two are alive).  Pass ``ppl`` to reuse an
    already-evaluated perplexity."""
    if ppl is None:
        ppl = perplexity(model.log_likelihood(corpus, workers=workers), corpus.total_tokens)
    live = [c for c in qualities if not c.degenerate]
    coh = float(np.mean([c.coherence for c in live])) if live else 0.0
    intra_values = [c.intratext for c in live if c.intratext is not None]
    intra = float(np.mean(intra_values)) if intra_values else None
    degenerate = model.degenerate_topics
    live_domain = [int(t) for t in model.domain_indices if not degenerate[t]]
    div = diversity(model.phi, live_domain) if len(live_domain) >= 2 else None
    return {"perplexity": ppl, "coherence": coh, "intratext": intra, "diversity": div}


def evaluate_topics(
    model,
    corpus: Corpus,
    cooc: CooccurrenceStats,
    top_k: int = 20,
    with_intratext: bool = False,
) -> list[TopicQuality]:
    """Quality cards for the model's domain topics (background columns are
    auxiliary and excluded)."""
    sizes = model.topic_sizes if model.topic_sizes is not None else model.compute_topic_sizes(corpus)
    intratext = None
    if with_intratext:
        intratext = coherence_intratext(model.phi, corpus, sizes)
    cards = []
    for t in model.domain_indices:
        col = model.phi[:, t]
        degenerate = col.sum() <= 0.0
        ids = top_words(col, top_k)
        coh = 0.0 if degenerate else coherence_toptoken(ids, cooc)
        cards.append(
            TopicQuality(
                topic=int(t),
                coherence=coh,
                top_token_ids=ids,
                size=float(sizes[t]),
                degenerate=bool(degenerate),
                intratext=None if intratext is None else float(intratext[t]),
            )
        )
    return cards
