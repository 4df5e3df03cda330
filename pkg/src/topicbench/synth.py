"""Synthetic corpora with known topics, for recovery and pipeline tests.

Documents are sampled from a planted factorization: per-topic word
distributions drawn from a symmetric Dirichlet (small concentration gives
sparse, well separated topics) and per-document topic mixtures likewise.
Token topics are drawn i.i.d., but the emitted word order groups tokens by
their topic draw, so the documents contain contiguous same-topic segments
and run-length statistics have something to find.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Vocabulary


@dataclass
class GroundTruth:
    """Planted parameters aligned with the generated corpus vocabulary."""

    phi: np.ndarray
    theta: np.ndarray

    def save(self, path: str | Path) -> None:
        np.savez(path, phi=self.phi, theta=self.theta)

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        data = np.load(path)
        return cls(data["phi"], data["theta"])


def synth_corpus(
    seed: int,
    vocab_size: int = 50,
    n_topics: int = 5,
    n_docs: int = 200,
    mean_len: int = 100,
    concentration: float = 0.1,
) -> tuple[Corpus, GroundTruth]:
    """Generate a corpus of ``n_docs`` documents over ``vocab_size`` tokens
    from ``n_topics`` planted topics.

    ``concentration`` is the symmetric Dirichlet parameter for both the
    word and the mixture draws.  Tokens that happen never to be emitted are
    dropped from the vocabulary and the returned truth is re-normalized to
    the surviving rows, so corpus and truth always share ids.
    """
    if vocab_size < 2 or n_topics < 1 or n_docs < 1 or mean_len < 1:
        raise ValueError("vocab_size, n_topics, n_docs and mean_len must be positive")
    rng = np.random.default_rng(seed)
    true_phi = rng.dirichlet(np.full(vocab_size, concentration), size=n_topics).T
    true_theta = rng.dirichlet(np.full(n_topics, concentration), size=n_docs).T

    doc_ids = [f"d{i:04d}" for i in range(n_docs)]
    flat_ids: list[np.ndarray] = []
    flat_counts: list[np.ndarray] = []
    flat_seq: list[np.ndarray] = []
    doc_ptr = [0]
    seq_ptr = [0]

    for d in range(n_docs):
        length = max(1, int(rng.poisson(mean_len)))
        topic_draws = rng.choice(n_topics, size=length, p=true_theta[:, d])
        present, topic_counts = np.unique(topic_draws, return_counts=True)
        pieces = [
            rng.choice(vocab_size, size=int(c), p=true_phi[:, t]).astype(np.int32)
            for t, c in zip(present, topic_counts)
        ]
        stream = np.concatenate(pieces)
        tids, cnts = np.unique(stream, return_counts=True)
        flat_ids.append(tids.astype(np.int32))
        flat_counts.append(cnts.astype(np.int64))
        flat_seq.append(stream)
        doc_ptr.append(doc_ptr[-1] + len(tids))
        seq_ptr.append(seq_ptr[-1] + len(stream))

    token_ids = np.concatenate(flat_ids)
    used = np.zeros(vocab_size, dtype=bool)
    used[token_ids] = True
    old_to_new = np.cumsum(used) - 1
    surfaces = [f"w{i:04d}" for i in range(vocab_size) if used[i]]
    df = np.zeros(len(surfaces), dtype=np.int64)
    for tids in flat_ids:
        df[old_to_new[tids]] += 1

    phi_kept = true_phi[used]
    phi_kept = phi_kept / phi_kept.sum(axis=0, keepdims=True)

    vocab = Vocabulary(surfaces, df)
    corpus = Corpus(
        vocab,
        doc_ids,
        old_to_new[token_ids].astype(np.int32),
        np.concatenate(flat_counts),
        np.asarray(doc_ptr, dtype=np.int64),
        old_to_new[np.concatenate(flat_seq)].astype(np.int32),
        np.asarray(seq_ptr, dtype=np.int64),
    )
    return corpus, GroundTruth(phi_kept, true_theta)
