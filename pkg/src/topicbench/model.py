"""Topic model state and the regularized EM fitting loop.

A model holds ``phi`` (vocab_size x num_topics, columns ``p(w|t)``) and
``theta`` (num_topics x num_documents, columns ``p(t|d)``).  Internally
theta is kept document-major so each document's mixture is a contiguous
row in the sweep kernels; the ``theta`` property exposes the conventional
topic-major orientation as a transposed view.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus, Vocabulary
from .errors import DataError, DegenerateModelError

logger = logging.getLogger(__name__)

ROLE_DOMAIN = "domain"
ROLE_BACKGROUND = "background"
ROLE_FIXED = "fixed"


@dataclass(frozen=True)
class TopicRole:
    """Role of one topic column: a free domain topic, a smoothed background
    topic, or a topic fixed to a banked column (``bank_ref`` names it)."""

    kind: str = ROLE_DOMAIN
    bank_ref: str | None = None

    def __post_init__(self):
        if self.kind not in (ROLE_DOMAIN, ROLE_BACKGROUND, ROLE_FIXED):
            raise ValueError(f"unknown topic role {self.kind!r}")
        if (self.kind == ROLE_FIXED) != (self.bank_ref is not None):
            raise ValueError("bank_ref must be set exactly for fixed topics")


def default_roles(num_topics: int, background_topics: int = 0) -> list[TopicRole]:
    roles = [TopicRole(ROLE_DOMAIN) for _ in range(num_topics - background_topics)]
    roles += [TopicRole(ROLE_BACKGROUND) for _ in range(background_topics)]
    return roles


@dataclass
class TrainStats:
    """Per-iteration training trace.

    ``log_likelihood[i]`` is evaluated at the parameters iteration ``i``
    started from (it falls out of the E-step at no extra cost), so for
    unregularized EM the sequence is non-decreasing.
    """

    iterations: int = 0
    log_likelihood: list[float] = field(default_factory=list)
    perplexity: list[float] = field(default_factory=list)
    regularizer_values: dict[str, list[float]] = field(default_factory=dict)
    floor_hits: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "perplexity": self.perplexity,
            "regularizer_values": self.regularizer_values,
            "floor_hits": self.floor_hits,
        }


class TopicModel:
    def __init__(
        self,
        phi: np.ndarray,
        roles: Sequence[TopicRole],
        seed: int,
        theta_dt: np.ndarray | None = None,
    ):
        self.phi = np.ascontiguousarray(phi, dtype=np.float64)
        self.roles = list(roles)
        self.seed = int(seed)
        self.theta_dt = None if theta_dt is None else np.ascontiguousarray(theta_dt, dtype=np.float64)
        self.topic_sizes: np.ndarray | None = None
        if len(self.roles) != self.num_topics:
            raise ValueError("one role per topic is required")

    @property
    def vocab_size(self) -> int:
        return self.phi.shape[0]

    @property
    def num_topics(self) -> int:
        return self.phi.shape[1]

    @property
    def num_documents(self) -> int:
        return 0 if self.theta_dt is None else self.theta_dt.shape[0]

    @property
    def theta(self) -> np.ndarray | None:
        """Topic-major view ``p(t|d)`` of shape (num_topics, num_documents)."""
        return None if self.theta_dt is None else self.theta_dt.T

    @property
    def degenerate_topics(self) -> np.ndarray:
        """Boolean mask of topics whose phi column collapsed to zero."""
        return self.phi.sum(axis=0) == 0.0

    def indices(self, kind: str) -> np.ndarray:
        return np.asarray([i for i, r in enumerate(self.roles) if r.kind == kind], dtype=np.int64)

    @property
    def free_indices(self) -> np.ndarray:
        return self.indices(ROLE_DOMAIN)

    @property
    def fixed_indices(self) -> np.ndarray:
        return self.indices(ROLE_FIXED)

    @property
    def background_indices(self) -> np.ndarray:
        return self.indices(ROLE_BACKGROUND)

    @property
    def domain_indices(self) -> np.ndarray:
        """Fixed and free topics together, excluding background columns."""
        return np.asarray([i for i, r in enumerate(self.roles) if r.kind != ROLE_BACKGROUND], dtype=np.int64)

    def compute_topic_sizes(self, corpus: Corpus) -> np.ndarray:
        """Expected token mass per topic, ``n_t = sum_d p(t|d) n_d``."""
        if self.theta_dt is None:
            raise ValueError("model has no theta; fit or infer first")
        sizes = self.theta_dt.T @ corpus.doc_lengths.astype(np.float64)
        self.topic_sizes = sizes
        return sizes

    def log_likelihood(self, corpus: Corpus, workers: int = 1) -> float:
        if self.theta_dt is None:
            raise ValueError("model has no theta; fit or infer first")
        ll, _ = kernels.log_likelihood(corpus, self.phi, self.theta_dt, workers=workers)
        return ll


def normalize_column(column: np.ndarray) -> tuple[np.ndarray, bool]:
    """Project a vector onto the simplex by clamping negatives and dividing
    by the sum.  An all-nonpositive vector becomes all-zero; the flag says
    whether that happened."""
    clamped = np.maximum(np.asarray(column, dtype=np.float64), 0.0)
    total = clamped.sum()
    if total <= 0.0:
        return np.zeros_like(clamped), True
    return clamped / total, False


def normalize_columns(matrix: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Clamp negatives and normalize along ``axis``; zero-sum slices stay
    all-zero and are flagged in the returned mask rather than erroring."""
    clamped = np.maximum(matrix, 0.0)
    sums = clamped.sum(axis=axis, keepdims=True)
    zero = sums == 0.0
    normalized = np.divide(clamped, np.where(zero, 1.0, sums))
    return normalized, zero.reshape(-1)


def init_model(
    vocab_size: int,
    num_topics: int,
    seed: int,
    roles: Sequence[TopicRole] | None = None,
    num_documents: int | None = None,
) -> TopicModel:
    """Seeded random start: phi columns drawn uniform and normalized, theta
    uniform.  Identical `(vocab_size, num_topics, seed)` give bit-identical
    phi."""
    if vocab_size < 1 or num_topics < 1:
        raise ValueError("vocab_size and num_topics must be positive")
    rng = np.random.default_rng(seed)
    phi = rng.random((vocab_size, num_topics))
    phi, _ = normalize_columns(phi)
    theta_dt = None
    if num_documents is not None:
        theta_dt = np.full((num_documents, num_topics), 1.0 / num_topics, dtype=np.float64)
    if roles is None:
        roles = default_roles(num_topics)
    return TopicModel(phi, roles, seed, theta_dt)


def em_fit(
    model: TopicModel,
    corpus: Corpus,
    regularizers: Sequence = (),
    iterations: int = 30,
    workers: int = 1,
    callback: Callable[[TopicModel, int], None] | None = None,
) -> TrainStats:
    """Run regularized EM in place and return the training trace.

    Each iteration distributes token counts over topics at the current
    parameters, evaluates every regularizer's additive at that same
    snapshot, then renormalizes ``n_wt + phi * dR/dphi`` per topic and
    ``n_td + theta * dR/dtheta`` per document.  Negative cells are clamped
    before normalization; a column that loses all mass stays zero and the
    topic is thereafter degenerate (no count can flow back into it unless a
    regularizer adds mass).
    """
    if model.vocab_size != corpus.vocab_size:
        raise ValueError("model vocabulary size does not match corpus")
    if model.theta_dt is None:
        model.theta_dt = np.full(
            (corpus.num_documents, model.num_topics), 1.0 / model.num_topics, dtype=np.float64
        )
    elif model.theta_dt.shape[0] != corpus.num_documents:
        raise ValueError("theta document count does not match corpus")

    names = [r.name for r in regularizers]
    if len(set(names)) != len(names):
        raise ValueError(f"regularizer names must be unique, got {names}")

    n_tokens = corpus.total_tokens
    stats = TrainStats(regularizer_values={name: [] for name in names})

    for it in range(iterations):
        n_wt, n_dt, ll, hits = kernels.em_sweep(
            corpus, model.phi, model.theta_dt, update_phi=True, workers=workers
        )
        stats.log_likelihood.append(ll)
        stats.perplexity.append(math.exp(-ll / n_tokens))
        stats.floor_hits.append(int(hits))

        phi_numerator = n_wt
        theta_numerator = n_dt
        for reg in regularizers:
            add = reg.additive(model.phi, model.theta, n_tokens)
            stats.regularizer_values[reg.name].append(add.r_value)
            if add.phi_add is not None:
                if not np.all(np.isfinite(add.phi_add)):
                    raise ValueError(f"regularizer {reg.name!r} produced a non-finite phi additive")
                phi_numerator = phi_numerator + add.phi_add
            if add.theta_add is not None:
                if not np.all(np.isfinite(add.theta_add)):
                    raise ValueError(f"regularizer {reg.name!r} produced a non-finite theta additive")
                theta_numerator = theta_numerator + np.transpose(add.theta_add)

        model.phi, _ = normalize_columns(phi_numerator)
        theta_normalized, _ = normalize_columns(theta_numerator, axis=1)
        model.theta_dt = np.ascontiguousarray(theta_normalized)
        stats.iterations = it + 1
        if callback is not None:
            callback(model, it)

    model.compute_topic_sizes(corpus)
    return stats


def infer_theta_fixed_phi(
    phi: np.ndarray,
    corpus: Corpus,
    iterations: int = 30,
    workers: int = 1,
) -> np.ndarray:
    """Fit only the document mixtures for a frozen ``phi``.

    Starts from uniform theta and runs plain EM updates of theta alone;
    for fixed phi this objective is concave per document, so enough
    iterations land near the optimum regardless of the start.  Returns
    theta of shape (num_topics, num_documents).
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise ValueError("phi must be a 2-d array")
    if phi.shape[0] != corpus.vocab_size:
        raise ValueError("phi row count does not match corpus vocabulary")
    if phi.sum() <= 0.0:
        raise DegenerateModelError("cannot infer mixtures for an all-zero phi")
    num_topics = phi.shape[1]
    theta_dt = np.full((corpus.num_documents, num_topics), 1.0 / num_topics, dtype=np.float64)
    for _ in range(iterations):
        _, n_dt, _, _ = kernels.em_sweep(corpus, phi, theta_dt, update_phi=False, workers=workers)
        theta_normalized, _ = normalize_columns(n_dt, axis=1)
        theta_dt = np.ascontiguousarray(theta_normalized)
    return theta_dt.T


def log_likelihood(phi: np.ndarray, theta: np.ndarray, corpus: Corpus, workers: int = 1) -> float:
    """``sum_dw n_dw ln p(w|d)`` with vanished mixtures floored at 1e-37."""
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    theta_dt = np.ascontiguousarray(np.transpose(theta), dtype=np.float64)
    ll, _ = kernels.log_likelihood(corpus, phi, theta_dt, workers=workers)
    return ll


# -- phi persistence ------------------------------------------------------


def default_topic_names(roles: Sequence[TopicRole]) -> list[str]:
    return [
        f"bg{i:03d}" if r.kind == ROLE_BACKGROUND else f"t{i:03d}"
        for i, r in enumerate(roles)
    ]


def save_phi_tsv(
    phi: np.ndarray,
    vocabulary: Vocabulary,
    path: str | Path,
    topic_names: Sequence[str] | None = None,
) -> None:
    """Write phi as TSV: header of topic names, one row per token surface,
    probabilities with 9 significant digits."""
    if topic_names is None:
        topic_names = [f"t{i:03d}" for i in range(phi.shape[1])]
    if len(topic_names) != phi.shape[1]:
        raise ValueError("one name per topic is required")
    if any("\t" in name or "\n" in name for name in topic_names):
        raise ValueError("topic names may not contain tabs or newlines")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("token\t" + "\t".join(topic_names) + "\n")
        for w, surface in enumerate(vocabulary.surfaces):
            row = "\t".join(f"{phi[w, t]:.9g}" for t in range(phi.shape[1]))
            fh.write(f"{surface}\t{row}\n")


def load_phi_tsv(path: str | Path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a TSV phi; returns ``(phi, surfaces, topic_names)``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"phi file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) < 2 or header[0] != "token":
            raise DataError(f"{path}: not a phi table")
        topic_names = header[1:]
        surfaces: list[str] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
            surfaces.append(parts[0])
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed probability") from None
    return np.asarray(rows, dtype=np.float64), surfaces, topic_names


def save_phi_jsonl(
    phi: np.ndarray,
    vocabulary: Vocabulary,
    path: str | Path,
    topic_names: Sequence[str] | None = None,
    min_prob: float = 1e-9,
) -> None:
    """Sparse phi export: a metadata line, then one ``{token, topic, p}``
    object per entry at or above ``min_prob``."""
    if topic_names is None:
        topic_names = [f"t{i:03d}" for i in range(phi.shape[1])]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "phi-sparse", "topics": list(topic_names)}, sort_keys=True) + "\n")
        for w, surface in enumerate(vocabulary.surfaces):
            for t in range(phi.shape[1]):
                p = phi[w, t]
                if p >= min_prob:
                    fh.write(json.dumps({"token": surface, "topic": topic_names[t], "p": float(p)}, sort_keys=True) + "\n")


def load_phi_jsonl(path: str | Path, vocabulary: Vocabulary) -> tuple[np.ndarray, list[str]]:
    """Read a sparse phi export back against a known vocabulary."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"phi file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        meta = json.loads(fh.readline())
        if meta.get("format") != "phi-sparse":
            raise DataError(f"{path}: not a sparse phi export")
        topic_names = list(meta["topics"])
        index = {name: t for t, name in enumerate(topic_names)}
        phi = np.zeros((len(vocabulary), len(topic_names)), dtype=np.float64)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            entry = json.loads(line)
            try:
                w = vocabulary.id_of(entry["token"])
            except KeyError:
                raise DataError(f"{path}:{lineno}: token {entry['token']!r} not in vocabulary") from None
            phi[w, index[entry["topic"]]] = float(entry["p"])
    return phi, topic_names
