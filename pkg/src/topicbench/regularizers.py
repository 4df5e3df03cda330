"""Additive regularizers for the EM M-step.

Each regularizer reports its criterion value and the additives
``phi * dR/dphi`` and ``theta * dR/dtheta`` evaluated at the snapshot the
E-step used.  Additives are dense arrays that are exactly zero outside the
topics a regularizer is configured for, so stacking is plain summation.

Coefficients can be absolute or relative.  A relative weight is rescaled to
``weight * n / |topics|`` where ``n`` is the corpus token mass: both the
topic-token and document-topic numerator matrices carry total mass ``n``,
so the rescaled pressure stays commensurate with the counts it competes
against regardless of collection size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError

LOG_FLOOR = 1e-37

MODE_ABSOLUTE = "absolute"
MODE_RELATIVE = "relative"


@dataclass
class RegularizerAdditive:
    """Value of R plus its M-step additives; ``None`` means identically zero.

    ``phi_add`` has shape (vocab_size, num_topics); ``theta_add`` broadcasts
    against (num_topics, num_documents).
    """

    r_value: float
    phi_add: np.ndarray | None = None
    theta_add: np.ndarray | None = None


def effective_weight(weight: float, mode: str, n_tokens: float, subset_size: int) -> float:
    if mode == MODE_ABSOLUTE:
        return weight
    if mode == MODE_RELATIVE:
        if subset_size < 1:
            return 0.0
        return weight * n_tokens / subset_size
    raise ConfigError(f"unknown coefficient mode {mode!r}")


def _as_indices(topics: Sequence[int]) -> np.ndarray:
    idx = np.asarray(sorted(set(int(t) for t in topics)), dtype=np.int64)
    if len(idx) and idx[0] < 0:
        raise ConfigError("topic indices must be non-negative")
    return idx


def _floored_log(values: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(values, LOG_FLOOR))


class SmoothSparse:
    """Pull topic and document distributions toward target distributions.

    Positive weights smooth toward the targets, negative weights sparse
    away from them.  ``R = word_weight * sum_{w,t in topics} beta_w ln phi_wt
    + doc_weight * sum_{t in topics, d} alpha_t ln theta_td`` with uniform
    targets unless given, so the phi additive is ``word_weight * beta_w`` on
    the configured topics and the theta additive ``doc_weight * alpha_t``.
    """

    def __init__(
        self,
        topics: Sequence[int],
        word_weight: float = 0.0,
        doc_weight: float = 0.0,
        word_target: np.ndarray | None = None,
        doc_target: Mapping[int, float] | None = None,
        mode: str = MODE_ABSOLUTE,
        name: str = "smooth_sparse",
    ):
        if mode not in (MODE_ABSOLUTE, MODE_RELATIVE):
            raise ConfigError(f"unknown coefficient mode {mode!r}")
        self.topics = _as_indices(topics)
        self.word_weight = float(word_weight)
        self.doc_weight = float(doc_weight)
        self.word_target = None if word_target is None else np.asarray(word_target, dtype=np.float64)
        self.doc_target = None if doc_target is None else {int(t): float(v) for t, v in doc_target.items()}
        self.mode = mode
        self.name = name

    def additive(self, phi: np.ndarray, theta: np.ndarray | None, n_tokens: float) -> RegularizerAdditive:
        vocab_size, num_topics = phi.shape
        idx = self.topics[self.topics < num_topics]
        if len(idx) == 0:
            return RegularizerAdditive(0.0)
        word_w = effective_weight(self.word_weight, self.mode, n_tokens, len(idx))
        doc_w = effective_weight(self.doc_weight, self.mode, n_tokens, len(idx))

        beta = self.word_target if self.word_target is not None else np.full(vocab_size, 1.0 / vocab_size)
        r_value = 0.0
        phi_add = None
        if word_w != 0.0:
            phi_add = np.zeros_like(phi)
            phi_add[:, idx] = word_w * beta[:, None]
            r_value += word_w * float(beta @ _floored_log(phi[:, idx]).sum(axis=1))

        theta_add = None
        if doc_w != 0.0 and theta is not None:
            alpha = np.asarray(
                [self.doc_target.get(int(t), 0.0) if self.doc_target else 1.0 / num_topics for t in idx]
            )
            theta_add = np.zeros((num_topics, 1))
            theta_add[idx, 0] = doc_w * alpha
            r_value += doc_w * float(alpha @ _floored_log(theta[idx, :]).sum(axis=1))
        return RegularizerAdditive(r_value, phi_add, theta_add)


class Decorrelation:
    """Push the configured topics' word distributions apart.

    ``R = -(weight / 2) * sum_{t != s in topics} <phi_t, phi_s>``; the phi
    additive for topic ``t`` is ``-weight * phi_wt * sum_{s != t} phi_ws``.
    """

    def __init__(self, topics: Sequence[int], weight: float, mode: str = MODE_ABSOLUTE, name: str = "decorrelation"):
        if mode not in (MODE_ABSOLUTE, MODE_RELATIVE):
            raise ConfigError(f"unknown coefficient mode {mode!r}")
        self.topics = _as_indices(topics)
        self.weight = float(weight)
        self.mode = mode
        self.name = name

    def additive(self, phi: np.ndarray, theta: np.ndarray | None, n_tokens: float) -> RegularizerAdditive:
        idx = self.topics[self.topics < phi.shape[1]]
        if len(idx) < 2 or self.weight == 0.0:
            return RegularizerAdditive(0.0)
        weight = effective_weight(self.weight, self.mode, n_tokens, len(idx))
        sub = phi[:, idx]
        row_sums = sub.sum(axis=1)
        others = row_sums[:, None] - sub
        phi_add = np.zeros_like(phi)
        phi_add[:, idx] = -weight * sub * others
        r_value = -0.5 * weight * float((sub * others).sum())
        return RegularizerAdditive(r_value, phi_add)


class FixTopics:
    """Hold chosen topics at given target columns with a large positive weight.

    ``R = weight * sum_t sum_w target_wt ln phi_wt`` over the mapped topics,
    giving the additive ``weight * target_wt``; with a weight that dwarfs the
    counts the M-step renormalization reproduces the target columns.
    """

    def __init__(self, targets: Mapping[int, np.ndarray], weight: float = 1e9, name: str = "fix"):
        if weight <= 0.0:
            raise ConfigError("fix weight must be positive")
        self.targets = {int(t): np.asarray(col, dtype=np.float64) for t, col in targets.items()}
        self.weight = float(weight)
        self.name = name

    def additive(self, phi: np.ndarray, theta: np.ndarray | None, n_tokens: float) -> RegularizerAdditive:
        if not self.targets:
            return RegularizerAdditive(0.0)
        phi_add = np.zeros_like(phi)
        r_value = 0.0
        for t, target in self.targets.items():
            phi_add[:, t] = self.weight * target
            r_value += self.weight * float(target @ _floored_log(phi[:, t]))
        return RegularizerAdditive(r_value, phi_add)


class SiftV1:
    """Repel free topics from every collected column at once.

    ``R = -weight * sum_{t in topics} sum_s <phi_t, ref_s>``.  The additive
    ``-weight * phi_wt * sum_s ref_ws`` pushes against the *sum* of the
    collected columns, so each individual column is repelled with pressure
    diluted by the rest of the collection.
    """

    def __init__(self, topics: Sequence[int], reference: np.ndarray, weight: float, name: str = "sift_v1"):
        self.topics = _as_indices(topics)
        self.reference = np.asarray(reference, dtype=np.float64)
        if self.reference.ndim != 2:
            raise ConfigError("reference columns must form a 2-d array")
        self.weight = float(weight)
        self.name = name

    def additive(self, phi: np.ndarray, theta: np.ndarray | None, n_tokens: float) -> RegularizerAdditive:
        idx = self.topics[self.topics < phi.shape[1]]
        if len(idx) == 0 or self.reference.shape[1] == 0 or self.weight == 0.0:
            return RegularizerAdditive(0.0)
        ref_sum = self.reference.sum(axis=1)
        phi_add = np.zeros_like(phi)
        phi_add[:, idx] = -self.weight * phi[:, idx] * ref_sum[:, None]
        r_value = -self.weight * float(ref_sum @ phi[:, idx].sum(axis=1))
        return RegularizerAdditive(r_value, phi_add)


def base_stack(
    domain: Sequence[int],
    background: Sequence[int],
    sparse_weight: float = 0.0,
    smooth_weight: float = 0.0,
    decorr_weight: float = 0.0,
) -> list:
    """The standard additive stack: sparsing on domain topics, smoothing on
    background topics, decorrelation among domain topics, all relative.
    Zero weights contribute nothing and are omitted entirely, so a stack
    with every weight zero is plain EM."""
    regs: list = []
    if sparse_weight != 0.0 and len(domain):
        regs.append(SmoothSparse(domain, word_weight=sparse_weight, mode=MODE_RELATIVE, name="sparse_domain"))
    if smooth_weight != 0.0 and len(background):
        regs.append(SmoothSparse(background, word_weight=smooth_weight, mode=MODE_RELATIVE, name="smooth_background"))
    if decorr_weight != 0.0 and len(domain) > 1:
        regs.append(Decorrelation(domain, decorr_weight, mode=MODE_RELATIVE, name="decorrelation"))
    return regs


class SiftV2:
    """Repel free topics from each collected column in proportion to overlap.

    ``R = -(weight / 2) * sum_{t in topics} sum_s <phi_t, ref_s>^2`` squares
    each per-column overlap, so pressure against a column grows with the
    similarity to that column instead of averaging over the collection.
    Values are far smaller than the plain variant for the same weight.
    """

    def __init__(self, topics: Sequence[int], reference: np.ndarray, weight: float, name: str = "sift_v2"):
        self.topics = _as_indices(topics)
        self.reference = np.asarray(reference, dtype=np.float64)
        if self.reference.ndim != 2:
            raise ConfigError("reference columns must form a 2-d array")
        self.weight = float(weight)
        self.name = name

    def additive(self, phi: np.ndarray, theta: np.ndarray | None, n_tokens: float) -> RegularizerAdditive:
        idx = self.topics[self.topics < phi.shape[1]]
        if len(idx) == 0 or self.reference.shape[1] == 0 or self.weight == 0.0:
            return RegularizerAdditive(0.0)
        sub = phi[:, idx]
        overlaps = sub.T @ self.reference
        pressure = self.reference @ overlaps.T
        phi_add = np.zeros_like(phi)
        phi_add[:, idx] = -self.weight * sub * pressure
        r_value = -0.5 * self.weight * float((overlaps**2).sum())
        return RegularizerAdditive(r_value, phi_add)
