"""Iterative topic accumulation: train, classify, bank, fix, sift, repeat.

Each iteration trains a fresh additively regularized model whose first
columns are pinned to the good topics banked so far, classifies the free
topics against coherence thresholds, and appends the good and bad ones to
the bank.  Sifting regularizers push the next iteration's free topics away
from everything already collected, so the model is forced to explore.

The iteration is split into two halves so a human can sit between them:
``train_candidate`` produces a fitted model with automatic labels, and
``commit_iteration`` applies (possibly overridden) labels to the bank and
decides whether to stop.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import CooccurrenceStats, Corpus, Vocabulary, build_cooccurrence
from .errors import ConfigError, DataError
from .metrics import (
    Thresholds,
    TopicQuality,
    evaluate_topics,
    percentile,
    perplexity,
    summarize_model,
)
from .model import (
    ROLE_BACKGROUND,
    ROLE_DOMAIN,
    ROLE_FIXED,
    TopicModel,
    TopicRole,
    TrainStats,
    em_fit,
    init_model,
)
from .regularizers import FixTopics, SiftV1, SiftV2, base_stack

LABEL_GOOD = "good"
LABEL_BAD = "bad"
LABEL_NEUTRAL = "neutral"

CRITERION_TOPTOKEN = "toptoken"
CRITERION_INTRATEXT = "intratext"

BANK_MIN_PROB = 1e-9


@dataclass
class BankEntry:
    """One collected topic column."""

    id: str
    label: str
    source_iteration: int
    coherence: float
    column: np.ndarray

    def to_dict(self, vocabulary: Vocabulary) -> dict:
        column = {
            vocabulary.surfaces[w]: float(p)
            for w, p in enumerate(self.column)
            if p >= BANK_MIN_PROB
        }
        return {
            "id": self.id,
            "label": self.label,
            "source_iteration": self.source_iteration,
            "coherence": self.coherence,
            "column": column,
        }


class TopicBank:
    """Insertion-ordered store of labeled topic columns over one vocabulary."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary
        self.entries: list[BankEntry] = []
        self._ids: set[str] = set()

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: BankEntry) -> None:
        if entry.label not in (LABEL_GOOD, LABEL_BAD):
            raise ValueError(f"bank entries must be good or bad, got {entry.label!r}")
        if entry.id in self._ids:
            raise ValueError(f"duplicate bank entry id {entry.id!r}")
        if entry.column.shape != (len(self.vocabulary),):
            raise ValueError("bank column does not match the vocabulary")
        if entry.column.sum() <= 0.0:
            raise ValueError("cannot bank an all-zero column")
        self.entries.append(entry)
        self._ids.add(entry.id)

    def labeled(self, label: str) -> list[BankEntry]:
        return [e for e in self.entries if e.label == label]

    @property
    def good(self) -> list[BankEntry]:
        return self.labeled(LABEL_GOOD)

    @property
    def bad(self) -> list[BankEntry]:
        return self.labeled(LABEL_BAD)

    def matrix(self, label: str) -> np.ndarray:
        """Columns with the given label, insertion order, shape (W, k)."""
        entries = self.labeled(label)
        if not entries:
            return np.zeros((len(self.vocabulary), 0), dtype=np.float64)
        return np.stack([e.column for e in entries], axis=1)

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_dict(self.vocabulary), sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path, vocabulary: Vocabulary) -> "TopicBank":
        """Load a bank against a vocabulary: tokens the vocabulary lacks are
        dropped and each column renormalized over what remains."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"bank file not found: {path}")
        bank = cls(vocabulary)
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError:
                    raise DataError(f"{path}:{lineno}: malformed bank entry") from None
                column = np.zeros(len(vocabulary), dtype=np.float64)
                for surface, p in raw["column"].items():
                    if surface in vocabulary:
                        column[vocabulary.id_of(surface)] = float(p)
                total = column.sum()
                if total <= 0.0:
                    raise DataError(f"{path}:{lineno}: bank column has no mass on this vocabulary")
                bank.add(
                    BankEntry(
                        id=str(raw["id"]),
                        label=str(raw["label"]),
                        source_iteration=int(raw["source_iteration"]),
                        coherence=float(raw["coherence"]),
                        column=column / total,
                    )
                )
        return bank


@dataclass
class ItarConfig:
    """Knobs of the accumulate-and-sift loop.

    ``num_topics`` counts domain topics; background columns for smoothing
    come on top.  Sift weights are absolute; the base sparsing, smoothing
    and decorrelation weights are relative to corpus size.  ``fix_good``,
    ``sift_bad`` and ``sift_good`` switch the three bank-coupling devices
    for ablations; the config's ``name`` encodes them.
    """

    num_topics: int
    thresholds: Thresholds
    background_topics: int = 1
    max_iterations: int = 20
    em_iterations: int = 30
    top_k: int = 20
    criterion: str = CRITERION_TOPTOKEN
    sift_version: int = 1
    fix_good: bool = True
    sift_bad: bool = True
    sift_good: bool = True
    tau_fix: float = 1e9
    tau_sift_bad: float | None = None
    tau_sift_good: float | None = None
    sparse_weight: float = -0.05
    smooth_weight: float = 0.05
    decorr_weight: float = 0.01
    stop_good_fraction: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.num_topics < 1:
            raise ConfigError("num_topics must be positive")
        if self.criterion not in (CRITERION_TOPTOKEN, CRITERION_INTRATEXT):
            raise ConfigError(f"unknown quality criterion {self.criterion!r}")
        if self.sift_version not in (1, 2):
            raise ConfigError("sift_version must be 1 or 2")
        default_tau = 1e5 if self.sift_version == 1 else 1e9
        if self.tau_sift_bad is None:
            self.tau_sift_bad = default_tau
        if self.tau_sift_good is None:
            self.tau_sift_good = default_tau

    @property
    def name(self) -> str:
        return f"itar_{int(self.fix_good)}-{int(self.sift_bad)}-{int(self.sift_good)}"

    @property
    def good_quota(self) -> int:
        return math.ceil(self.stop_good_fraction * self.num_topics)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["thresholds"] = self.thresholds.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ItarConfig":
        data = dict(data)
        data["thresholds"] = Thresholds.from_dict(data["thresholds"])
        return cls(**data)


@dataclass
class StopDecision:
    stop: bool
    reason: str | None = None

    def to_dict(self) -> dict:
        return {"stop": self.stop, "reason": self.reason}


@dataclass
class TopicRecord:
    """Per-topic line inside an iteration record."""

    topic: int
    role: str
    coherence: float
    intratext: float | None
    size: float
    degenerate: bool
    label: str | None

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "role": self.role,
            "coherence": self.coherence,
            "intratext": self.intratext,
            "size": self.size,
            "degenerate": self.degenerate,
            "label": self.label,
        }


@dataclass
class IterationRecord:
    """What one committed iteration did, serializable as one JSON line."""

    iteration: int
    seed: int
    n_fixed: int
    labels: dict[int, str]
    good_added: int
    bad_added: int
    bank_good_total: int
    bank_bad_total: int
    metrics: dict
    topics: list[TopicRecord]
    fixed_fidelity_min: float | None
    stop: StopDecision

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "seed": self.seed,
            "n_fixed": self.n_fixed,
            "labels": {str(t): l for t, l in sorted(self.labels.items())},
            "good_added": self.good_added,
            "bad_added": self.bad_added,
            "bank_good_total": self.bank_good_total,
            "bank_bad_total": self.bank_bad_total,
            "metrics": self.metrics,
            "topics": [t.to_dict() for t in self.topics],
            "fixed_fidelity_min": self.fixed_fidelity_min,
            "stop": self.stop.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            iteration=int(data["iteration"]),
            seed=int(data["seed"]),
            n_fixed=int(data["n_fixed"]),
            labels={int(t): str(l) for t, l in data["labels"].items()},
            good_added=int(data["good_added"]),
            bad_added=int(data["bad_added"]),
            bank_good_total=int(data["bank_good_total"]),
            bank_bad_total=int(data["bank_bad_total"]),
            metrics=dict(data["metrics"]),
            topics=[
                TopicRecord(
                    topic=int(t["topic"]),
                    role=str(t["role"]),
                    coherence=float(t["coherence"]),
                    intratext=None if t["intratext"] is None else float(t["intratext"]),
                    size=float(t["size"]),
                    degenerate=bool(t["degenerate"]),
                    label=None if t["label"] is None else str(t["label"]),
                )
                for t in data["topics"]
            ],
            fixed_fidelity_min=(
                None if data["fixed_fidelity_min"] is None else float(data["fixed_fidelity_min"])
            ),
            stop=StopDecision(bool(data["stop"]["stop"]), data["stop"]["reason"]),
        )


def save_history(history: Sequence[IterationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def load_history(path: str | Path) -> list[IterationRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"history file not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(IterationRecord.from_dict(json.loads(line)))
    return records


# -- thresholds and classification ------------------------------------------


def compute_thresholds(
    pooled_coherences: Sequence[float],
    good_quantile: float = 0.8,
    bad_quantile: float = 0.2,
    source: str = "",
) -> Thresholds:
    """Cut the pooled baseline coherence sample at the 80th and 20th
    percentiles (by default): topics at or above the high cut are good,
    at or below the low cut bad."""
    values = list(pooled_coherences)
    if not values:
        raise DataError("cannot compute thresholds from an empty coherence pool")
    return Thresholds(
        theta_good=percentile(values, good_quantile),
        theta_bad=percentile(values, bad_quantile),
        source=source,
    )


def classify_topics(
    qualities: Sequence[TopicQuality],
    thresholds: Thresholds,
    criterion: str = CRITERION_TOPTOKEN,
    overrides: Mapping[int, str] | None = None,
) -> dict[int, str]:
    """Label each quality card good, bad, or neutral.

    Degenerate topics are always neutral (there is nothing to bank).  Human
    overrides replace the automatic label for any non-degenerate topic.
    """
    labels: dict[int, str] = {}
    for card in qualities:
        if card.degenerate:
            labels[card.topic] = LABEL_NEUTRAL
            continue
        if criterion == CRITERION_INTRATEXT:
            if card.intratext is None:
                raise DataError("intratext criterion requested but intra-text coherence is missing")
            value = card.intratext
        else:
            value = card.coherence
        if value >= thresholds.theta_good:
            labels[card.topic] = LABEL_GOOD
        elif value <= thresholds.theta_bad:
            labels[card.topic] = LABEL_BAD
        else:
            labels[card.topic] = LABEL_NEUTRAL
    if overrides:
        valid = {LABEL_GOOD, LABEL_BAD, LABEL_NEUTRAL}
        degenerate = {card.topic for card in qualities if card.degenerate}
        known = {card.topic for card in qualities}
        for topic, label in overrides.items():
            topic = int(topic)
            if topic not in known:
                raise ConfigError(f"override for unknown topic {topic}")
            if label not in valid:
                raise ConfigError(f"unknown label {label!r} for topic {topic}")
            if topic in degenerate:
                continue
            labels[topic] = label
    return labels


def update_bank(
    bank: TopicBank,
    model: TopicModel,
    labels: Mapping[int, str],
    iteration: int,
    qualities: Sequence[TopicQuality],
    criterion: str = CRITERION_TOPTOKEN,
) -> tuple[int, int]:
    """Append the good and bad labeled free topics to the bank; neutral
    topics are dropped.  Returns ``(good_added, bad_added)``."""
    by_topic = {card.topic: card for card in qualities}
    good_added = 0
    bad_added = 0
    for topic in sorted(labels):
        label = labels[topic]
        if label == LABEL_NEUTRAL:
            continue
        card = by_topic[topic]
        value = card.intratext if criterion == CRITERION_INTRATEXT else card.coherence
        bank.add(
            BankEntry(
                id=f"i{iteration:03d}t{topic:03d}",
                label=label,
                source_iteration=iteration,
                coherence=float(value),
                column=model.phi[:, topic].copy(),
            )
        )
        if label == LABEL_GOOD:
            good_added += 1
        else:
            bad_added += 1
    return good_added, bad_added


# -- one iteration -----------------------------------------------------------


@dataclass
class Candidate:
    """A trained, evaluated model awaiting label commitment."""

    iteration: int
    model: TopicModel
    stats: TrainStats
    qualities: list[TopicQuality]
    auto_labels: dict[int, str]
    perplexity: float


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def build_regularizers(cfg: ItarConfig, model: TopicModel, bank: TopicBank) -> list:
    """Assemble the iteration's regularizer stack from the config flags and
    the current bank contents."""
    domain = model.domain_indices
    free = model.free_indices
    background = model.background_indices
    regs = base_stack(
        domain,
        background,
        sparse_weight=cfg.sparse_weight,
        smooth_weight=cfg.smooth_weight,
        decorr_weight=cfg.decorr_weight,
    )

    if cfg.fix_good:
        fixed = model.fixed_indices
        if len(fixed):
            by_id = {e.id: e for e in bank.entries}
            targets = {
                int(t): by_id[model.roles[t].bank_ref].column for t in fixed
            }
            regs.append(FixTopics(targets, weight=cfg.tau_fix, name="fix"))

    sift_cls = SiftV1 if cfg.sift_version == 1 else SiftV2
    if cfg.sift_bad and len(free):
        bad = bank.matrix(LABEL_BAD)
        if bad.shape[1]:
            regs.append(sift_cls(free, bad, cfg.tau_sift_bad, name="sift_bad"))
    if cfg.sift_good and len(free):
        good = bank.matrix(LABEL_GOOD)
        if good.shape[1]:
            regs.append(sift_cls(free, good, cfg.tau_sift_good, name="sift_good"))
    return regs


def train_candidate(
    bank: TopicBank,
    cfg: ItarConfig,
    corpus: Corpus,
    iteration: int,
    cooc: CooccurrenceStats,
    progress: Callable[[float], None] | None = None,
) -> Candidate:
    """Train and evaluate the model for one iteration without touching the
    bank.  The iteration number seeds the random start.  ``progress``, when
    given, receives the completed fraction of EM iterations."""
    good = bank.good
    n_fixed = len(good) if cfg.fix_good else 0
    if n_fixed >= cfg.num_topics:
        raise ConfigError(
            f"bank already holds {n_fixed} good topics, no free columns left of {cfg.num_topics}"
        )
    if cfg.criterion == CRITERION_INTRATEXT and not corpus.has_sequences:
        raise DataError("intratext criterion requires a corpus with word order")

    roles = [TopicRole(ROLE_FIXED, good[i].id) for i in range(n_fixed)]
    roles += [TopicRole(ROLE_DOMAIN) for _ in range(cfg.num_topics - n_fixed)]
    roles += [TopicRole(ROLE_BACKGROUND) for _ in range(cfg.background_topics)]

    model = init_model(
        corpus.vocab_size,
        cfg.num_topics + cfg.background_topics,
        seed=iteration,
        roles=roles,
        num_documents=corpus.num_documents,
    )
    for i in range(n_fixed):
        model.phi[:, i] = good[i].column

    regs = build_regularizers(cfg, model, bank)
    callback = None
    if progress is not None:
        callback = lambda _model, it: progress((it + 1) / cfg.em_iterations)
    stats = em_fit(model, corpus, regs, iterations=cfg.em_iterations, workers=cfg.workers, callback=callback)
    qualities = evaluate_topics(
        model, corpus, cooc, top_k=cfg.top_k, with_intratext=corpus.has_sequences
    )
    free = set(int(t) for t in model.free_indices)
    free_cards = [card for card in qualities if card.topic in free]
    auto_labels = classify_topics(free_cards, cfg.thresholds, cfg.criterion)
    ppl = perplexity(model.log_likelihood(corpus, workers=cfg.workers), corpus.total_tokens)
    return Candidate(iteration, model, stats, qualities, auto_labels, ppl)


def check_stopping(bank: TopicBank, candidate: Candidate, cfg: ItarConfig) -> StopDecision:
    """Stop when the bank holds enough good topics, when (under the
    intra-text criterion) a live topic's runs vanished entirely, or when
    every free topic degenerated."""
    if len(bank.good) >= cfg.good_quota:
        return StopDecision(True, "good_quota")
    free = set(int(t) for t in candidate.model.free_indices)
    free_cards = [c for c in candidate.qualities if c.topic in free]
    if cfg.criterion == CRITERION_INTRATEXT:
        for card in free_cards:
            if not card.degenerate and card.intratext == 0.0:
                return StopDecision(True, "zero_intratext")
    if free_cards and all(card.degenerate for card in free_cards):
        return StopDecision(True, "all_free_degenerate")
    return StopDecision(False, None)


def commit_iteration(
    bank: TopicBank,
    cfg: ItarConfig,
    candidate: Candidate,
    corpus: Corpus,
    overrides: Mapping[int, str] | None = None,
) -> IterationRecord:
    """Apply labels to the bank and summarize the iteration."""
    model = candidate.model
    free = set(int(t) for t in model.free_indices)
    free_cards = [card for card in candidate.qualities if card.topic in free]
    labels = classify_topics(free_cards, cfg.thresholds, cfg.criterion, overrides)
    good_added, bad_added = update_bank(
        bank, model, labels, candidate.iteration, free_cards, cfg.criterion
    )

    fidelity = None
    fixed = model.fixed_indices
    if len(fixed):
        by_id = {e.id: e for e in bank.entries}
        fidelity = min(
            _cosine(model.phi[:, t], by_id[model.roles[t].bank_ref].column) for t in fixed
        )

    good_free = sum(1 for t in labels.values() if t == LABEL_GOOD)
    metrics = summarize_model(
        model, corpus, candidate.qualities, workers=cfg.workers, ppl=candidate.perplexity
    )
    metrics["tplus_pct"] = 100.0 * (len(fixed) + good_free) / cfg.num_topics
    metrics["degenerate_free"] = sum(1 for c in free_cards if c.degenerate)
    topic_rows = [
        TopicRecord(
            topic=card.topic,
            role=model.roles[card.topic].kind,
            coherence=card.coherence,
            intratext=card.intratext,
            size=card.size,
            degenerate=card.degenerate,
            label=labels.get(card.topic),
        )
        for card in candidate.qualities
    ]
    record = IterationRecord(
        iteration=candidate.iteration,
        seed=candidate.iteration,
        n_fixed=len(fixed),
        labels=labels,
        good_added=good_added,
        bad_added=bad_added,
        bank_good_total=len(bank.good),
        bank_bad_total=len(bank.bad),
        metrics=metrics,
        topics=topic_rows,
        fixed_fidelity_min=fidelity,
        stop=check_stopping(bank, candidate, cfg),
    )
    return record


def run_iteration(
    bank: TopicBank,
    cfg: ItarConfig,
    corpus: Corpus,
    iteration: int,
    cooc: CooccurrenceStats,
    overrides: Mapping[int, str] | None = None,
) -> tuple[Candidate, IterationRecord]:
    """Train one iteration and immediately commit its labels."""
    candidate = train_candidate(bank, cfg, corpus, iteration, cooc)
    record = commit_iteration(bank, cfg, candidate, corpus, overrides)
    return candidate, record


@dataclass
class ItarResult:
    bank: TopicBank
    history: list[IterationRecord]
    final_model: TopicModel | None
    stop_reason: str


def run_itar(
    cfg: ItarConfig,
    corpus: Corpus,
    cooc: CooccurrenceStats | None = None,
    callback: Callable[[Candidate, IterationRecord], None] | None = None,
) -> ItarResult:
    """Run the accumulate-and-sift loop to a stop criterion or the iteration
    budget."""
    if cooc is None:
        cooc = build_cooccurrence(corpus)
    bank = TopicBank(corpus.vocabulary)
    history: list[IterationRecord] = []
    final_model = None
    reason = "max_iterations"
    for iteration in range(cfg.max_iterations):
        candidate, record = run_iteration(bank, cfg, corpus, iteration, cooc)
        history.append(record)
        final_model = candidate.model
        if callback is not None:
            callback(candidate, record)
        if record.stop.stop:
            reason = record.stop.reason or "stopped"
            break
    return ItarResult(bank, history, final_model, reason)
