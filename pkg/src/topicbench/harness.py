"""Experiment orchestration: baseline series, grid search, bank baselines,
ablations, and report generation.

The model zoo covers the standard comparison set: unregularized EM (plsa),
uniform-prior smoothing (lda), sparsing and decorrelation variants with one
smoothed background topic (sparse, decorr, artm), bank-accumulation
baselines without fixing or sifting (topicbank, topicbank2), and the
iterative accumulate-and-sift loop in both sifting versions (itar, itar2).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CooccurrenceStats, Corpus, build_cooccurrence, unigram_distribution
from .errors import ConfigError, DataError
from .itar import (
    BankEntry,
    ItarConfig,
    ItarResult,
    TopicBank,
    compute_thresholds,
    run_itar,
    save_history,
)
from .metrics import (
    Thresholds,
    evaluate_topics,
    percentile,
    perplexity,
    relative_density,
    summarize_model,
)
from .model import (
    TopicModel,
    TrainStats,
    default_roles,
    em_fit,
    infer_theta_fixed_phi,
    init_model,
    log_likelihood,
)
from .regularizers import SmoothSparse, base_stack

logger = logging.getLogger(__name__)

SERIES_MODELS = ("plsa", "lda", "sparse", "decorr", "artm")
ITERATIVE_MODELS = ("topicbank", "topicbank2", "itar", "itar2")
MODEL_NAMES = SERIES_MODELS + ITERATIVE_MODELS

DEFAULT_SPARSE_WEIGHT = -0.05
DEFAULT_SMOOTH_WEIGHT = 0.05
DEFAULT_DECORR_WEIGHT = 0.01
DEFAULT_LDA_PRIOR = 0.1


@dataclass
class ModelSpec:
    """A trainable non-iterative model configuration.

    ``sparse_weight`` / ``smooth_weight`` / ``decorr_weight`` are relative
    coefficients for the base stack; ``lda_word_prior`` is an absolute
    smoothing mass per topic spread uniformly over the vocabulary and
    ``lda_doc_prior`` an absolute additive per theta cell.
    """

    name: str
    num_topics: int
    runs: int = 20
    em_iterations: int = 30
    background_topics: int = 0
    sparse_weight: float = 0.0
    smooth_weight: float = 0.0
    decorr_weight: float = 0.0
    lda_word_prior: float = 0.0
    lda_doc_prior: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.num_topics < 1:
            raise ConfigError("num_topics must be positive")
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.background_topics not in (0, 1):
            raise ConfigError("background_topics must be 0 or 1")
        if self.name == "plsa" and self.has_regularizers:
            raise ConfigError("plsa takes no regularizers")
        if self.name in ("sparse", "decorr", "artm") and (
            self.background_topics != 1 or self.smooth_weight == 0.0
        ):
            raise ConfigError(f"{self.name} requires one smoothed background topic")

    @property
    def has_regularizers(self) -> bool:
        return any(
            w != 0.0
            for w in (
                self.sparse_weight,
                self.smooth_weight,
                self.decorr_weight,
                self.lda_word_prior,
                self.lda_doc_prior,
            )
        )


def make_model_spec(name: str, num_topics: int, runs: int = 20, em_iterations: int = 30, workers: int = 1) -> ModelSpec:
    """Zoo defaults for the non-iterative models."""
    common = dict(num_topics=num_topics, runs=runs, em_iterations=em_iterations, workers=workers)
    if name == "plsa":
        return ModelSpec(name="plsa", **common)
    if name == "lda":
        return ModelSpec(name="lda", lda_word_prior=DEFAULT_LDA_PRIOR, lda_doc_prior=DEFAULT_LDA_PRIOR, **common)
    if name == "sparse":
        return ModelSpec(
            name="sparse",
            background_topics=1,
            sparse_weight=DEFAULT_SPARSE_WEIGHT,
            smooth_weight=DEFAULT_SMOOTH_WEIGHT,
            **common,
        )
    if name == "decorr":
        return ModelSpec(
            name="decorr",
            background_topics=1,
            decorr_weight=DEFAULT_DECORR_WEIGHT,
            smooth_weight=DEFAULT_SMOOTH_WEIGHT,
            **common,
        )
    if name == "artm":
        return ModelSpec(
            name="artm",
            background_topics=1,
            sparse_weight=DEFAULT_SPARSE_WEIGHT,
            smooth_weight=DEFAULT_SMOOTH_WEIGHT,
            decorr_weight=DEFAULT_DECORR_WEIGHT,
            **common,
        )
    raise ConfigError(f"unknown series model {name!r} (expected one of {SERIES_MODELS})")


def build_spec_regularizers(spec: ModelSpec, model: TopicModel) -> list:
    regs = base_stack(
        model.domain_indices,
        model.background_indices,
        sparse_weight=spec.sparse_weight,
        smooth_weight=spec.smooth_weight,
        decorr_weight=spec.decorr_weight,
    )
    if spec.lda_word_prior != 0.0 or spec.lda_doc_prior != 0.0:
        all_topics = list(range(model.num_topics))
        regs.append(
            SmoothSparse(
                all_topics,
                word_weight=spec.lda_word_prior,
                doc_weight=spec.lda_doc_prior * model.num_topics,
                name="uniform_prior",
            )
        )
    return regs


def train_model(spec: ModelSpec, corpus: Corpus, seed: int) -> tuple[TopicModel, TrainStats]:
    """One full training from the seeded random start."""
    roles = default_roles(spec.num_topics + spec.background_topics, spec.background_topics)
    model = init_model(
        corpus.vocab_size,
        spec.num_topics + spec.background_topics,
        seed=seed,
        roles=roles,
        num_documents=corpus.num_documents,
    )
    regs = build_spec_regularizers(spec, model)
    stats = em_fit(model, corpus, regs, iterations=spec.em_iterations, workers=spec.workers)
    return model, stats


# -- series -------------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    perplexity: float
    coherence: float
    intratext: float | None
    diversity: float | None
    topic_coherences: list[float]
    topic_intratext: list[float] | None
    good_count: int | None = None
    tplus_pct: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SeriesResult:
    """Metrics of one model trained ``runs`` times with seeds 0..runs-1."""

    name: str
    num_topics: int
    runs: list[RunResult]
    best_run: int | None = None
    thresholds: Thresholds | None = None

    def pooled_coherences(self) -> list[float]:
        return [c for run in self.runs for c in run.topic_coherences]

    def pooled_intratext(self) -> list[float]:
        return [c for run in self.runs if run.topic_intratext for c in run.topic_intratext]

    def apply_thresholds(self, thresholds: Thresholds) -> None:
        """Count good topics per run by top-token coherence and pick the best
        run; ties go to the lower run index."""
        self.thresholds = thresholds
        for run in self.runs:
            run.good_count = sum(1 for c in run.topic_coherences if c >= thresholds.theta_good)
            run.tplus_pct = 100.0 * run.good_count / self.num_topics
        self.best_run = max(range(len(self.runs)), key=lambda i: (self.runs[i].good_count, -i))

    def best(self) -> RunResult:
        if self.best_run is None:
            raise ValueError("apply_thresholds first")
        return self.runs[self.best_run]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_topics": self.num_topics,
            "runs": [r.to_dict() for r in self.runs],
            "best_run": self.best_run,
            "thresholds": None if self.thresholds is None else self.thresholds.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeriesResult":
        runs = [RunResult(**r) for r in data["runs"]]
        thresholds = None if data.get("thresholds") is None else Thresholds.from_dict(data["thresholds"])
        return cls(data["name"], int(data["num_topics"]), runs, data.get("best_run"), thresholds)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SeriesResult":
        path = Path(path)
        if not path.exists():
            raise DataError(f"series file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def run_series(
    spec: ModelSpec,
    corpus: Corpus,
    cooc: CooccurrenceStats | None = None,
    thresholds: Thresholds | None = None,
    top_k: int = 20,
) -> SeriesResult:
    """Train ``spec.runs`` independent models with seed = run index and
    collect their metrics.  Thresholds, when given, immediately classify
    runs; otherwise the series can feed threshold pooling first and be
    classified later."""
    if cooc is None:
        cooc = build_cooccurrence(corpus)
    results = []
    for seed in range(spec.runs):
        model, _ = train_model(spec, corpus, seed)
        qualities = evaluate_topics(model, corpus, cooc, top_k=top_k, with_intratext=corpus.has_sequences)
        summary = summarize_model(model, corpus, qualities, workers=spec.workers)
        live = [c for c in qualities if not c.degenerate]
        results.append(
            RunResult(
                seed=seed,
                perplexity=summary["perplexity"],
                coherence=summary["coherence"],
                intratext=summary["intratext"],
                diversity=summary["diversity"],
                topic_coherences=[c.coherence for c in live],
                topic_intratext=[c.intratext for c in live] if corpus.has_sequences else None,
            )
        )
    series = SeriesResult(spec.name, spec.num_topics, results)
    if thresholds is not None:
        series.apply_thresholds(thresholds)
    return series


def retrain_best(spec: ModelSpec, corpus: Corpus, series: SeriesResult) -> TopicModel:
    """Rebuild the best run's model; training is deterministic per seed, so
    this reproduces it exactly."""
    model, _ = train_model(spec, corpus, series.best().seed)
    return model


def pool_thresholds(
    corpus: Corpus,
    num_topics: int,
    pool_models: Sequence[str] = ("lda", "sparse", "decorr"),
    runs: int = 20,
    em_iterations: int = 30,
    good_quantile: float = 0.8,
    bad_quantile: float = 0.2,
    cooc: CooccurrenceStats | None = None,
    workers: int = 1,
) -> tuple[Thresholds, Thresholds | None, dict[str, SeriesResult]]:
    """Train the pooled baseline series and cut coherence thresholds at the
    configured percentiles.

    Plain EM (plsa) is excluded from the default pool; passing it in
    ``pool_models`` includes it.  Returns top-token thresholds, intra-text
    thresholds when the corpus has word order (None otherwise), and the
    baseline series keyed by model name for reuse.
    """
    if cooc is None:
        cooc = build_cooccurrence(corpus)
    series_by_name: dict[str, SeriesResult] = {}
    pooled_tok: list[float] = []
    pooled_intra: list[float] = []
    for name in pool_models:
        spec = make_model_spec(name, num_topics, runs=runs, em_iterations=em_iterations, workers=workers)
        series = run_series(spec, corpus, cooc)
        series_by_name[name] = series
        pooled_tok.extend(series.pooled_coherences())
        pooled_intra.extend(series.pooled_intratext())
    source = f"pool={','.join(pool_models)};runs={runs};q={good_quantile:g}/{bad_quantile:g}"
    thresholds_tok = compute_thresholds(pooled_tok, good_quantile, bad_quantile, source=source + ";criterion=toptoken")
    thresholds_intra = None
    if pooled_intra:
        thresholds_intra = compute_thresholds(
            pooled_intra, good_quantile, bad_quantile, source=source + ";criterion=intratext"
        )
    return thresholds_tok, thresholds_intra, series_by_name


# -- grid search ---------------------------------------------------------------


@dataclass
class GridSearchResult:
    chosen: float
    objective: str
    table: list[tuple[float, float]]
    baseline_perplexity: float | None = None
    warning: str | None = None


def _mean_final_perplexity(spec_or_cfg, corpus, cooc, runs: int) -> float:
    if isinstance(spec_or_cfg, ModelSpec):
        spec = replace(spec_or_cfg, runs=runs)
        values = []
        for seed in range(runs):
            model, _ = train_model(spec, corpus, seed)
            values.append(perplexity(model.log_likelihood(corpus, workers=spec.workers), corpus.total_tokens))
        return float(np.mean(values))
    result = run_itar(spec_or_cfg, corpus, cooc)
    if not result.history:
        raise DataError("iterative run produced no iterations")
    return float(result.history[-1].metrics["perplexity"])


def grid_search_tau(
    spec,
    corpus: Corpus,
    grid: Sequence[float],
    objective: str = "min_perplexity",
    vary: str = "decorr_weight",
    runs: int = 3,
    target: float = 0.10,
    cooc: CooccurrenceStats | None = None,
) -> GridSearchResult:
    """Pick a coefficient from a grid.

    ``vary`` names the ``ModelSpec`` (or iterative config) field the grid
    sets.  ``min_perplexity`` picks the grid value with the lowest mean
    final perplexity.  ``perplexity_degradation`` orders the grid by
    coefficient magnitude and picks the smallest one whose perplexity
    exceeds the zero-coefficient baseline by at least ``target``; when no
    grid point degrades that much, the largest is returned with a warning.
    Each evaluation trains ``runs`` seeds (a deliberate light budget).
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("grid must be nonempty")
    if not hasattr(spec, vary):
        raise ConfigError(f"{type(spec).__name__} has no field {vary!r}")
    if cooc is None and not isinstance(spec, ModelSpec):
        cooc = build_cooccurrence(corpus)

    def evaluate(value: float) -> float:
        return _mean_final_perplexity(replace(spec, **{vary: value}), corpus, cooc, runs)

    table = [(float(v), evaluate(v)) for v in grid]

    if objective == "min_perplexity":
        best = min(range(len(table)), key=lambda i: (table[i][1], i))
        return GridSearchResult(table[best][0], objective, table)

    if objective == "perplexity_degradation":
        baseline = evaluate(0.0)
        ordered = sorted(table, key=lambda pair: abs(pair[0]))
        for value, ppl in ordered:
            if ppl >= baseline * (1.0 + target):
                return GridSearchResult(value, objective, table, baseline_perplexity=baseline)
        chosen = ordered[-1][0]
        warning = (
            f"no grid point degraded perplexity by {target:.0%} over baseline "
            f"{baseline:.2f}; returning the largest coefficient {chosen:g}"
        )
        logger.warning(warning)
        return GridSearchResult(chosen, objective, table, baseline_perplexity=baseline, warning=warning)

    raise ConfigError(f"unknown grid search objective {objective!r}")


# -- bank baselines -------------------------------------------------------------


@dataclass
class TopicBankConfig:
    """Accumulate high-coherence topics from independent trainings.

    The plain variant admits topics above the 90th percentile of each new
    model's own coherences; the shared variant uses the collection-level
    ``theta_good`` threshold.  Near-duplicates (cosine at or above
    ``dedup_cosine`` to any banked column) are skipped.
    """

    num_topics: int
    iterations: int = 20
    base: str = "plsa"
    shared_thresholds: bool = False
    own_quantile: float = 0.9
    dedup_cosine: float = 0.9
    em_iterations: int = 30
    top_k: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.base not in ("plsa", "artm"):
            raise ConfigError("topic bank base must be plsa or artm")


@dataclass
class TopicBankResult:
    bank: TopicBank
    history: list[dict]
    final: dict
    topic_coherences: list[float]
    topic_intratext: list[float] | None


def _max_cosine_to_bank(column: np.ndarray, bank_matrix: np.ndarray) -> float:
    if bank_matrix.shape[1] == 0:
        return 0.0
    norms = np.linalg.norm(bank_matrix, axis=0) * np.linalg.norm(column)
    norms = np.where(norms == 0.0, 1.0, norms)
    return float(np.max((column @ bank_matrix) / norms))


def run_topicbank(
    corpus: Corpus,
    cfg: TopicBankConfig,
    thresholds: Thresholds | None = None,
    cooc: CooccurrenceStats | None = None,
) -> TopicBankResult:
    """Train fresh base models and accumulate their good topics until the
    bank reaches ``num_topics`` columns or the iteration budget runs out."""
    if cfg.shared_thresholds and thresholds is None:
        raise ConfigError("shared-threshold bank accumulation needs thresholds")
    if cooc is None:
        cooc = build_cooccurrence(corpus)
    spec = make_model_spec(cfg.base, cfg.num_topics, runs=1, em_iterations=cfg.em_iterations, workers=cfg.workers)
    bank = TopicBank(corpus.vocabulary)
    history: list[dict] = []

    for iteration in range(cfg.iterations):
        model, _ = train_model(spec, corpus, seed=iteration)
        qualities = evaluate_topics(model, corpus, cooc, top_k=cfg.top_k, with_intratext=False)
        live = [c for c in qualities if not c.degenerate]
        if cfg.shared_thresholds:
            cut = thresholds.theta_good
        else:
            cut = percentile([c.coherence for c in live], cfg.own_quantile) if live else float("inf")
        added = 0
        skipped_dup = 0
        for card in sorted(live, key=lambda c: c.topic):
            if len(bank) >= cfg.num_topics:
                break
            if card.coherence < cut:
                continue
            column = model.phi[:, card.topic].copy()
            if _max_cosine_to_bank(column, bank.matrix("good")) >= cfg.dedup_cosine:
                skipped_dup += 1
                continue
            bank.add(
                BankEntry(
                    id=f"i{iteration:03d}t{card.topic:03d}",
                    label="good",
                    source_iteration=iteration,
                    coherence=card.coherence,
                    column=column,
                )
            )
            added += 1
        history.append(
            {
                "iteration": iteration,
                "added": added,
                "skipped_duplicates": skipped_dup,
                "banked_total": len(bank),
                "good_pct": 100.0 * min(len(bank), cfg.num_topics) / cfg.num_topics,
            }
        )
        if len(bank) >= cfg.num_topics:
            break

    if len(bank) == 0:
        raise DataError("bank accumulation collected no topics")

    bank_phi = bank.matrix("good")
    ppl_with_bg = bank_perplexity(bank_phi, corpus, with_background=True, workers=cfg.workers)
    ppl_bank_only = bank_perplexity(bank_phi, corpus, with_background=False, workers=cfg.workers)
    theta = infer_theta_fixed_phi(bank_phi, corpus, iterations=cfg.em_iterations, workers=cfg.workers)
    bank_model = TopicModel(bank_phi, default_roles(bank_phi.shape[1]), seed=0, theta_dt=np.ascontiguousarray(theta.T))
    qualities = evaluate_topics(bank_model, corpus, cooc, top_k=cfg.top_k, with_intratext=corpus.has_sequences)
    summary = summarize_model(bank_model, corpus, qualities, workers=cfg.workers, ppl=ppl_bank_only)
    final = {
        "perplexity_with_background": ppl_with_bg,
        "perplexity_bank_only": ppl_bank_only,
        "coherence": summary["coherence"],
        "intratext": summary["intratext"],
        "diversity": summary["diversity"],
        "banked": len(bank),
        "tplus_pct": 100.0 * len(bank) / cfg.num_topics,
    }
    live = [c for c in qualities if not c.degenerate]
    return TopicBankResult(
        bank=bank,
        history=history,
        final=final,
        topic_coherences=[c.coherence for c in live],
        topic_intratext=[c.intratext for c in live] if corpus.has_sequences else None,
    )


def bank_perplexity(
    bank_phi: np.ndarray,
    corpus: Corpus,
    with_background: bool,
    infer_iterations: int = 50,
    workers: int = 1,
) -> float:
    """Perplexity of the bank used as a frozen model.

    With ``with_background`` the corpus unigram distribution is appended as
    one extra mixture column (it takes part in inference and likelihood
    only, never in the topic metrics); document mixtures are refit either
    way."""
    bank_phi = np.asarray(bank_phi, dtype=np.float64)
    if bank_phi.ndim != 2 or bank_phi.shape[1] == 0:
        raise DataError("bank is empty")
    phi = bank_phi
    if with_background:
        background = unigram_distribution(corpus)[:, None]
        phi = np.hstack([bank_phi, background])
    theta = infer_theta_fixed_phi(phi, corpus, iterations=infer_iterations, workers=workers)
    return perplexity(log_likelihood(phi, theta, corpus, workers=workers), corpus.total_tokens)


# -- ablations -------------------------------------------------------------------


def ablation_configs(base_cfg: ItarConfig) -> list[ItarConfig]:
    """All eight fix/sift-bad/sift-good flag combinations of a base config,
    full configuration first."""
    configs = []
    for fix in (True, False):
        for sift_bad in (True, False):
            for sift_good in (True, False):
                configs.append(replace(base_cfg, fix_good=fix, sift_bad=sift_bad, sift_good=sift_good))
    return configs


def run_ablation(
    corpus: Corpus,
    base_cfg: ItarConfig,
    cooc: CooccurrenceStats | None = None,
) -> dict[str, ItarResult]:
    """Run the loop once per flag combination; keyed by config name."""
    if cooc is None:
        cooc = build_cooccurrence(corpus)
    results: dict[str, ItarResult] = {}
    for cfg in ablation_configs(base_cfg):
        results[cfg.name] = run_itar(cfg, corpus, cooc)
    return results


def itar_summary(result: ItarResult, cfg: ItarConfig) -> dict:
    """Flatten an iterative run for reporting."""
    last = result.history[-1]
    cum_bad = sum(r.bad_added for r in result.history)
    live = [t for t in last.topics if not t.degenerate]
    return {
        "name": cfg.name,
        "kind": "itar",
        "iterations_used": len(result.history),
        "max_iterations": cfg.max_iterations,
        "iterations_pct": 100.0 * len(result.history) / cfg.max_iterations,
        "stop_reason": result.stop_reason,
        "perplexity": last.metrics["perplexity"],
        "perplexity_with_background": None,
        "coherence": last.metrics["coherence"],
        "intratext": last.metrics["intratext"],
        "diversity": last.metrics["diversity"],
        "tplus_pct": last.metrics["tplus_pct"],
        "tminus_pct": 100.0 * cum_bad / cfg.num_topics,
        "bank_good_total": last.bank_good_total,
        "bank_bad_total": last.bank_bad_total,
        "topic_coherences": [t.coherence for t in live],
        "topic_intratext": (
            [t.intratext for t in live] if all(t.intratext is not None for t in live) and live else None
        ),
        "series": [
            {"iteration": r.iteration, "good_pct": r.metrics["tplus_pct"]} for r in result.history
        ],
    }


# -- result persistence and report ---------------------------------------------

THRESHOLDS_FILE = "thresholds.json"
THRESHOLDS_INTRATEXT_FILE = "thresholds_intratext.json"
SERIES_DIR = "series"
ITAR_DIR = "itar"
TOPICBANK_DIR = "topicbank"
REPORT_DIR = "report"

DENSITY_BASELINE = 0.2


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def series_record(series: SeriesResult) -> dict:
    """Report row for a seed series, taken from its best run."""
    best = series.best()
    return {
        "name": series.name,
        "kind": "series",
        "perplexity": best.perplexity,
        "perplexity_with_background": None,
        "coherence": best.coherence,
        "intratext": best.intratext,
        "diversity": best.diversity,
        "tplus_pct": best.tplus_pct,
        "topic_coherences": best.topic_coherences,
        "topic_intratext": best.topic_intratext,
        "series": None,
    }


def bank_record(name: str, result: TopicBankResult) -> dict:
    return {
        "name": name,
        "kind": "bank",
        "perplexity": result.final["perplexity_bank_only"],
        "perplexity_with_background": result.final["perplexity_with_background"],
        "coherence": result.final["coherence"],
        "intratext": result.final["intratext"],
        "diversity": result.final["diversity"],
        "tplus_pct": result.final["tplus_pct"],
        "topic_coherences": result.topic_coherences,
        "topic_intratext": result.topic_intratext,
        "series": [
            {"iteration": h["iteration"], "good_pct": h["good_pct"]} for h in result.history
        ],
    }


def save_series_result(out_dir: str | Path, series: SeriesResult) -> Path:
    path = Path(out_dir) / SERIES_DIR / f"{series.name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    series.save(path)
    return path


def save_itar_outputs(out_dir: str | Path, cfg: ItarConfig, result: ItarResult, name: str | None = None) -> Path:
    base = Path(out_dir) / ITAR_DIR / (name or cfg.name)
    base.mkdir(parents=True, exist_ok=True)
    save_history(result.history, base / "history.jsonl")
    result.bank.save_jsonl(base / "bank.jsonl")
    summary = itar_summary(result, cfg)
    if name is not None:
        summary["name"] = name
    _write_json(base / "summary.json", summary)
    return base


def save_topicbank_outputs(out_dir: str | Path, name: str, result: TopicBankResult) -> Path:
    base = Path(out_dir) / TOPICBANK_DIR / name
    base.mkdir(parents=True, exist_ok=True)
    result.bank.save_jsonl(base / "bank.jsonl")
    payload = bank_record(name, result)
    payload["history"] = result.history
    _write_json(base / "summary.json", payload)
    return base


def _model_order_key(name: str) -> tuple[int, str]:
    try:
        return (MODEL_NAMES.index(name), name)
    except ValueError:
        return (len(MODEL_NAMES), name)


def collect_results(out_dir: str | Path) -> dict:
    """Gather everything previous stages wrote under ``out_dir`` into the
    report input: thresholds plus one normalized record per model, in
    canonical zoo order (unknown names follow alphabetically)."""
    out_dir = Path(out_dir)
    thresholds = None
    thresholds_intra = None
    if (out_dir / THRESHOLDS_FILE).exists():
        thresholds = Thresholds.load(out_dir / THRESHOLDS_FILE)
    if (out_dir / THRESHOLDS_INTRATEXT_FILE).exists():
        thresholds_intra = Thresholds.load(out_dir / THRESHOLDS_INTRATEXT_FILE)

    records = []
    series_dir = out_dir / SERIES_DIR
    if series_dir.is_dir():
        for path in sorted(series_dir.glob("*.json")):
            series = SeriesResult.load(path)
            if series.best_run is None:
                if thresholds is None:
                    raise DataError(f"{path} has no per-run classification and no thresholds were found")
                series.apply_thresholds(thresholds)
            records.append(series_record(series))
    for group, kind in ((TOPICBANK_DIR, "bank"), (ITAR_DIR, "itar")):
        group_dir = out_dir / group
        if not group_dir.is_dir():
            continue
        for path in sorted(group_dir.glob("*/summary.json")):
            with open(path, "r", encoding="utf-8") as fh:
                record = json.load(fh)
            record["kind"] = kind
            records.append(record)

    records.sort(key=lambda r: _model_order_key(r["name"]))
    return {"thresholds": thresholds, "thresholds_intratext": thresholds_intra, "records": records}


def _fmt(value, digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _fmt_ppl(record: dict) -> str:
    if record.get("perplexity_with_background") is not None:
        return f"{record['perplexity_with_background'] / 1000.0:.2f}/{record['perplexity'] / 1000.0:.2f}"
    return f"{record['perplexity'] / 1000.0:.2f}"


def _aligned_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i]) for i in range(len(header))]
    lines = []
    for cells in [header] + rows:
        padded = [cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        lines.append("  ".join(padded).rstrip())
    return "\n".join(lines) + "\n"


def _density_cells(record: dict, thresholds, thresholds_intra, baseline: float) -> tuple[float | None, float | None]:
    d_tok = None
    d_joint = None
    if thresholds is not None and record.get("tplus_pct") is not None:
        d_tok = (record["tplus_pct"] / 100.0) / baseline
    coh = record.get("topic_coherences")
    intra = record.get("topic_intratext")
    if thresholds is not None and thresholds_intra is not None and coh and intra:
        intra_good = [(c, i) for c, i in zip(coh, intra) if i is not None and i >= thresholds_intra.theta_good]
        if intra_good:
            good_both = sum(1 for c, _ in intra_good if c >= thresholds.theta_good)
            d_joint = relative_density(good_both, len(intra_good), baseline)
    return d_tok, d_joint


def generate_report(data: dict, out_dir: str | Path, baseline_density: float = DENSITY_BASELINE) -> Path:
    """Write the comparison report under ``out_dir``/report.

    Emits a machine-readable summary (CSV, raw values), its aligned text
    rendering (perplexity scaled by 1000, bank models as
    with-background/bank-only), the per-iteration good-topic share of the
    iterative models as JSON, and the relative-density table.  Output is
    deterministic byte for byte for equal inputs.
    """
    out_dir = Path(out_dir)
    report_dir = out_dir / REPORT_DIR
    report_dir.mkdir(parents=True, exist_ok=True)
    records = data["records"]
    thresholds = data.get("thresholds")
    thresholds_intra = data.get("thresholds_intratext")

    with open(report_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["model", "perplexity", "perplexity_with_background", "coherence", "intratext", "tplus_pct", "diversity"]
        )
        for r in records:
            writer.writerow(
                [
                    r["name"],
                    f"{r['perplexity']:.6f}",
                    "" if r.get("perplexity_with_background") is None else f"{r['perplexity_with_background']:.6f}",
                    f"{r['coherence']:.6f}",
                    "" if r.get("intratext") is None else f"{r['intratext']:.6f}",
                    "" if r.get("tplus_pct") is None else f"{r['tplus_pct']:.2f}",
                    "" if r.get("diversity") is None else f"{r['diversity']:.6f}",
                ]
            )

    rows = [
        [
            r["name"],
            _fmt_ppl(r),
            _fmt(r["coherence"], 3),
            _fmt(r.get("tplus_pct"), 1),
            _fmt(r.get("diversity"), 3),
        ]
        for r in records
    ]
    with open(report_dir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write(_aligned_table(["model", "PPL/1000", "Coh", "T+%", "Div"], rows))

    series_payload = {
        r["name"]: {str(point["iteration"]): point["good_pct"] for point in r["series"]}
        for r in records
        if r.get("series")
    }
    _write_json(report_dir / "series.json", series_payload)

    density_rows = []
    with open(report_dir / "densities.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "reldens_toptoken", "reldens_toptoken_given_intratext"])
        for r in records:
            d_tok, d_joint = _density_cells(r, thresholds, thresholds_intra, baseline_density)
            writer.writerow(
                [
                    r["name"],
                    "" if d_tok is None else f"{d_tok:.4f}",
                    "" if d_joint is None else f"{d_joint:.4f}",
                ]
            )
            density_rows.append([r["name"], _fmt(d_tok, 2), _fmt(d_joint, 2)])
    with open(report_dir / "densities.txt", "w", encoding="utf-8") as fh:
        fh.write(_aligned_table(["model", "Tplustoptok", "Tplustoptok@Tplusintra"], density_rows))

    return report_dir
