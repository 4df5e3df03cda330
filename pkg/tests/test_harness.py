"""Model zoo, series running, grid search, bank baselines, and the report."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from topicbench import harness
from topicbench.errors import ConfigError, DataError
from topicbench.harness import (
    ITERATIVE_MODELS,
    MODEL_NAMES,
    SERIES_MODELS,
    GridSearchResult,
    ModelSpec,
    RunResult,
    SeriesResult,
    TopicBankConfig,
    _max_cosine_to_bank,
    ablation_configs,
    bank_perplexity,
    collect_results,
    generate_report,
    grid_search_tau,
    itar_summary,
    make_model_spec,
    pool_thresholds,
    retrain_best,
    run_itar,
    run_series,
    run_topicbank,
    save_itar_outputs,
    save_series_result,
    save_topicbank_outputs,
    train_model,
)
from topicbench.itar import ItarConfig
from topicbench.metrics import Thresholds


# -- the model zoo ------------------------------------------------------------


def test_zoo_covers_canonical_names():
    assert SERIES_MODELS == ("plsa", "lda", "sparse", "decorr", "artm")
    assert ITERATIVE_MODELS == ("topicbank", "topicbank2", "itar", "itar2")
    assert MODEL_NAMES == SERIES_MODELS + ITERATIVE_MODELS


def test_make_model_spec_defaults():
    plsa = make_model_spec("plsa", 10)
    assert not plsa.has_regularizers and plsa.background_topics == 0
    lda = make_model_spec("lda", 10)
    assert lda.lda_word_prior == 0.1 and lda.lda_doc_prior == 0.1
    sparse = make_model_spec("sparse", 10)
    assert sparse.sparse_weight == -0.05 and sparse.smooth_weight == 0.05
    assert sparse.background_topics == 1 and sparse.decorr_weight == 0.0
    decorr = make_model_spec("decorr", 10)
    assert decorr.decorr_weight == 0.01 and decorr.sparse_weight == 0.0
    artm = make_model_spec("artm", 10)
    assert artm.sparse_weight == -0.05 and artm.smooth_weight == 0.05 and artm.decorr_weight == 0.01
    with pytest.raises(ConfigError):
        make_model_spec("itar", 10)


def test_model_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec(name="plsa", num_topics=5, sparse_weight=-0.1)
    with pytest.raises(ConfigError):
        ModelSpec(name="sparse", num_topics=5, sparse_weight=-0.1)  # no background
    with pytest.raises(ConfigError):
        ModelSpec(name="artm", num_topics=5, background_topics=1, sparse_weight=-0.1)  # no smoothing
    with pytest.raises(ConfigError):
        ModelSpec(name="plsa", num_topics=0)
    with pytest.raises(ConfigError):
        ModelSpec(name="plsa", num_topics=5, runs=0)
    with pytest.raises(ConfigError):
        ModelSpec(name="plsa", num_topics=5, background_topics=2)


def test_train_model_is_seed_deterministic(corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 4, em_iterations=5)
    a, _ = train_model(spec, corpus, seed=3)
    b, _ = train_model(spec, corpus, seed=3)
    c, _ = train_model(spec, corpus, seed=4)
    assert np.array_equal(a.phi, b.phi)
    assert not np.array_equal(a.phi, c.phi)
    assert a.background_indices.tolist() == [4]  # background occupies the extra column


# -- series ---------------------------------------------------------------------


def hand_series():
    runs = [
        RunResult(0, 100.0, 0.5, None, 1.0, [0.9, 0.1, 0.5], None),
        RunResult(1, 90.0, 0.6, None, 1.0, [0.9, 0.85, 0.5], None),
        RunResult(2, 95.0, 0.6, None, 1.0, [0.95, 0.9, 0.1], None),
    ]
    return SeriesResult("plsa", 3, runs)


def test_apply_thresholds_counts_and_breaks_ties_low():
    series = hand_series()
    series.apply_thresholds(Thresholds(theta_good=0.85, theta_bad=0.2))
    assert [r.good_count for r in series.runs] == [1, 2, 2]
    assert [r.tplus_pct for r in series.runs] == [pytest.approx(100.0 / 3), pytest.approx(200.0 / 3), pytest.approx(200.0 / 3)]
    assert series.best_run == 1  # tie between runs 1 and 2 goes to the earlier


def test_series_pooling_flattens_all_runs():
    series = hand_series()
    assert series.pooled_coherences() == [0.9, 0.1, 0.5, 0.9, 0.85, 0.5, 0.95, 0.9, 0.1]
    assert series.pooled_intratext() == []


def test_series_round_trip(tmp_path):
    series = hand_series()
    series.apply_thresholds(Thresholds(theta_good=0.85, theta_bad=0.2))
    path = tmp_path / "series.json"
    series.save(path)
    loaded = SeriesResult.load(path)
    assert loaded == series
    with pytest.raises(DataError):
        SeriesResult.load(tmp_path / "missing.json")


def test_best_requires_classification():
    with pytest.raises(ValueError):
        hand_series().best()


@pytest.fixture(scope="module")
def quick_series(corpus_small, cooc_small, thresholds_small):
    corpus, _ = corpus_small
    thresholds, _ = thresholds_small
    spec = make_model_spec("artm", 5, runs=3, em_iterations=8)
    return run_series(spec, corpus, cooc_small, thresholds=thresholds), spec


def test_run_series_collects_per_seed_metrics(quick_series):
    series, _ = quick_series
    assert [r.seed for r in series.runs] == [0, 1, 2]
    assert series.best_run is not None
    for run in series.runs:
        assert run.perplexity > 0
        assert run.good_count is not None
        assert len(run.topic_coherences) <= series.num_topics
        assert run.topic_intratext is not None
        assert len(run.topic_intratext) == len(run.topic_coherences)


def test_retrain_best_reproduces_best_run(corpus_small, quick_series):
    corpus, _ = corpus_small
    series, spec = quick_series
    model = retrain_best(spec, corpus, series)
    direct, _ = train_model(spec, corpus, series.best().seed)
    assert np.array_equal(model.phi, direct.phi)


def test_pool_thresholds_structure():
    from topicbench.synth import synth_corpus

    corpus, _ = synth_corpus(seed=11, vocab_size=30, n_topics=3, n_docs=60, mean_len=30)
    tok, intra, series_by_name = pool_thresholds(corpus, num_topics=3, runs=2, em_iterations=5)
    assert set(series_by_name) == {"lda", "sparse", "decorr"}
    assert tok.theta_good >= tok.theta_bad
    assert "pool=lda,sparse,decorr" in tok.source
    assert intra is not None  # synthetic corpora carry word order
    assert intra.theta_good >= intra.theta_bad


# -- grid search -------------------------------------------------------------------


def fake_perplexities(values: dict[float, float]):
    def fake(spec_or_cfg, corpus, cooc, runs):
        return values[getattr(spec_or_cfg, "decorr_weight")]

    return fake


def test_grid_search_min_perplexity_tie_goes_to_earlier(monkeypatch, corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 5)
    monkeypatch.setattr(harness, "_mean_final_perplexity", fake_perplexities({0.1: 50.0, 0.2: 40.0, 0.3: 40.0}))
    result = grid_search_tau(spec, corpus, [0.1, 0.2, 0.3], objective="min_perplexity")
    assert result.chosen == 0.2
    assert result.table == [(0.1, 50.0), (0.2, 40.0), (0.3, 40.0)]
    assert result.warning is None


def test_grid_search_degradation_picks_smallest_magnitude(monkeypatch, corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 5)
    values = {0.0: 100.0, 0.3: 105.0, 0.1: 108.0, 0.2: 115.0}
    monkeypatch.setattr(harness, "_mean_final_perplexity", fake_perplexities(values))
    result = grid_search_tau(spec, corpus, [0.3, 0.1, 0.2], objective="perplexity_degradation", target=0.10)
    # 0.1 is the smallest magnitude but only degrades by 8%; 0.2 crosses 10%
    assert result.chosen == 0.2
    assert result.baseline_perplexity == 100.0
    assert result.warning is None


def test_grid_search_degradation_falls_back_to_largest(monkeypatch, corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 5)
    values = {0.0: 100.0, 0.1: 101.0, 0.2: 102.0}
    monkeypatch.setattr(harness, "_mean_final_perplexity", fake_perplexities(values))
    result = grid_search_tau(spec, corpus, [0.1, 0.2], objective="perplexity_degradation", target=0.10)
    assert result.chosen == 0.2
    assert result.warning is not None


def test_grid_search_validation(corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 5)
    with pytest.raises(ConfigError):
        grid_search_tau(spec, corpus, [], objective="min_perplexity")
    with pytest.raises(ConfigError):
        grid_search_tau(spec, corpus, [0.1], vary="no_such_field")
    with pytest.raises(ConfigError):
        grid_search_tau(spec, corpus, [0.1], objective="vibes")


def test_grid_search_runs_real_models(corpus_small):
    corpus, _ = corpus_small
    spec = make_model_spec("artm", 4, em_iterations=4)
    result = grid_search_tau(spec, corpus, [0.005, 0.02], runs=1)
    assert result.chosen in (0.005, 0.02)
    assert len(result.table) == 2
    assert all(ppl > 0 for _, ppl in result.table)


# -- bank baselines ------------------------------------------------------------------


def test_max_cosine_to_bank():
    column = np.array([1.0, 0.0])
    assert _max_cosine_to_bank(column, np.zeros((2, 0))) == 0.0
    bank = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert _max_cosine_to_bank(column, bank) == pytest.approx(1.0)


def test_bank_perplexity_rejects_empty_bank(corpus_small):
    corpus, _ = corpus_small
    with pytest.raises(DataError):
        bank_perplexity(np.zeros((corpus.vocab_size, 0)), corpus, with_background=True)


def test_background_column_never_hurts_perplexity(corpus_small):
    corpus, truth = corpus_small
    bank_phi = truth.phi[:, :2]
    with_bg = bank_perplexity(bank_phi, corpus, with_background=True, infer_iterations=20)
    bank_only = bank_perplexity(bank_phi, corpus, with_background=False, infer_iterations=20)
    assert with_bg <= bank_only


def test_topicbank_config_validation():
    with pytest.raises(ConfigError):
        TopicBankConfig(num_topics=5, base="lda")


def test_run_topicbank_requires_thresholds_when_shared(corpus_small, cooc_small):
    corpus, _ = corpus_small
    cfg = TopicBankConfig(num_topics=5, shared_thresholds=True)
    with pytest.raises(ConfigError):
        run_topicbank(corpus, cfg, thresholds=None, cooc=cooc_small)


def test_run_topicbank_accumulates(corpus_small, cooc_small):
    corpus, _ = corpus_small
    cfg = TopicBankConfig(num_topics=5, iterations=3, em_iterations=6)
    result = run_topicbank(corpus, cfg, cooc=cooc_small)
    assert 1 <= len(result.bank) <= 5
    assert all(e.label == "good" for e in result.bank.entries)
    banked = [h["banked_total"] for h in result.history]
    assert all(b >= a for a, b in zip(banked, banked[1:]))
    final = result.final
    assert final["banked"] == len(result.bank)
    assert final["tplus_pct"] == pytest.approx(100.0 * len(result.bank) / 5)
    assert final["perplexity_with_background"] <= final["perplexity_bank_only"]


# -- ablations ----------------------------------------------------------------------


def test_ablation_configs_enumerate_all_flag_combinations():
    cfg = ItarConfig(5, Thresholds(0.8, 0.2))
    configs = ablation_configs(cfg)
    names = [c.name for c in configs]
    assert len(names) == 8
    assert len(set(names)) == 8
    assert names[0] == "itar_1-1-1"
    assert set(names) == {f"itar_{f}-{b}-{g}" for f in "10" for b in "10" for g in "10"}


def test_itar_summary_arithmetic(corpus_small, cooc_small, thresholds_small):
    corpus, _ = corpus_small
    thresholds, _ = thresholds_small
    cfg = ItarConfig(5, thresholds, em_iterations=6, max_iterations=2)
    result = run_itar(cfg, corpus, cooc_small)
    summary = itar_summary(result, cfg)
    assert summary["name"] == cfg.name
    assert summary["iterations_used"] == len(result.history)
    assert summary["iterations_pct"] == pytest.approx(100.0 * len(result.history) / cfg.max_iterations)
    cum_bad = sum(r.bad_added for r in result.history)
    assert summary["tminus_pct"] == pytest.approx(100.0 * cum_bad / cfg.num_topics)
    assert summary["perplexity"] == result.history[-1].metrics["perplexity"]
    assert [p["iteration"] for p in summary["series"]] == list(range(len(result.history)))


# -- report --------------------------------------------------------------------------


def fake_report_data():
    thresholds = Thresholds(theta_good=0.8, theta_bad=0.2, source="test")
    thresholds_intra = Thresholds(theta_good=2.0, theta_bad=1.0, source="test")
    records = [
        {
            "name": "plsa",
            "kind": "series",
            "perplexity": 2100.0,
            "perplexity_with_background": None,
            "coherence": 0.456,
            "intratext": 2.5,
            "diversity": 1.234,
            "tplus_pct": 75.0,
            "topic_coherences": [0.9, 0.7, 0.9, 0.85],
            "topic_intratext": [2.5, 1.5, 2.1, 0.5],
            "series": None,
        },
        {
            "name": "topicbank",
            "kind": "bank",
            "perplexity": 3500.0,
            "perplexity_with_background": 1500.0,
            "coherence": 0.6,
            "intratext": None,
            "diversity": 0.9,
            "tplus_pct": 100.0,
            "topic_coherences": [0.9, 0.95],
            "topic_intratext": None,
            "series": [{"iteration": 0, "good_pct": 40.0}, {"iteration": 1, "good_pct": 100.0}],
        },
    ]
    return {"thresholds": thresholds, "thresholds_intratext": thresholds_intra, "records": records}


def report_digest(report_dir: Path) -> dict[str, str]:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(report_dir.iterdir())
    }


def test_generate_report_files_and_formats(tmp_path):
    report_dir = generate_report(fake_report_data(), tmp_path)
    assert sorted(p.name for p in report_dir.iterdir()) == [
        "densities.csv",
        "densities.txt",
        "series.json",
        "summary.csv",
        "summary.txt",
    ]
    summary_txt = (report_dir / "summary.txt").read_text()
    lines = summary_txt.splitlines()
    assert lines[0].split() == ["model", "PPL/1000", "Coh", "T+%", "Div"]
    assert lines[1].split() == ["plsa", "2.10", "0.456", "75.0", "1.234"]
    assert lines[2].split() == ["topicbank", "1.50/3.50", "0.600", "100.0", "0.900"]

    series = json.loads((report_dir / "series.json").read_text())
    assert series == {"topicbank": {"0": 40.0, "1": 100.0}}

    densities = (report_dir / "densities.csv").read_text().splitlines()
    assert densities[0] == "model,reldens_toptoken,reldens_toptoken_given_intratext"
    # plsa: 75% good over a 20% baseline; intra-good topics are the ones at
    # intratext >= 2.0, of which both clear the coherence cut
    assert densities[1] == "plsa,3.7500,5.0000"
    assert densities[2] == "topicbank,5.0000,"

    summary_csv = (report_dir / "summary.csv").read_text().splitlines()
    assert summary_csv[1].startswith("plsa,2100.000000,,0.456000,2.500000,75.00,1.234000")
    assert summary_csv[2].startswith("topicbank,3500.000000,1500.000000,")


def test_generate_report_is_byte_deterministic(tmp_path):
    first = generate_report(fake_report_data(), tmp_path / "a")
    second = generate_report(fake_report_data(), tmp_path / "b")
    assert report_digest(first) == report_digest(second)


def test_collect_results_roundtrip(tmp_path, corpus_small, cooc_small, thresholds_small):
    corpus, _ = corpus_small
    thresholds, thresholds_intra = thresholds_small
    out_dir = tmp_path / "results"
    out_dir.mkdir()
    thresholds.save(out_dir / "thresholds.json")
    thresholds_intra.save(out_dir / "thresholds_intratext.json")

    spec = make_model_spec("plsa", 5, runs=2, em_iterations=6)
    series = run_series(spec, corpus, cooc_small)  # unclassified on purpose
    save_series_result(out_dir, series)

    cfg = ItarConfig(5, thresholds, em_iterations=6, max_iterations=1)
    result = run_itar(cfg, corpus, cooc_small)
    save_itar_outputs(out_dir, cfg, result, name="itar")

    bank_cfg = TopicBankConfig(num_topics=5, iterations=2, em_iterations=6)
    bank_result = run_topicbank(corpus, bank_cfg, cooc=cooc_small)
    save_topicbank_outputs(out_dir, "topicbank", bank_result)

    data = collect_results(out_dir)
    assert data["thresholds"] == thresholds
    names = [r["name"] for r in data["records"]]
    assert names == ["plsa", "topicbank", "itar"]  # canonical zoo order
    kinds = {r["name"]: r["kind"] for r in data["records"]}
    assert kinds == {"plsa": "series", "itar": "itar", "topicbank": "bank"}
    plsa = data["records"][0]
    assert plsa["tplus_pct"] is not None  # thresholds were applied on collect

    report_dir = generate_report(data, out_dir)
    again = generate_report(collect_results(out_dir), out_dir)
    assert report_digest(report_dir) == report_digest(again)


def test_collect_results_needs_thresholds_for_unclassified_series(tmp_path, corpus_small, cooc_small):
    corpus, _ = corpus_small
    out_dir = tmp_path / "results"
    out_dir.mkdir()
    spec = make_model_spec("plsa", 5, runs=1, em_iterations=4)
    save_series_result(out_dir, run_series(spec, corpus, cooc_small))
    with pytest.raises(DataError):
        collect_results(out_dir)


def test_save_itar_outputs_name_override(tmp_path, corpus_small, cooc_small, thresholds_small):
    corpus, _ = corpus_small
    thresholds, _ = thresholds_small
    cfg = ItarConfig(5, thresholds, em_iterations=5, max_iterations=1, sift_version=2)
    result = run_itar(cfg, corpus, cooc_small)
    base = save_itar_outputs(tmp_path, cfg, result, name="itar2")
    assert base == tmp_path / "itar" / "itar2"
    summary = json.loads((base / "summary.json").read_text())
    assert summary["name"] == "itar2"
    assert (base / "history.jsonl").exists()
    assert (base / "bank.jsonl").exists()
