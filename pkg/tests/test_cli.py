"""End-to-end CLI workflow on a tiny synthetic corpus.

Subcommands run in-process through ``main(argv)``; exit codes and the files
each step leaves behind are the contract under test.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from topicbench.cli import main
from topicbench.corpus import Corpus
from topicbench.metrics import Thresholds


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One synthetic corpus plus pooled thresholds, shared by the workflow
    tests; steps append to the same output directory like a real run."""
    root = tmp_path_factory.mktemp("cli")
    corpus_path = root / "synth.tbc"
    out_dir = root / "results"
    assert (
        main(
            [
                "synth",
                "--seed", "3",
                "--vocab", "40",
                "--topics", "4",
                "--docs", "80",
                "--mean-len", "25",
                "--out", str(corpus_path),
                "--truth", str(root / "truth.npz"),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "thresholds",
                "--corpus", str(corpus_path),
                "--out", str(out_dir),
                "--t", "4",
                "--runs", "1",
                "--em-iters", "4",
            ]
        )
        == 0
    )
    return corpus_path, out_dir


def test_synth_writes_corpus_and_truth(work):
    corpus_path, _ = work
    corpus = Corpus.load(corpus_path)
    assert corpus.vocab_size <= 40
    assert corpus.num_documents == 80
    assert corpus.has_sequences
    truth = np.load(corpus_path.parent / "truth.npz")
    assert truth["phi"].shape[1] == 4


def test_thresholds_step_saves_cutoffs_and_series(work):
    _, out_dir = work
    tok = Thresholds.load(out_dir / "thresholds.json")
    assert tok.theta_bad <= tok.theta_good
    assert (out_dir / "thresholds_intratext.json").exists()
    assert (out_dir / "series" / "lda.json").exists()


def test_train_classifies_against_saved_thresholds(work, capsys):
    corpus_path, out_dir = work
    code = main(
        [
            "train",
            "--corpus", str(corpus_path),
            "--out", str(out_dir),
            "--t", "4",
            "--model", "plsa",
            "--runs", "2",
            "--em-iters", "4",
            "--save-phi",
        ]
    )
    assert code == 0
    assert "best run" in capsys.readouterr().out
    assert (out_dir / "series" / "plsa.json").exists()
    assert (out_dir / "plsa_best_phi.tsv").exists()


def test_itar_and_topicbank_and_report(work, capsys):
    corpus_path, out_dir = work
    common = ["--corpus", str(corpus_path), "--out", str(out_dir), "--t", "4", "--em-iters", "4"]
    assert main(["itar", *common, "--max-iters", "2"]) == 0
    assert "stop=" in capsys.readouterr().out
    assert (out_dir / "itar" / "itar" / "history.jsonl").exists()
    assert (out_dir / "itar" / "itar" / "bank.jsonl").exists()

    assert main(["topicbank", *common, "--iterations", "2"]) == 0
    assert "banked" in capsys.readouterr().out
    assert (out_dir / "topicbank" / "topicbank" / "summary.json").exists()

    assert main(["report", "--out", str(out_dir)]) == 0
    report_dir = out_dir / "report"
    for name in ("summary.txt", "summary.csv", "series.json", "densities.csv"):
        assert (report_dir / name).exists(), name


def test_evaluate_scores_saved_phi(work, tmp_path):
    corpus_path, out_dir = work
    result_path = tmp_path / "eval.json"
    code = main(
        [
            "evaluate",
            "--corpus", str(corpus_path),
            "--phi", str(out_dir / "plsa_best_phi.tsv"),
            "--out", str(result_path),
        ]
    )
    assert code == 0
    payload = json.loads(result_path.read_text())
    assert payload["perplexity"] > 0
    assert len(payload["topics"]) == 4
    assert all("top_words" in t for t in payload["topics"])


def test_ingest_round_trip(tmp_path, capsys):
    bow = tmp_path / "docs.bow"
    bow.write_text("d1\ta:2 b:1\nd2\tb:3 c:1\n", encoding="utf-8")
    out = tmp_path / "docs.tbc"
    assert main(["ingest", "--bow", str(bow), "--out", str(out)]) == 0
    assert "2 documents" in capsys.readouterr().out
    corpus = Corpus.load(out)
    assert corpus.vocab_size == 3
    assert not corpus.has_sequences


def test_ingest_requires_exactly_one_input(tmp_path, capsys):
    out = str(tmp_path / "x.tbc")
    assert main(["ingest", "--out", out]) == 2
    assert "error:" in capsys.readouterr().err
    bow = tmp_path / "a.bow"
    seq = tmp_path / "a.seq"
    bow.write_text("d\ta:1\n", encoding="utf-8")
    seq.write_text("d\ta\n", encoding="utf-8")
    assert main(["ingest", "--bow", str(bow), "--seq", str(seq), "--out", out]) == 2


def test_config_file_supplies_defaults_and_flags_win(work, tmp_path, capsys):
    corpus_path, _ = work
    out_dir = tmp_path / "cfg-results"
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps(
            {
                "corpus": str(corpus_path),
                "output_dir": str(out_dir),
                "num_topics": 4,
                "runs": 1,
                "em_iterations": 3,
                "models": ["plsa"],
            }
        ),
        encoding="utf-8",
    )
    assert main(["train", "--config", str(config)]) == 0
    assert "plsa" in capsys.readouterr().out
    assert (out_dir / "series" / "plsa.json").exists()
    # the flag beats the config value
    assert main(["train", "--config", str(config), "--model", "lda"]) == 0
    assert (out_dir / "series" / "lda.json").exists()


def test_exit_codes_map_error_kinds(work, tmp_path, capsys):
    corpus_path, out_dir = work
    # configuration errors -> 2
    assert main(["train", "--out", str(tmp_path / "o"), "--t", "4", "--model", "plsa"]) == 2
    assert main(
        ["train", "--corpus", str(corpus_path), "--out", str(out_dir), "--t", "4", "--model", "svd"]
    ) == 2
    assert main(
        ["itar", "--corpus", str(corpus_path), "--out", str(tmp_path / "empty"), "--t", "4"]
    ) == 2  # no thresholds anywhere
    # data errors -> 3
    assert main(
        ["evaluate", "--corpus", str(corpus_path), "--phi", str(tmp_path / "missing.tsv")]
    ) == 3
    # degenerate model abort -> 4
    corpus = Corpus.load(corpus_path)
    zero = tmp_path / "zero.tsv"
    header = "token\tt000"
    rows = [f"{s}\t0" for s in corpus.vocabulary.surfaces]
    zero.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    assert main(["evaluate", "--corpus", str(corpus_path), "--phi", str(zero)]) == 4
    capsys.readouterr()
