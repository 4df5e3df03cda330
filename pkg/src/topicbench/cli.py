"""Command line entry points.

Subcommands cover the full workflow: ``ingest`` and ``synth`` produce binary
corpora, ``thresholds`` pools baseline series into coherence cutoffs,
``train`` / ``itar`` / ``topicbank`` run the models, ``evaluate`` scores a
saved phi, ``report`` renders everything collected under an output
directory, and ``serve`` exposes an interactive labeling session over HTTP.

Every flag has a config-file equivalent (JSON, ``--config``); explicit flags
win over the config.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 degenerate-model abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .corpus import Corpus, build_cooccurrence, filter_vocabulary, parse_bow, parse_sequences
from .errors import ConfigError, DataError, TopicbenchError
from .harness import (
    ITERATIVE_MODELS,
    SERIES_MODELS,
    THRESHOLDS_FILE,
    THRESHOLDS_INTRATEXT_FILE,
    ModelSpec,
    TopicBankConfig,
    ablation_configs,
    collect_results,
    generate_report,
    make_model_spec,
    pool_thresholds,
    retrain_best,
    run_ablation,
    run_series,
    run_topicbank,
    save_itar_outputs,
    save_series_result,
    save_topicbank_outputs,
)
from .itar import ItarConfig, run_itar
from .metrics import Thresholds, evaluate_topics, summarize_model
from .model import (
    TopicModel,
    default_roles,
    infer_theta_fixed_phi,
    load_phi_jsonl,
    load_phi_tsv,
    save_phi_tsv,
)
from .synth import synth_corpus

logger = logging.getLogger(__name__)


# -- config plumbing ----------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(config, dict):
        raise ConfigError(f"{p}: config root must be an object")
    return config


def _cfg(config: dict, dotted: str, default=None):
    node = config
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _pick(cli_value, config_value, default):
    if cli_value is not None:
        return cli_value
    if config_value is not None:
        return config_value
    return default


def _corpus_path(args, config: dict) -> str:
    path = _pick(getattr(args, "corpus", None), _cfg(config, "corpus"), None)
    if path is None:
        raise ConfigError("no corpus given (flag --corpus or config key 'corpus')")
    return path


def _out_dir(args, config: dict) -> Path:
    out = _pick(getattr(args, "out", None), _cfg(config, "output_dir"), None)
    if out is None:
        raise ConfigError("no output directory given (flag --out or config key 'output_dir')")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_thresholds(args, config: dict, out_dir: Path | None) -> Thresholds:
    path = _pick(getattr(args, "thresholds", None), _cfg(config, "itar.thresholds"), None)
    if path is None and out_dir is not None and (out_dir / THRESHOLDS_FILE).exists():
        path = out_dir / THRESHOLDS_FILE
    if path is None:
        raise ConfigError(
            "no thresholds found: pass --thresholds, set itar.thresholds in the config, "
            "or run the thresholds subcommand into the same output directory first"
        )
    return Thresholds.load(path)


# -- subcommands --------------------------------------------------------------


def cmd_ingest(args) -> int:
    if (args.bow is None) == (args.seq is None):
        raise ConfigError("ingest needs exactly one of --bow or --seq")
    if args.bow is not None:
        corpus = parse_bow(args.bow)
    else:
        corpus = parse_sequences(args.seq)
    corpus = filter_vocabulary(corpus, df_min=args.df_min, df_max=args.df_max)
    corpus.validate()
    corpus.save(args.out)
    print(
        f"{args.out}: {corpus.num_documents} documents, {corpus.vocab_size} tokens in vocabulary, "
        f"{corpus.total_tokens} token occurrences"
        + (", word order kept" if corpus.has_sequences else "")
    )
    return 0


def cmd_synth(args) -> int:
    corpus, truth = synth_corpus(
        seed=args.seed,
        vocab_size=args.vocab,
        n_topics=args.topics,
        n_docs=args.docs,
        mean_len=args.mean_len,
        concentration=args.concentration,
    )
    corpus.save(args.out)
    if args.truth is not None:
        truth.save(args.truth)
    print(
        f"{args.out}: synthetic corpus, {corpus.num_documents} documents, "
        f"{corpus.vocab_size} tokens in vocabulary, {corpus.total_tokens} token occurrences"
    )
    return 0


def cmd_thresholds(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    corpus = Corpus.load(_corpus_path(args, config))
    pool = _pick(args.pool, _cfg(config, "thresholds.pool_models"), "lda,sparse,decorr")
    if isinstance(pool, str):
        pool = [name.strip() for name in pool.split(",") if name.strip()]
    num_topics = _pick(args.t, _cfg(config, "num_topics"), None)
    if num_topics is None:
        raise ConfigError("number of topics required (--t or config key 'num_topics')")
    runs = _pick(args.runs, _cfg(config, "runs"), 20)
    em_iterations = _pick(args.em_iters, _cfg(config, "em_iterations"), 30)
    workers = _pick(args.workers, _cfg(config, "workers"), 1)

    thresholds_tok, thresholds_intra, series_by_name = pool_thresholds(
        corpus,
        num_topics,
        pool_models=pool,
        runs=runs,
        em_iterations=em_iterations,
        workers=workers,
    )
    thresholds_tok.save(out_dir / THRESHOLDS_FILE)
    if thresholds_intra is not None:
        thresholds_intra.save(out_dir / THRESHOLDS_INTRATEXT_FILE)
    for series in series_by_name.values():
        series.apply_thresholds(thresholds_tok)
        save_series_result(out_dir, series)
    print(
        f"thresholds from {'+'.join(pool)} ({runs} runs each): "
        f"good >= {thresholds_tok.theta_good:.6f}, bad <= {thresholds_tok.theta_bad:.6f}"
    )
    if thresholds_intra is not None:
        print(
            f"intra-text thresholds: good >= {thresholds_intra.theta_good:.6f}, "
            f"bad <= {thresholds_intra.theta_bad:.6f}"
        )
    return 0


def _spec_from_config(name: str, config: dict, num_topics: int, runs: int, em_iterations: int, workers: int) -> ModelSpec:
    for entry in _cfg(config, "models", []) or []:
        if isinstance(entry, dict) and entry.get("name") == name:
            fields = dict(entry)
            fields.setdefault("num_topics", num_topics)
            fields.setdefault("runs", runs)
            fields.setdefault("em_iterations", em_iterations)
            fields.setdefault("workers", workers)
            try:
                return ModelSpec(**fields)
            except TypeError as exc:
                raise ConfigError(f"bad model entry for {name!r}: {exc}") from None
    return make_model_spec(name, num_topics, runs=runs, em_iterations=em_iterations, workers=workers)


def cmd_train(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    corpus = Corpus.load(_corpus_path(args, config))
    num_topics = _pick(args.t, _cfg(config, "num_topics"), None)
    if num_topics is None:
        raise ConfigError("number of topics required (--t or config key 'num_topics')")
    runs = _pick(args.runs, _cfg(config, "runs"), 20)
    em_iterations = _pick(args.em_iters, _cfg(config, "em_iterations"), 30)
    workers = _pick(args.workers, _cfg(config, "workers"), 1)

    names = args.model
    if not names:
        names = [m["name"] if isinstance(m, dict) else m for m in _cfg(config, "models", []) or []]
    if not names:
        raise ConfigError("no model named (--model or config key 'models')")

    thresholds = None
    thresholds_path = out_dir / THRESHOLDS_FILE
    if args.thresholds is not None:
        thresholds = Thresholds.load(args.thresholds)
    elif thresholds_path.exists():
        thresholds = Thresholds.load(thresholds_path)

    cooc = build_cooccurrence(corpus)
    for name in names:
        if name not in SERIES_MODELS:
            raise ConfigError(
                f"unknown series model {name!r}; expected one of {SERIES_MODELS} "
                f"(iterative models run via the itar and topicbank subcommands: {ITERATIVE_MODELS})"
            )
        spec = _spec_from_config(name, config, num_topics, runs, em_iterations, workers)
        series = run_series(spec, corpus, cooc, thresholds=thresholds)
        save_series_result(out_dir, series)
        if thresholds is not None:
            best = series.best()
            print(
                f"{name}: best run {series.best_run} "
                f"ppl={best.perplexity:.2f} coherence={best.coherence:.4f} good={best.good_count}/{num_topics}"
            )
            if args.save_phi:
                model = retrain_best(spec, corpus, series)
                save_phi_tsv(model.phi, corpus.vocabulary, out_dir / f"{name}_best_phi.tsv")
        else:
            mean_ppl = sum(r.perplexity for r in series.runs) / len(series.runs)
            print(f"{name}: {runs} runs, mean ppl={mean_ppl:.2f} (no thresholds applied)")
    return 0


def _parse_flags(value: str) -> tuple[bool, bool, bool]:
    parts = value.split("-")
    if len(parts) != 3 or any(p not in ("0", "1") for p in parts):
        raise ConfigError(f"ablation flags must look like 1-0-1, got {value!r}")
    return tuple(p == "1" for p in parts)  # type: ignore[return-value]


def _itar_config(args, config: dict, thresholds: Thresholds) -> ItarConfig:
    get = lambda key, default: _cfg(config, f"itar.{key}", default)
    fix_good, sift_bad, sift_good = _parse_flags(
        _pick(args.ablation if args.ablation != "all" else None, get("ablation", None), "1-1-1")
    )
    sift = _pick(args.sift, get("sift", None), "v1")
    if sift not in ("v1", "v2"):
        raise ConfigError(f"--sift must be v1 or v2, got {sift!r}")
    num_topics = _pick(args.t, _cfg(config, "num_topics", get("num_topics", None)), None)
    if num_topics is None:
        raise ConfigError("number of topics required (--t or config key 'num_topics')")
    return ItarConfig(
        num_topics=num_topics,
        thresholds=thresholds,
        background_topics=get("background_topics", 1),
        max_iterations=_pick(args.max_iters, get("max_iterations", None), 20),
        em_iterations=_pick(args.em_iters, _cfg(config, "em_iterations", get("em_iterations", None)), 30),
        criterion=_pick(args.criterion, get("criterion", None), "toptoken"),
        sift_version=int(sift[1]),
        fix_good=fix_good,
        sift_bad=sift_bad,
        sift_good=sift_good,
        tau_fix=get("tau_fix", 1e9),
        tau_sift_bad=get("tau_sift_bad", None),
        tau_sift_good=get("tau_sift_good", None),
        sparse_weight=get("sparse_weight", -0.05),
        smooth_weight=get("smooth_weight", 0.05),
        decorr_weight=get("decorr_weight", 0.01),
        stop_good_fraction=get("stop_good_fraction", 0.9),
        workers=_pick(args.workers, _cfg(config, "workers"), 1),
    )


def _itar_run_name(cfg: ItarConfig) -> str:
    if cfg.fix_good and cfg.sift_bad and cfg.sift_good:
        return "itar" if cfg.sift_version == 1 else "itar2"
    return cfg.name if cfg.sift_version == 1 else f"{cfg.name}-v2"


def cmd_itar(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    corpus = Corpus.load(_corpus_path(args, config))
    thresholds = _load_thresholds(args, config, out_dir)
    cfg = _itar_config(args, config, thresholds)

    if args.interactive:
        from .service import ReviewSession, create_app
        import uvicorn

        session_dir = out_dir / "itar" / _itar_run_name(cfg)
        if (session_dir / "config.json").exists():
            session = ReviewSession.resume(session_dir)
        else:
            session = ReviewSession(corpus, cfg, session_dir, corpus_path=str(_corpus_path(args, config)))
        app = create_app(session, static_dir=args.static)
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
        return 0

    cooc = build_cooccurrence(corpus)
    if args.ablation == "all":
        results = run_ablation(corpus, cfg, cooc)
        for flavor_cfg in ablation_configs(cfg):
            result = results[flavor_cfg.name]
            save_itar_outputs(out_dir, flavor_cfg, result)
            last = result.history[-1]
            print(
                f"{flavor_cfg.name}: {len(result.history)} iterations, stop={result.stop_reason}, "
                f"good={last.bank_good_total}/{cfg.num_topics}"
            )
        return 0

    result = run_itar(cfg, corpus, cooc)
    name = _itar_run_name(cfg)
    save_itar_outputs(out_dir, cfg, result, name=name)
    last = result.history[-1]
    print(
        f"{name}: {len(result.history)} iterations, stop={result.stop_reason}, "
        f"good={last.bank_good_total}/{cfg.num_topics}, ppl={last.metrics['perplexity']:.2f}"
    )
    return 0


def cmd_topicbank(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    corpus = Corpus.load(_corpus_path(args, config))
    num_topics = _pick(args.t, _cfg(config, "num_topics"), None)
    if num_topics is None:
        raise ConfigError("number of topics required (--t or config key 'num_topics')")
    base = _pick(args.base, _cfg(config, "topicbank.base"), "plsa")
    shared = args.shared_thresholds or bool(_cfg(config, "topicbank.shared_thresholds", False))
    cfg = TopicBankConfig(
        num_topics=num_topics,
        iterations=_pick(args.iterations, _cfg(config, "topicbank.iterations"), 20),
        base=base,
        shared_thresholds=shared,
        em_iterations=_pick(args.em_iters, _cfg(config, "em_iterations"), 30),
        workers=_pick(args.workers, _cfg(config, "workers"), 1),
    )
    thresholds = None
    if shared:
        thresholds = _load_thresholds(args, config, out_dir)
    result = run_topicbank(corpus, cfg, thresholds=thresholds)
    name = "topicbank2" if (base == "artm" and shared) else "topicbank"
    save_topicbank_outputs(out_dir, name, result)
    print(
        f"{name}: banked {result.final['banked']}/{num_topics} topics, "
        f"ppl={result.final['perplexity_with_background']:.2f}/{result.final['perplexity_bank_only']:.2f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    corpus = Corpus.load(args.corpus)
    path = Path(args.phi)
    if path.suffix == ".jsonl":
        phi, topic_names = load_phi_jsonl(path, corpus.vocabulary)
    else:
        phi, surfaces, topic_names = load_phi_tsv(path)
        if surfaces != list(corpus.vocabulary.surfaces):
            raise DataError(f"{path}: token rows do not match the corpus vocabulary")
    theta = infer_theta_fixed_phi(phi, corpus, iterations=args.infer_iters)
    model = TopicModel(phi, default_roles(phi.shape[1]), seed=0, theta_dt=np.ascontiguousarray(theta.T))
    cooc = build_cooccurrence(corpus)
    qualities = evaluate_topics(model, corpus, cooc, top_k=args.top_k, with_intratext=corpus.has_sequences)
    summary = summarize_model(model, corpus, qualities)
    report = {
        "perplexity": summary["perplexity"],
        "diversity": summary["diversity"],
        "coherence": summary["coherence"],
        "intratext": summary["intratext"],
        "topics": [
            {
                "name": topic_names[q.topic],
                "top_words": [corpus.vocabulary.surfaces[int(w)] for w in q.top_token_ids],
                "coh_toptoken": q.coherence,
                "coh_intra": q.intratext,
                "n_t": q.size,
                "degenerate": q.degenerate,
            }
            for q in qualities
        ],
    }
    payload = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out is None or args.out == "-":
        sys.stdout.write(payload)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    return 0


def cmd_report(args) -> int:
    config = _load_config(args.config)
    out_dir = _out_dir(args, config)
    data = collect_results(out_dir)
    if not data["records"]:
        raise DataError(f"nothing to report under {out_dir}")
    report_dir = generate_report(data, out_dir)
    print(f"report written to {report_dir}")
    return 0


def cmd_serve(args) -> int:
    from .service import ReviewSession, create_app
    import uvicorn

    session_dir = Path(args.session_dir)
    if (session_dir / "config.json").exists():
        session = ReviewSession.resume(session_dir)
    else:
        config = _load_config(args.config)
        corpus_path = _corpus_path(args, config)
        corpus = Corpus.load(corpus_path)
        thresholds = _load_thresholds(args, config, None)
        cfg = _itar_config(args, config, thresholds)
        session = ReviewSession(corpus, cfg, session_dir, corpus_path=str(corpus_path))
    app = create_app(session, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -- parser -------------------------------------------------------------------


def _add_common_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--corpus", help="binary corpus file")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--t", type=int, help="number of domain topics")
    sub.add_argument("--em-iters", type=int, dest="em_iters", help="EM iterations per training")
    sub.add_argument("--workers", type=int, help="threads for the EM sweep")


def _add_itar_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--max-iters", type=int, dest="max_iters", help="iteration budget of the loop")
    sub.add_argument("--sift", choices=("v1", "v2"), help="sifting variant")
    sub.add_argument("--criterion", choices=("toptoken", "intratext"), help="quality criterion")
    sub.add_argument("--thresholds", help="thresholds JSON (defaults to <out>/thresholds.json)")
    sub.add_argument(
        "--ablation",
        default=None,
        help="fix-siftbad-siftgood flags like 1-0-1, or 'all' for every combination",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicbench",
        description="Additively regularized topic models with iterative topic accumulation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a binary corpus from text input")
    p.add_argument("--bow", help="bag-of-words file: doc_id TAB token:count ...")
    p.add_argument("--seq", help="token sequence file: doc_id TAB token token ...")
    p.add_argument("--df-min", type=int, default=1, dest="df_min", help="minimum document frequency")
    p.add_argument("--df-max", type=float, default=1.0, dest="df_max", help="maximum document-frequency fraction")
    p.add_argument("--out", required=True, help="output corpus file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus with known topics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", type=int, default=50)
    p.add_argument("--topics", type=int, default=5)
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--mean-len", type=int, default=100, dest="mean_len")
    p.add_argument("--concentration", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="also save the generating distributions (npz)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("thresholds", help="pool baseline series into coherence thresholds")
    _add_common_run_flags(p)
    p.add_argument("--pool", help="comma list of pool models (default lda,sparse,decorr)")
    p.add_argument("--runs", type=int, help="trainings per pool model (default 20)")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("train", help="train a baseline model series")
    _add_common_run_flags(p)
    p.add_argument("--model", action="append", help="series model name (repeatable)")
    p.add_argument("--runs", type=int, help="independent trainings (default 20)")
    p.add_argument("--thresholds", help="thresholds JSON (defaults to <out>/thresholds.json)")
    p.add_argument("--save-phi", action="store_true", dest="save_phi", help="save the best run's phi as TSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("itar", help="run the iterative accumulate-and-sift loop")
    _add_common_run_flags(p)
    _add_itar_flags(p)
    p.add_argument("--interactive", action="store_true", help="serve a labeling session instead of running automatically")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="static UI bundle directory")
    p.set_defaults(func=cmd_itar)

    p = sub.add_parser("topicbank", help="accumulate good topics from independent trainings")
    _add_common_run_flags(p)
    p.add_argument("--base", choices=("plsa", "artm"), help="base model per iteration")
    p.add_argument("--iterations", type=int, help="number of independent trainings (default 20)")
    p.add_argument(
        "--shared-thresholds",
        action="store_true",
        dest="shared_thresholds",
        help="admit by the collection-level good threshold instead of each model's own 90th percentile",
    )
    p.add_argument("--thresholds", help="thresholds JSON (defaults to <out>/thresholds.json)")
    p.set_defaults(func=cmd_topicbank)

    p = sub.add_parser("evaluate", help="score a saved phi against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--phi", required=True, help="phi file (.tsv or .jsonl)")
    p.add_argument("--top-k", type=int, default=20, dest="top_k")
    p.add_argument("--infer-iters", type=int, default=50, dest="infer_iters")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render reports from collected results")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory holding the results")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve an interactive labeling session")
    p.add_argument("--session-dir", required=True, dest="session_dir")
    p.add_argument("--config", help="JSON config file (for a fresh session)")
    p.add_argument("--corpus", help="binary corpus file (for a fresh session)")
    p.add_argument("--t", type=int, help="number of domain topics (for a fresh session)")
    p.add_argument("--em-iters", type=int, dest="em_iters")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--sift", choices=("v1", "v2"))
    p.add_argument("--criterion", choices=("toptoken", "intratext"))
    p.add_argument("--thresholds", help="thresholds JSON")
    p.add_argument("--ablation", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="static UI bundle directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args) or 0
    except TopicbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
