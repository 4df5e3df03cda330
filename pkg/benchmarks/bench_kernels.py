"""Compare the compiled EM kernel against the NumPy fallback.

Generates a synthetic corpus, runs identical E-step sweeps through every
available backend (and a few worker counts), and reports tokens/second plus
the numerical agreement between backends.  Usage:

    python benchmarks/bench_kernels.py [--vocab 2000] [--topics 50]
        [--docs 2000] [--mean-len 300] [--sweeps 5] [--workers 1,4]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from topicbench import kernels
from topicbench.model import init_model
from topicbench.synth import synth_corpus


def run_backend(corpus, phi, theta_dt, backend: str, workers: int, sweeps: int):
    best = float("inf")
    result = None
    for _ in range(sweeps):
        start = time.perf_counter()
        result = kernels.em_sweep(
            corpus, phi, theta_dt, update_phi=True, workers=workers, backend=backend
        )
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vocab", type=int, default=2000)
    parser.add_argument("--topics", type=int, default=50)
    parser.add_argument("--docs", type=int, default=2000)
    parser.add_argument("--mean-len", type=int, default=300, dest="mean_len")
    parser.add_argument("--sweeps", type=int, default=5, help="timed repetitions; best is reported")
    parser.add_argument("--workers", default="1,4", help="comma list of worker counts")
    args = parser.parse_args()

    corpus, _ = synth_corpus(
        seed=0,
        vocab_size=args.vocab,
        n_topics=max(args.topics // 5, 2),
        n_docs=args.docs,
        mean_len=args.mean_len,
    )
    model = init_model(corpus.vocab_size, args.topics, seed=0, num_documents=corpus.num_documents)
    backends = kernels.available_backends()
    worker_counts = [int(w) for w in args.workers.split(",")]

    print(
        f"corpus: {corpus.num_documents} docs, {corpus.vocab_size} vocab, "
        f"{corpus.total_tokens} tokens; model: {args.topics} topics"
    )
    print(f"backends: {', '.join(backends)}\n")

    results = {}
    rows = []
    for backend in backends:
        for workers in worker_counts:
            seconds, out = run_backend(corpus, model.phi, model.theta_dt, backend, workers, args.sweeps)
            results[(backend, workers)] = out
            rows.append((backend, workers, seconds, corpus.total_tokens / seconds))

    print(f"{'backend':<10} {'workers':>7} {'seconds':>10} {'tokens/s':>14}")
    for backend, workers, seconds, rate in rows:
        print(f"{backend:<10} {workers:>7} {seconds:>10.4f} {rate:>14,.0f}")

    if len(backends) == 2:
        a_nwt, a_ndt, a_ll, _ = results[(backends[0], worker_counts[0])]
        b_nwt, b_ndt, b_ll, _ = results[(backends[1], worker_counts[0])]
        for name, a_arr, b_arr in (("n_wt", a_nwt, b_nwt), ("n_dt", a_ndt, b_ndt)):
            diff = np.max(np.abs(a_arr - b_arr))
            scale = max(np.max(np.abs(a_arr)), 1e-300)
            print(f"\nmax |d {name}| = {diff:.3e} (relative {diff / scale:.3e})")
        print(f"loglik: {a_ll:.10f} vs {b_ll:.10f}")
        base = min(r[2] for r in rows if r[0] == "numpy")
        fast = min(r[2] for r in rows if r[0] != "numpy")
        print(f"\nspeedup (best compiled over best numpy): {base / fast:.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
