"""Kernel backend selection and the chunked sweep driver.

The compiled extension is preferred when it imported cleanly; otherwise the
NumPy fallback is used.  ``TOPICBENCH_KERNEL=numpy`` or ``=compiled`` forces
a backend (the latter fails loudly if the extension is missing, instead of
silently benchmarking the wrong thing).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import em_numpy

LOG_FLOOR = em_numpy.LOG_FLOOR

try:
    from . import _em as _compiled
except ImportError:
    _compiled = None


def available_backends() -> tuple[str, ...]:
    return ("compiled", "numpy") if _compiled is not None else ("numpy",)


def get_backend(name: str):
    if name == "numpy":
        return em_numpy
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("TOPICBENCH_KERNEL", "auto").strip().lower()
if _requested in ("", "auto"):
    BACKEND = "compiled" if _compiled is not None else "numpy"
elif _requested in ("compiled", "cython", "numpy"):
    BACKEND = "numpy" if _requested == "numpy" else "compiled"
else:
    raise RuntimeError(f"unrecognized TOPICBENCH_KERNEL value {_requested!r}")

_impl = get_backend(BACKEND)


def _chunk_bounds(num_documents: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, num_documents)) if num_documents else 1
    edges = np.linspace(0, num_documents, workers + 1).astype(np.int64)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(workers)]


def em_sweep(corpus, phi, theta_dt, update_phi=True, workers=1, backend=None):
    """Run one E-step over the whole corpus.

    Returns ``(n_wt, n_dt, loglik, floor_hits)``.  With several workers the
    document range is split into contiguous chunks accumulated into private
    topic-token buffers and merged in chunk order, so the result is
    reproducible for a fixed worker count.
    """
    impl = _impl if backend is None else get_backend(backend)
    token_ids, counts, doc_ptr = corpus.token_ids, corpus.counts_f64(), corpus.doc_ptr
    n_docs = corpus.num_documents
    w, t = phi.shape
    n_dt = np.zeros((n_docs, t), dtype=np.float64)
    bounds = _chunk_bounds(n_docs, workers)

    if len(bounds) == 1:
        n_wt = np.zeros((w, t), dtype=np.float64)
        ll, floor_hits = impl.em_sweep(
            token_ids, counts, doc_ptr, phi, theta_dt, n_wt, n_dt, 0, n_docs, update_phi
        )
        return n_wt, n_dt, ll, floor_hits

    buffers = [np.zeros((w, t), dtype=np.float64) for _ in bounds]

    def run(i):
        lo, hi = bounds[i]
        return impl.em_sweep(token_ids, counts, doc_ptr, phi, theta_dt, buffers[i], n_dt, lo, hi, update_phi)

    with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
        parts = list(pool.map(run, range(len(bounds))))

    n_wt = buffers[0]
    for buf in buffers[1:]:
        n_wt += buf
    ll = 0.0
    floor_hits = 0
    for part_ll, part_hits in parts:
        ll += part_ll
        floor_hits += int(part_hits)
    return n_wt, n_dt, ll, floor_hits


def log_likelihood(corpus, phi, theta_dt, workers=1, backend=None):
    """Evaluate ``sum_dw n_dw ln p(w|d)``; returns ``(loglik, floor_hits)``."""
    impl = _impl if backend is None else get_backend(backend)
    token_ids, counts, doc_ptr = corpus.token_ids, corpus.counts_f64(), corpus.doc_ptr
    bounds = _chunk_bounds(corpus.num_documents, workers)
    if len(bounds) == 1:
        ll, hits = impl.log_likelihood_sweep(
            token_ids, counts, doc_ptr, phi, theta_dt, 0, corpus.num_documents
        )
        return ll, int(hits)

    def run(i):
        lo, hi = bounds[i]
        return impl.log_likelihood_sweep(token_ids, counts, doc_ptr, phi, theta_dt, lo, hi)

    with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
        parts = list(pool.map(run, range(len(bounds))))
    ll = 0.0
    floor_hits = 0
    for part_ll, part_hits in parts:
        ll += part_ll
        floor_hits += int(part_hits)
    return ll, floor_hits
