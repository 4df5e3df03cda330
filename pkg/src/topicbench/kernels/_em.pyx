# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for regularized EM.

One sweep walks a contiguous range of documents, distributing each token's
count over topics proportionally to ``phi[w, t] * theta[d, t]`` and
accumulating the topic-token and document-topic totals in place.  The
log-likelihood of the parameters the sweep was entered with comes out for
free; mixtures that vanish are floored at 1e-37 and counted.
"""

from libc.math cimport log

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double LOG_FLOOR = 1e-37


def em_sweep(
    const int[::1] token_ids,
    const double[::1] counts,
    const long long[::1] doc_ptr,
    const double[:, ::1] phi,
    const double[:, ::1] theta_dt,
    double[:, ::1] n_wt,
    double[:, ::1] n_dt,
    Py_ssize_t d0,
    Py_ssize_t d1,
    bint update_phi,
):
    """E-step over documents ``[d0, d1)``; returns ``(loglik, floor_hits)``."""
    cdef Py_ssize_t n_topics = phi.shape[1]
    cdef Py_ssize_t d, i, t, w
    cdef long long lo, hi
    cdef double s, z, c, p
    cdef double ll = 0.0
    cdef double floor_log = log(LOG_FLOOR)
    cdef long long floor_hits = 0

    with nogil:
        for d in range(d0, d1):
            lo = doc_ptr[d]
            hi = doc_ptr[d + 1]
            for i in range(lo, hi):
                w = token_ids[i]
                c = counts[i]
                s = 0.0
                for t in range(n_topics):
                    s += phi[w, t] * theta_dt[d, t]
                if s <= 0.0:
                    ll += c * floor_log
                    floor_hits += 1
                    continue
                ll += c * log(s)
                z = c / s
                if update_phi:
                    for t in range(n_topics):
                        p = phi[w, t] * theta_dt[d, t] * z
                        n_wt[w, t] += p
                        n_dt[d, t] += p
                else:
                    for t in range(n_topics):
                        n_dt[d, t] += phi[w, t] * theta_dt[d, t] * z
    return ll, floor_hits


def log_likelihood_sweep(
    const int[::1] token_ids,
    const double[::1] counts,
    const long long[::1] doc_ptr,
    const double[:, ::1] phi,
    const double[:, ::1] theta_dt,
    Py_ssize_t d0,
    Py_ssize_t d1,
):
    """Evaluate ``sum n_dw * ln p(w|d)`` over documents ``[d0, d1)``."""
    cdef Py_ssize_t n_topics = phi.shape[1]
    cdef Py_ssize_t d, i, t, w
    cdef long long lo, hi
    cdef double s, c
    cdef double ll = 0.0
    cdef double floor_log = log(LOG_FLOOR)
    cdef long long floor_hits = 0

    with nogil:
        for d in range(d0, d1):
            lo = doc_ptr[d]
            hi = doc_ptr[d + 1]
            for i in range(lo, hi):
                w = token_ids[i]
                c = counts[i]
                s = 0.0
                for t in range(n_topics):
                    s += phi[w, t] * theta_dt[d, t]
                if s <= 0.0:
                    ll += c * floor_log
                    floor_hits += 1
                else:
                    ll += c * log(s)
    return ll, floor_hits
