"""NumPy fallback for the EM sweeps, used when the compiled kernel is absent.

Token ids are unique within a document's bag, so the per-document scatter
``n_wt[ids] += contrib`` needs no duplicate handling.
"""

from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-37


def em_sweep(token_ids, counts, doc_ptr, phi, theta_dt, n_wt, n_dt, d0, d1, update_phi):
    """E-step over documents ``[d0, d1)``; returns ``(loglik, floor_hits)``."""
    ll = 0.0
    floor_hits = 0
    floor_log = np.log(LOG_FLOOR)
    for d in range(d0, d1):
        lo, hi = doc_ptr[d], doc_ptr[d + 1]
        ids = token_ids[lo:hi]
        c = counts[lo:hi]
        mix = phi[ids] * theta_dt[d]
        s = mix.sum(axis=1)
        dead = s <= 0.0
        n_dead = int(dead.sum())
        if n_dead:
            floor_hits += n_dead
            ll += float(c[dead].sum()) * floor_log
            live = ~dead
            ll += float(c[live] @ np.log(s[live]))
            z = np.where(dead, 0.0, c / np.where(dead, 1.0, s))
        else:
            ll += float(c @ np.log(s))
            z = c / s
        contrib = mix * z[:, None]
        if update_phi:
            n_wt[ids] += contrib
        n_dt[d] += contrib.sum(axis=0)
    return ll, floor_hits


def log_likelihood_sweep(token_ids, counts, doc_ptr, phi, theta_dt, d0, d1):
    """Evaluate ``sum n_dw * ln p(w|d)`` over documents ``[d0, d1)``."""
    ll = 0.0
    floor_hits = 0
    floor_log = np.log(LOG_FLOOR)
    for d in range(d0, d1):
        lo, hi = doc_ptr[d], doc_ptr[d + 1]
        ids = token_ids[lo:hi]
        c = counts[lo:hi]
        s = (phi[ids] * theta_dt[d]).sum(axis=1)
        dead = s <= 0.0
        n_dead = int(dead.sum())
        if n_dead:
            floor_hits += n_dead
            ll += float(c[dead].sum()) * floor_log
            live = ~dead
            ll += float(c[live] @ np.log(s[live]))
        else:
            ll += float(c @ np.log(s))
    return ll, floor_hits
