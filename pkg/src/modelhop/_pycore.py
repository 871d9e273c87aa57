"""Pure-Python reference versions of the compiled kernels in ``_core.pyx``.

Signatures and semantics match the compiled module exactly; results agree
to floating-point roundoff.
"""

import numpy as np


def chol_update(L, x):
    """Rank-one update in place: ``L @ L.T`` becomes ``L @ L.T + outer(x, x)``."""
    n = L.shape[0]
    for k in range(n):
        lkk = L[k, k]
        r = np.sqrt(lkk * lkk + x[k] * x[k])
        c = r / lkk
        s = x[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]


def select_index(scores, u):
    """Softmax draw with a single uniform; returns ``(k, logsumexp)``."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return -1, -np.inf
    m = scores.max()
    if m == -np.inf:
        return -1, -np.inf
    w = np.exp(scores - m)
    c = np.cumsum(w)
    total = c[-1]
    k = int(np.searchsorted(c, u * total, side="right"))
    if k >= scores.size:
        k = int(np.flatnonzero(w > 0)[-1])
    return k, float(m + np.log(total))


def subset_grid_lse(S, row_base, col_base, free_axis, free_idx, free_prob):
    """Log-probabilities and log-sum-exps for every free on/off pattern.

    See ``_core.subset_grid_lse``.
    """
    S = np.asarray(S, dtype=float)
    f = len(free_idx)
    bits = ((np.arange(1 << f)[:, None] >> np.arange(f)) & 1).astype(bool)
    p = np.asarray(free_prob, dtype=float)
    logp = bits @ np.log(p) + (~bits) @ np.log1p(-p) if f else np.zeros(1)
    rows = np.repeat(np.asarray(row_base, dtype=bool)[None, :], 1 << f, axis=0)
    cols = np.repeat(np.asarray(col_base, dtype=bool)[None, :], 1 << f, axis=0)
    for j in range(f):
        target = rows if free_axis[j] == 0 else cols
        target[:, free_idx[j]] |= bits[:, j]
    on = rows[:, :, None] & cols[:, None, :]
    vals = np.where(on, S[None, :, :], -np.inf).reshape(1 << f, -1)
    m = vals.max(axis=1) if vals.shape[1] else np.full(1 << f, -np.inf)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore"):
        total = np.exp(vals - safe[:, None]).sum(axis=1)
    lse = np.where(np.isfinite(m), safe + np.log(np.where(total > 0, total, 1.0)), -np.inf)
    return np.asarray(logp, dtype=float), lse
