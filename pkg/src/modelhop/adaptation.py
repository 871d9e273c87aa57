"""Thresholded correlation structure, adaptive predictor-importance scores and
the add/remove budget functions that turn scores into inclusion probabilities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

# Above this many predictors the correlation threshold is estimated from a
# random subsample of pairs and C is stored sparsely.
DENSE_LIMIT = 2000
SAMPLED_PAIRS = 1_000_000


@dataclass(frozen=True)
class CorrRule:
    """Threshold rule: ``kind="quantile"`` uses the ``q``-quantile of the
    off-diagonal |rho|; ``kind="fixed"`` uses ``epsilon`` directly."""

    kind: str = "quantile"
    q: float = 0.75
    epsilon: float = 0.3

    def __post_init__(self):
        if self.kind not in ("quantile", "fixed"):
            raise ValueError(f"unknown threshold rule {self.kind!r}")
        if not 0 < self.q < 1 or not 0 <= self.epsilon < 1:
            raise ValueError("need 0 < q < 1 and 0 <= epsilon < 1")


@dataclass
class ThresholdedCorr:
    """``C_ij = |rho_ij| * 1{|rho_ij| > epsilon}`` with a zero diagonal.

    ``matrix`` is a dense array for small ``p`` and a CSC matrix otherwise.
    """

    matrix: np.ndarray | sparse.csc_matrix
    epsilon: float
    rule: CorrRule

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def active_mean(self, active) -> np.ndarray:
        """Row means of ``C[:, active]`` (length p)."""
        active = list(active)
        if not active:
            return np.zeros(self.p)
        sub = self.matrix[:, active]
        total = np.asarray(sub.sum(axis=1)).ravel()
        return total / len(active)

    def nnz_upper(self) -> int:
        if self.is_sparse:
            return sparse.triu(self.matrix, k=1).nnz
        return int(np.count_nonzero(np.triu(self.matrix, k=1)))


def _quantile_threshold(values: np.ndarray, q: float) -> float:
    """Largest epsilon such that exactly ceil((1-q) N) of ``values`` exceed it (ties aside)."""
    vals = np.sort(values)
    n = vals.size
    keep = math.ceil((1 - q) * n)
    if keep >= n:
        return 0.0
    return float(vals[n - keep - 1])


def build_thresholded_corr(data, rule: CorrRule | None = None, seed: int = 0) -> ThresholdedCorr:
    """Pearson correlations of the columns of ``data.X`` thresholded by ``rule``."""
    rule = rule or CorrRule()
    X = data.X
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    Z = Xc / norms
    if p <= DENSE_LIMIT:
        R = np.abs(Z.T @ Z)
        np.clip(R, 0.0, 1.0, out=R)
        iu = np.triu_indices(p, k=1)
        eps = (_quantile_threshold(R[iu], rule.q) if rule.kind == "quantile"
               else rule.epsilon)
        C = np.where(R > eps, R, 0.0)
        np.fill_diagonal(C, 0.0)
        C = np.maximum(C, C.T)
        return ThresholdedCorr(C, eps, rule)
    if rule.kind == "quantile":
        rng = np.random.default_rng(seed)
        i = rng.integers(0, p, SAMPLED_PAIRS)
        j = rng.integers(0, p - 1, SAMPLED_PAIRS)
        j = np.where(j >= i, j + 1, j)
        vals = np.abs(np.einsum("ij,ij->j", Z[:, i], Z[:, j]))
        eps = _quantile_threshold(vals, rule.q)
    else:
        eps = rule.epsilon
    rows, cols, vals = [], [], []
    block = max(1, 2_000_000 // p)
    for start in range(0, p, block):
        stop = min(p, start + block)
        R = np.abs(Z[:, start:stop].T @ Z)
        R[np.arange(stop - start), np.arange(start, stop)] = 0.0
        r, c = np.nonzero(R > eps)
        rows.append(r + start)
        cols.append(c)
        vals.append(np.minimum(R[r, c], 1.0))
    C = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(p, p))
    C = C.maximum(C.T).tocsc()
    return ThresholdedCorr(C, eps, rule)


def z_score(i: int, gamma, corr: ThresholdedCorr) -> float:
    """1 for an active predictor, else its mean thresholded correlation with
    the active set; 0 when nothing is active."""
    if i in gamma:
        return 1.0
    if gamma.size == 0:
        return 0.0
    active = list(gamma.active)
    row = corr.matrix[i, active]
    return float(np.asarray(row.sum() if corr.is_sparse else np.sum(row))) / len(active)


def z_scores(gamma, corr: ThresholdedCorr) -> np.ndarray:
    """Vectorized :func:`z_score` over every predictor."""
    z = corr.active_mean(gamma.active)
    z[list(gamma.active)] = 1.0
    return z


def step_factor(t: int, b0: int, zeta: float) -> float:
    """``t / b0`` up to the end of burn-in, ``(t - b0)^(-zeta)`` afterwards."""
    if t < 1:
        raise ValueError("iteration counter starts at 1")
    if t <= b0:
        return t / b0
    return (t - b0) ** (-zeta)


@dataclass
class ImportanceScores:
    """Per-predictor importance ``v`` (kept >= 1) and its update schedule."""

    v: np.ndarray
    b0: int
    zeta: float = 2 / 3
    frozen: bool = False
    t: int = field(default=0)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if np.any(self.v < 1):
            raise ValueError("importance scores must be >= 1")
        if self.b0 < 1:
            raise ValueError("burn-in length must be >= 1")
        if not 0.5 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0.5, 1]")

    @classmethod
    def initial(cls, p: int, b0: int, zeta: float = 2 / 3, frozen: bool = False):
        return cls(np.ones(p), b0, zeta, frozen)


def update_scores(scores: ImportanceScores, gamma, corr: ThresholdedCorr,
                  t: int | None = None) -> ImportanceScores:
    """Add ``z(i, gamma) * step_factor(t)`` to every ``v_i`` (in place).

    ``t`` defaults to one past the last update. A frozen instance only
    advances its counter.
    """
    t = scores.t + 1 if t is None else int(t)
    scores.t = t
    if scores.frozen:
        return scores
    scores.v += z_scores(gamma, corr) * step_factor(t, scores.b0, scores.zeta)
    return scores


def f_budget(v, M: float, p: int):
    """Add probability ``M v / (M v + p)``; about M candidates when all v = 1 and M << p."""
    v = np.asarray(v, dtype=float)
    out = M * v / (M * v + p)
    return float(out) if out.ndim == 0 else out


def g_budget(v):
    """Remove probability ``1 / v``."""
    v = np.asarray(v, dtype=float)
    out = 1.0 / v
    return float(out) if out.ndim == 0 else out


def g_unit(v):
    """Remove probability fixed at 1 (every active predictor is a candidate)."""
    v = np.asarray(v, dtype=float)
    return 1.0 if v.ndim == 0 else np.ones_like(v)


def write_scores_csv(path, v) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "score"])
        for i, val in enumerate(np.asarray(v, dtype=float)):
            w.writerow([i, repr(float(val))])
