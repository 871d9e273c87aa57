"""Closed-form g-prior marginal likelihoods, Beta-binomial model priors and
incremental Cholesky scoring of neighboring models.

All arithmetic is in log space. A model that cannot be scored (``|gamma| >= n``
or a numerically singular Gram matrix) gets log posterior ``-inf`` from every
batch routine and from :meth:`Scorer.score`.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import betaln, gammaln

from . import core
from .errors import ConstantColumn, ModelTooLarge, NonFinite, SingularGram
from .modelspace import InclusionVector

# Relative squared pivot L_kk^2 / ||X_k||^2 below which a Gram is singular.
PIVOT_TOL = 1e-10
# Candidate batch size; fixed so results do not depend on the worker count.
CHUNK = 256


@dataclass
class Dataset:
    """Response and design matrix plus the moments used to standardize them."""

    X: np.ndarray
    y: np.ndarray
    standardized: bool = False
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_center: float = 0.0
    y_scale: float = 1.0
    col_sq: np.ndarray = field(init=False, repr=False)
    xty: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError(f"X {self.X.shape} and y ({self.y.size},) do not conform")
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise NonFinite("data contain NaN or Inf")
        if self.x_center is None:
            self.x_center = np.zeros(self.p)
            self.x_scale = np.ones(self.p)
        self.col_sq = np.einsum("ij,ij->j", self.X, self.X)
        self.xty = self.X.T @ self.y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def y_sq_norm(self) -> float:
        return float(self.y @ self.y)


def standardize(X, y=None) -> Dataset:
    """Center every column and ``y`` and scale them to unit sample sd (ddof=1).

    Accepts a :class:`Dataset` or raw ``(X, y)`` arrays. The original moments
    are kept on the result for back-transforming coefficients.
    """
    if isinstance(X, Dataset):
        X, y = X.X, X.y
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFinite("data contain NaN or Inf")
    xc = X.mean(axis=0)
    xs = X.std(axis=0, ddof=1)
    for j in range(X.shape[1]):
        if not xs[j] > 0 or np.ptp(X[:, j]) == 0:
            raise ConstantColumn(j)
    yc = y.mean()
    ys = y.std(ddof=1)
    if not ys > 0:
        raise ConstantColumn("y")
    return Dataset((X - xc) / xs, (y - yc) / ys, standardized=True,
                   x_center=xc, x_scale=xs, y_center=float(yc), y_scale=float(ys))


@dataclass(frozen=True)
class Hyperparams:
    """g-prior scale ``g`` and Beta(u, v) hyperparameters of the model prior."""

    g: float
    u: float
    v: float

    def __post_init__(self):
        if not (self.g > 0 and self.u > 0 and self.v > 0):
            raise ValueError(f"hyperparameters must be positive, got {self}")

    @classmethod
    def from_expected_size(cls, n: int, p: int, d_star: float, g: float | None = None):
        """``u = d_star``, ``v = p - d_star``; ``g`` defaults to ``n`` (unit information)."""
        if not 1 <= d_star < p:
            raise ValueError("need 1 <= d_star < p")
        return cls(g=float(n if g is None else g), u=float(d_star), v=float(p - d_star))


@dataclass(frozen=True)
class ScoreCard:
    log_marginal: float
    log_prior: float
    log_posterior: float
    r_squared: float
    model_size: int

    @property
    def admissible(self) -> bool:
        return self.log_posterior > -math.inf


def log_model_prior(gamma, hp: Hyperparams, p: int | None = None) -> float:
    """Beta-binomial log prior, ``ln B(k+u, p-k+v) - ln B(u, v)``; ``gamma`` may be a size."""
    k = gamma if isinstance(gamma, (int, np.integer)) else gamma.size
    p = gamma.p if p is None else p
    if not 0 <= k <= p:
        raise ValueError(f"model size {k} outside [0, {p}]")
    return float(betaln(k + hp.u, p - k + hp.v) - betaln(hp.u, hp.v))


def _log_marginal_constant(n: int, y_sq_norm: float, g: float) -> float:
    return (gammaln(n / 2) + n / 2 * math.log1p(g) - n / 2 * math.log(math.pi)
            - n / 2 * math.log(y_sq_norm))


def _log_marginal_from_r2(const, n, g, k, r2):
    return const - k / 2 * math.log1p(g) - n / 2 * np.log1p(g * (1.0 - r2))


def _checked_cholesky(G: np.ndarray) -> np.ndarray:
    try:
        L = linalg.cholesky(G, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularGram("Gram matrix is not positive definite") from exc
    if np.any(np.diag(L) ** 2 < PIVOT_TOL * np.diag(G)):
        raise SingularGram("relative pivot below tolerance")
    return L


def r_squared(data: Dataset, indices) -> float:
    """Coefficient of determination of y on the given columns, from scratch."""
    idx = list(indices)
    if not idx:
        return 0.0
    Xg = data.X[:, idx]
    L = _checked_cholesky(Xg.T @ Xg)
    z = linalg.solve_triangular(L, Xg.T @ data.y, lower=True, check_finite=False)
    return float(z @ z / data.y_sq_norm)


def log_marginal_likelihood(data: Dataset, gamma: InclusionVector, hp: Hyperparams) -> ScoreCard:
    """Exact log marginal likelihood under the g-prior and pi(phi) = 1/phi.

    Raises :class:`ModelTooLarge` when ``|gamma| >= n`` and
    :class:`SingularGram` when the active columns are numerically dependent.
    """
    n, k = data.n, gamma.size
    if k >= n:
        raise ModelTooLarge(f"|gamma| = {k} >= n = {n}")
    r2 = r_squared(data, gamma.active)
    const = _log_marginal_constant(n, data.y_sq_norm, hp.g)
    lm = float(_log_marginal_from_r2(const, n, hp.g, k, r2))
    lp = log_model_prior(k, hp, data.p)
    return ScoreCard(lm, lp, lm + lp, r2, k)


# --------------------------------------------------------------------------
# Cholesky state of X_gamma^T X_gamma

@dataclass(frozen=True)
class CholState:
    """Lower Cholesky factor of the active Gram matrix.

    Columns are held in insertion order (``order``), not sorted order;
    ``active`` gives the sorted view. ``z = L^{-1} X_gamma^T y`` so that
    ``R^2 = z.z / ||y||^2``.
    """

    order: tuple[int, ...]
    L: np.ndarray
    xty: np.ndarray
    z: np.ndarray

    @classmethod
    def empty(cls) -> "CholState":
        return cls((), np.zeros((0, 0)), np.zeros(0), np.zeros(0))

    @classmethod
    def from_indices(cls, data: Dataset, indices) -> "CholState":
        order = tuple(int(i) for i in indices)
        if not order:
            return cls.empty()
        Xg = data.X[:, list(order)]
        L = _checked_cholesky(Xg.T @ Xg)
        xty = data.xty[list(order)]
        z = linalg.solve_triangular(L, xty, lower=True, check_finite=False)
        return cls(order, L, xty, z)

    @property
    def size(self) -> int:
        return len(self.order)

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(sorted(self.order))

    def r_squared(self, data: Dataset) -> float:
        return float(self.z @ self.z / data.y_sq_norm)


def update_chol_add(state: CholState, data: Dataset, j: int) -> CholState:
    """Append column ``j`` to the factor (O(n k + k^2))."""
    j = int(j)
    if j in state.order:
        raise ValueError(f"predictor {j} already active")
    k = state.size
    xj = data.X[:, j]
    if k:
        c = data.X[:, list(state.order)].T @ xj
        w = linalg.solve_triangular(state.L, c, lower=True, check_finite=False)
    else:
        w = np.zeros(0)
    d2 = data.col_sq[j] - w @ w
    if not d2 > PIVOT_TOL * data.col_sq[j]:
        raise SingularGram(f"adding predictor {j} makes the Gram singular")
    d = math.sqrt(d2)
    L = np.zeros((k + 1, k + 1))
    L[:k, :k] = state.L
    L[k, :k] = w
    L[k, k] = d
    xty = np.append(state.xty, data.xty[j])
    zj = (data.xty[j] - w @ state.z) / d
    return CholState(state.order + (j,), L, xty, np.append(state.z, zj))


def update_chol_remove(state: CholState, j: int) -> CholState:
    """Delete column ``j``: drop its row/column and repair the trailing block
    with a rank-one update (O(k^2))."""
    j = int(j)
    try:
        q = state.order.index(j)
    except ValueError:
        raise ValueError(f"predictor {j} is not active") from None
    k = state.size
    keep = [i for i in range(k) if i != q]
    L = np.ascontiguousarray(state.L[np.ix_(keep, keep)])
    if q < k - 1:
        x = state.L[q + 1:, q].copy()
        tail = L[q:, q:].copy()
        core.chol_update(tail, x)
        L[q:, q:] = tail
    xty = state.xty[keep]
    order = tuple(state.order[i] for i in keep)
    if q == k - 1:
        z = state.z[:-1].copy()
    else:
        z = linalg.solve_triangular(L, xty, lower=True, check_finite=False)
    return CholState(order, L, xty, z)


def _add_r2(data: Dataset, chol: CholState, adds: np.ndarray) -> np.ndarray:
    """R^2 of gamma + {a} for each a in ``adds``; NaN where the Gram turns singular."""
    Xa = data.X[:, adds]
    csq = data.col_sq[adds]
    if chol.size:
        C = data.X[:, list(chol.order)].T @ Xa
        W = linalg.solve_triangular(chol.L, C, lower=True, check_finite=False)
        d2 = csq - np.einsum("ij,ij->j", W, W)
        num = data.xty[adds] - W.T @ chol.z
    else:
        d2 = csq.copy()
        num = data.xty[adds].copy()
    ok = d2 > PIVOT_TOL * csq
    zj = np.where(ok, num / np.sqrt(np.where(ok, d2, 1.0)), np.nan)
    return (chol.z @ chol.z + zj * zj) / data.y_sq_norm


def _remove_r2(data: Dataset, chol: CholState, removes) -> np.ndarray:
    """R^2 of gamma - {r} for each r, from the OLS coefficients and diag of the inverse Gram."""
    k = chol.size
    pos = [chol.order.index(int(r)) for r in removes]
    if k == 1:
        return np.zeros(len(pos))
    Linv = linalg.solve_triangular(chol.L, np.eye(k), lower=True, check_finite=False)
    b = Linv.T @ chol.z
    ginv = np.einsum("ij,ij->j", Linv, Linv)
    zz = chol.z @ chol.z
    return (zz - b[pos] ** 2 / ginv[pos]) / data.y_sq_norm


class EvalCounter:
    """Thread-safe count of model evaluations."""

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def add(self, k: int = 1):
        with self._lock:
            self._value += k

    @property
    def value(self) -> int:
        return self._value

    def reset(self):
        with self._lock:
            self._value = 0


class ModelContext:
    """An inclusion vector with its Cholesky state built only when needed.

    A context made by :meth:`toggled` or :meth:`swapped` from a parent whose
    factor already exists derives its own factor by a cheap update.
    """

    __slots__ = ("gamma", "_chol", "_parent", "_op")

    def __init__(self, gamma: InclusionVector, chol: CholState | None = None,
                 parent: "ModelContext | None" = None, op: tuple = ()):
        self.gamma = gamma
        self._chol = chol
        self._parent = parent if parent is not None and parent._chol is not None else None
        self._op = op

    def chol(self, data: Dataset) -> CholState:
        if self._chol is None:
            parent = self._parent
            if parent is not None:
                ch = parent._chol
                for kind, i in self._op:
                    ch = update_chol_remove(ch, i) if kind == "r" else update_chol_add(ch, data, i)
                self._chol = ch
            else:
                self._chol = CholState.from_indices(data, self.gamma.active)
            self._parent = None
        return self._chol

    @property
    def has_chol(self) -> bool:
        return self._chol is not None

    def toggled(self, i: int) -> "ModelContext":
        op = (("r", i),) if i in self.gamma else (("a", i),)
        return ModelContext(self.gamma.toggle(i), parent=self, op=op)

    def swapped(self, remove: int, add: int) -> "ModelContext":
        return ModelContext(self.gamma.swap(remove, add), parent=self,
                            op=(("r", remove), ("a", add)))


class Scorer:
    """Unnormalized log posterior ``log L(y | gamma) + log pi(gamma)`` with
    evaluation accounting, an LRU cache and batched neighbor scoring.

    Every requested model increments ``counter`` by one whether or not it is
    served from the cache. ``benchmark=True`` disables the cache.
    """

    def __init__(self, data: Dataset, hp: Hyperparams, *, benchmark: bool = False,
                 cache_size: int = 2 ** 20, workers: int = 1):
        if not data.standardized:
            raise ValueError("Scorer needs a standardized Dataset")
        self.data = data
        self.hp = hp
        self.counter = EvalCounter()
        self.benchmark = benchmark
        self.cache_size = 0 if benchmark else int(cache_size)
        self._cache: OrderedDict[int, tuple[float, float]] = OrderedDict()
        self.workers = max(1, int(workers))
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.const = _log_marginal_constant(data.n, data.y_sq_norm, hp.g)
        sizes = np.arange(data.p + 1)
        self._log_prior = betaln(sizes + hp.u, data.p - sizes + hp.v) - betaln(hp.u, hp.v)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def log_prior(self, size: int) -> float:
        return float(self._log_prior[size])

    def log_posterior_from_r2(self, r2, size):
        """Vectorized log posterior; NaN R^2 (singular) maps to -inf."""
        n, g = self.data.n, self.hp.g
        size = np.asarray(size)
        lp = _log_marginal_from_r2(self.const, n, g, size, r2) + self._log_prior[size]
        lp = np.where(np.isnan(lp) | (size >= n), -np.inf, lp)
        return lp

    # single model -------------------------------------------------------

    def score(self, gamma: InclusionVector) -> ScoreCard:
        """Score one model from scratch (or cache)."""
        self.counter.add(1)
        hit = self._cache_get(gamma.bits)
        k = gamma.size
        if hit is not None:
            lpost, r2 = hit
        else:
            try:
                card = log_marginal_likelihood(self.data, gamma, self.hp)
                lpost, r2 = card.log_posterior, card.r_squared
            except (SingularGram, ModelTooLarge):
                lpost, r2 = -math.inf, math.nan
            self._cache_put(gamma.bits, lpost, r2)
        if lpost == -math.inf:
            return ScoreCard(-math.inf, self.log_prior(k), -math.inf, math.nan, k)
        lprior = self.log_prior(k)
        return ScoreCard(lpost - lprior, lprior, lpost, r2, k)

    # batches -------------------------------------------------------------

    def toggle_scores(self, ctx: ModelContext, idx, skip: int | None = None) -> np.ndarray:
        """Log posteriors of ``toggle(gamma, i)`` for each ``i`` in ``idx``.

        Position ``skip`` (if given) is not evaluated or counted and is NaN in
        the result; the caller already knows that score.
        """
        idx = np.asarray(idx, dtype=np.intp)
        out = np.full(idx.size, np.nan)
        self.counter.add(idx.size - (skip is not None))
        bits = ctx.gamma.bits
        missing = []
        for pos in range(idx.size):
            if pos == skip:
                continue
            hit = self._cache_get(bits ^ (1 << int(idx[pos])))
            if hit is None:
                missing.append(pos)
            else:
                out[pos] = hit[0]
        if not missing:
            return out
        gamma = ctx.gamma
        k = gamma.size
        miss = np.asarray(missing, dtype=np.intp)
        is_add = np.array([int(idx[m]) not in gamma for m in missing], dtype=bool)
        chol = ctx.chol(self.data)
        r2 = np.empty(miss.size)
        sizes = np.where(is_add, k + 1, k - 1)
        if is_add.any():
            r2[is_add] = self._chunked_add(chol, idx[miss[is_add]])
        if (~is_add).any():
            r2[~is_add] = _remove_r2(self.data, chol, idx[miss[~is_add]])
        lp = self.log_posterior_from_r2(r2, sizes)
        out[miss] = lp
        for m, val, rr in zip(missing, lp, r2):
            self._cache_put(bits ^ (1 << int(idx[m])), float(val), float(rr))
        return out

    def swap_scores(self, ctx: ModelContext, adds, removes,
                    skip: tuple[int, int] | None = None) -> np.ndarray:
        """Log posteriors of ``gamma - r + a``; rows follow ``removes``, columns ``adds``.

        ``skip = (row, col)`` excludes one known entry (left NaN, not counted).
        """
        adds = np.asarray(adds, dtype=np.intp)
        removes = np.asarray(removes, dtype=np.intp)
        out = np.full((removes.size, adds.size), np.nan)
        self.counter.add(out.size - (skip is not None))
        bits = ctx.gamma.bits
        todo = []
        for ri, r in enumerate(removes):
            row_missing = False
            rb = bits ^ (1 << int(r))
            for ci, a in enumerate(adds):
                if skip is not None and (ri, ci) == tuple(skip):
                    continue
                hit = self._cache_get(rb ^ (1 << int(a)))
                if hit is None:
                    row_missing = True
                else:
                    out[ri, ci] = hit[0]
            if row_missing:
                todo.append(ri)
        if not todo:
            return out
        chol = ctx.chol(self.data)
        k = ctx.gamma.size

        def row(ri):
            reduced = update_chol_remove(chol, int(removes[ri]))
            return _add_r2(self.data, reduced, adds)

        rows = self._map(row, todo)
        for ri, r2 in zip(todo, rows):
            lp = self.log_posterior_from_r2(r2, np.full(adds.size, k))
            rb = bits ^ (1 << int(removes[ri]))
            for ci in range(adds.size):
                if skip is not None and (ri, ci) == tuple(skip):
                    continue
                if np.isnan(out[ri, ci]):
                    out[ri, ci] = lp[ci]
                    self._cache_put(rb ^ (1 << int(adds[ci])), float(lp[ci]), float(r2[ci]))
        return out

    # internals -----------------------------------------------------------

    def _chunked_add(self, chol: CholState, adds: np.ndarray) -> np.ndarray:
        if adds.size <= CHUNK:
            return _add_r2(self.data, chol, adds)
        chunks = [adds[i:i + CHUNK] for i in range(0, adds.size, CHUNK)]
        return np.concatenate(self._map(lambda c: _add_r2(self.data, chol, c), chunks))

    def _map(self, fn, items):
        if self._pool is None or len(items) < 2:
            return [fn(it) for it in items]
        return list(self._pool.map(fn, items))

    def _cache_get(self, key: int):
        if not self.cache_size:
            return None
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
        return hit

    def _cache_put(self, key: int, lpost: float, r2: float):
        if not self.cache_size:
            return
        self._cache[key] = (lpost, r2)
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
