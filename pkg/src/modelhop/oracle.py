"""Exact ground truth for small problems.

:func:`enumerate_posterior` scores all ``2^p`` models. :func:`exact_kernel`
builds the full one-step transition matrix of a sampler by summing over move
types, candidate selections and every Bernoulli candidate mask (forward and
backward), so reversibility and stationarity can be checked to roundoff.

Models are indexed by their bitset (bit ``i`` set iff predictor ``i`` active).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import core
from .errors import SingularGram, TooManyPredictors
from .modelspace import MOVES, InclusionVector, MoveType, move_weights
from .samplers import PmtmConfig, gibbs_prob_one, log_accept
from .scorer import Dataset, Hyperparams, ModelContext, Scorer

ENUM_LIMIT = 20
FULL_NEIGHBORHOOD_LIMIT = 10
MASK_LIMIT = 6


@dataclass
class ExactPosterior:
    p: int
    log_weights: np.ndarray
    log_z: float

    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_z)

    def inclusion_probs(self) -> np.ndarray:
        bits = (np.arange(1 << self.p)[:, None] >> np.arange(self.p)) & 1
        return self.probs() @ bits

    def map_model(self) -> InclusionVector:
        return InclusionVector(self.p, int(np.argmax(self.log_weights)))

    def prob_of(self, gamma: InclusionVector) -> float:
        return float(np.exp(self.log_weights[gamma.bits] - self.log_z))


def enumerate_posterior(data: Dataset, hp: Hyperparams, p_max: int = ENUM_LIMIT) -> ExactPosterior:
    """Unnormalized log posterior of every model, visited in Gray-code order so
    each model is one incremental Cholesky update away from the previous one."""
    p, n = data.p, data.n
    if p > p_max:
        raise TooManyPredictors(f"p = {p} exceeds the enumeration limit {p_max}")
    scorer = Scorer(data, hp, benchmark=True)
    N = 1 << p
    r2 = np.full(N, np.nan)
    sizes = np.zeros(N, dtype=np.intp)
    r2[0] = 0.0
    ctx = ModelContext(InclusionVector.empty(p))
    ctx.chol(data)
    for step in range(1, N):
        i = (step & -step).bit_length() - 1
        child = ctx.toggled(i)
        g = child.gamma
        sizes[g.bits] = g.size
        if g.size < n:
            try:
                r2[g.bits] = child.chol(data).r_squared(data)
            except SingularGram:
                child = ModelContext(g)
        ctx = child
    lw = scorer.log_posterior_from_r2(r2, sizes)
    return ExactPosterior(p, lw, float(logsumexp(lw)))


# -------------------------------------------------------------------------
# exact kernels

def _bits_of(s: int, p: int):
    act = [i for i in range(p) if s >> i & 1]
    ina = [i for i in range(p) if not s >> i & 1]
    return act, ina


def _neighbors(s: int, p: int, move: MoveType) -> np.ndarray:
    act, ina = _bits_of(s, p)
    if move is MoveType.ADD:
        return np.array([s ^ (1 << i) for i in ina], dtype=np.intp)
    if move is MoveType.REMOVE:
        return np.array([s ^ (1 << i) for i in act], dtype=np.intp)
    return np.array([s ^ (1 << r) ^ (1 << a) for r in act for a in ina], dtype=np.intp)


def _size(s: int) -> int:
    return bin(s).count("1")


def _prns_kernel(lp, p, schedule, accept):
    N = 1 << p
    A = np.zeros((N, N))
    for s in range(N):
        w = move_weights(_size(s), p, schedule)
        for m, wm in zip(MOVES, w):
            if wm == 0:
                continue
            targets = _neighbors(s, p, m)
            sc = lp[targets]
            lse_f = logsumexp(sc)
            if lse_f == -np.inf:
                A[s, s] += wm
                continue
            for t, st in zip(targets, sc):
                if st == -np.inf:
                    continue
                T = math.exp(st - lse_f)
                lse_b = logsumexp(lp[_neighbors(int(t), p, m.backward)])
                wb = move_weights(_size(int(t)), p, schedule)[m.backward]
                a = math.exp(accept(lse_f, lse_b, math.log(wm), math.log(wb)))
                A[s, t] += wm * T * a
                A[s, s] += wm * T * (1 - a)
    return A


def _grid(S, row_force, col_force, row_prob, col_prob):
    """Enumerate masks over every row/column of ``S`` except the forced ones.

    ``row_force``/``col_force`` are positions (or None); probabilities give
    each free row/column's chance of being switched on.
    """
    R, C = S.shape
    row_base = np.zeros(R, dtype=np.uint8)
    col_base = np.zeros(C, dtype=np.uint8)
    axis, idx, prob = [], [], []
    for r in range(R):
        if r == row_force:
            row_base[r] = 1
        else:
            axis.append(0), idx.append(r), prob.append(row_prob[r])
    for c in range(C):
        if c == col_force:
            col_base[c] = 1
        else:
            axis.append(1), idx.append(c), prob.append(col_prob[c])
    return core.subset_grid_lse(np.ascontiguousarray(S, dtype=float), row_base, col_base,
                                np.array(axis, dtype=np.int8), np.array(idx, dtype=np.intp),
                                np.array(prob, dtype=float))


def _mask_term(logp_f, lse_f, s_target, logp_b, lse_b, q_f, q_b, accept):
    """Sum over forward/backward masks of P(F) T(F) P(B) and of P(F) T(F) P(B) alpha(F, B)."""
    with np.errstate(invalid="ignore"):
        fw = np.where(np.isfinite(lse_f), np.exp(logp_f + s_target - lse_f), 0.0)
    pb = np.exp(logp_b)
    alpha = np.exp(accept(lse_f[:, None], lse_b[None, :], q_f, q_b))
    alpha = np.where(np.isnan(alpha), 0.0, alpha)
    return fw.sum(), float(fw @ (alpha @ pb))


def _no_proposal_mass(S, row_prob, col_prob, rows_free: bool):
    """P(the candidate set contains no finite score), masks fully random."""
    if rows_free:
        logp, lse = _grid(S, None, None, row_prob, col_prob)
    else:
        logp, lse = _grid(S, 0, None, [1.0], col_prob)
    return float(np.exp(logp[lse == -np.inf]).sum())


def _mix_kernel(lp, p, add_p, rem_p, accept):
    N = 1 << p
    A = np.zeros((N, N))
    for s in range(N):
        mask = np.array([s >> i & 1 for i in range(p)], dtype=bool)
        om = np.where(mask, rem_p, add_p)
        S = lp[[s ^ (1 << i) for i in range(p)]][None, :]
        A[s, s] += _no_proposal_mass(S, [1.0], om, rows_free=False)
        for i in range(p):
            if S[0, i] == -np.inf or om[i] == 0:
                continue
            logp_f, lse_f = _grid(S, 0, i, [1.0], om)
            t = s ^ (1 << i)
            om_b = np.where(mask ^ (np.arange(p) == i), rem_p, add_p)
            Sb = lp[[t ^ (1 << j) for j in range(p)]][None, :]
            logp_b, lse_b = _grid(Sb, 0, i, [1.0], om_b)
            q_f, q_b = math.log(om[i]), (math.log(om_b[i]) if om_b[i] > 0 else -math.inf)
            tot, acc = _mask_term(logp_f, lse_f, S[0, i], logp_b, lse_b, q_f, q_b, accept)
            A[s, t] += om[i] * acc
            A[s, s] += om[i] * (tot - acc)
    return A


def _paired_kernel(lp, p, add_p, rem_p, schedule, accept):
    N = 1 << p
    A = np.zeros((N, N))
    for s in range(N):
        act, ina = _bits_of(s, p)
        w = move_weights(len(act), p, schedule)
        for m, wm in zip(MOVES, w):
            if wm == 0:
                continue
            if m is MoveType.SWAP:
                _paired_swap(A, lp, p, s, act, ina, wm, add_p, rem_p, accept)
                continue
            add = m is MoveType.ADD
            cand = ina if add else act
            prob = add_p[cand] if add else rem_p[cand]
            S = lp[[s ^ (1 << i) for i in cand]][None, :]
            A[s, s] += wm * _no_proposal_mass(S, [1.0], prob, rows_free=False)
            for k, i in enumerate(cand):
                if S[0, k] == -np.inf or prob[k] == 0:
                    continue
                logp_f, lse_f = _grid(S, 0, k, [1.0], prob)
                t = s ^ (1 << i)
                act_t, ina_t = _bits_of(t, p)
                cand_b = act_t if add else ina_t
                prob_b = rem_p[cand_b] if add else add_p[cand_b]
                Sb = lp[[t ^ (1 << j) for j in cand_b]][None, :]
                kb = cand_b.index(i)
                logp_b, lse_b = _grid(Sb, 0, kb, [1.0], prob_b)
                wb = move_weights(len(act_t), p, schedule)[m.backward]
                q_f = math.log(wm) + math.log(prob[k])
                qb = wb * prob_b[kb]
                q_b = math.log(qb) if qb > 0 else -math.inf
                tot, acc = _mask_term(logp_f, lse_f, S[0, k], logp_b, lse_b, q_f, q_b, accept)
                A[s, t] += wm * prob[k] * acc
                A[s, s] += wm * prob[k] * (tot - acc)
    return A


def _paired_swap(A, lp, p, s, act, ina, ws, add_p, rem_p, accept):
    S = np.array([[lp[s ^ (1 << r) ^ (1 << a)] for a in ina] for r in act])
    rp, cp = rem_p[act], add_p[ina]
    A[s, s] += ws * _no_proposal_mass(S, rp, cp, rows_free=True)
    for ri, r in enumerate(act):
        for ci, a in enumerate(ina):
            if S[ri, ci] == -np.inf or rp[ri] == 0 or cp[ci] == 0:
                continue
            logp_f, lse_f = _grid(S, ri, ci, rp, cp)
            t = s ^ (1 << r) ^ (1 << a)
            act_t, ina_t = _bits_of(t, p)
            Sb = np.array([[lp[t ^ (1 << r2) ^ (1 << a2)] for a2 in ina_t] for r2 in act_t])
            logp_b, lse_b = _grid(Sb, act_t.index(a), ina_t.index(r), rem_p[act_t], add_p[ina_t])
            q_f = math.log(add_p[a]) + math.log(rem_p[r])
            qb = add_p[r] * rem_p[a]
            q_b = math.log(qb) if qb > 0 else -math.inf
            tot, acc = _mask_term(logp_f, lse_f, S[ri, ci], logp_b, lse_b, q_f, q_b, accept)
            pick = ws * cp[ci] * rp[ri]
            A[s, t] += pick * acc
            A[s, s] += pick * (tot - acc)


def _gibbs_site_kernel(lp, p, i):
    N = 1 << p
    K = np.zeros((N, N))
    for s in range(N):
        t = s ^ (1 << i)
        s0, s1 = (lp[t], lp[s]) if s >> i & 1 else (lp[s], lp[t])
        p1 = gibbs_prob_one(s0, s1)
        stay = p1 if s >> i & 1 else 1 - p1
        K[s, s] += stay
        K[s, t] += 1 - stay
    return K


def exact_kernel(kind: str, post: ExactPosterior, cfg: PmtmConfig | None = None, v=None,
                 accept=log_accept) -> np.ndarray:
    """One-step transition matrix of sampler ``kind`` (importance scores frozen at ``v``).

    ``accept`` replaces the shared log-acceptance function (used for negative
    controls). Guards: ``p <= 10`` for pRNS and Gibbs, ``p <= 6`` for the
    multiple-try kernels.
    """
    p, lp = post.p, post.log_weights
    cfg = cfg or PmtmConfig()
    kind = kind.lower()
    limit = FULL_NEIGHBORHOOD_LIMIT if kind in ("prns", "gibbs-rs", "gibbs-ss") else MASK_LIMIT
    if p > limit:
        raise TooManyPredictors(f"exact {kind} kernel limited to p <= {limit}")
    v = np.ones(p) if v is None else np.asarray(v, dtype=float)
    M = cfg.budget(p)
    add_p = M * v / (M * v + p)
    rem_p = np.asarray(cfg.remove_fn()(v), dtype=float)
    if kind == "prns":
        return _prns_kernel(lp, p, cfg.schedule(), accept)
    if kind == "dmtm":
        return _mix_kernel(lp, p, add_p, rem_p, accept)
    if kind in ("pmtm", "ada-pmtm"):
        return _paired_kernel(lp, p, add_p, rem_p, cfg.schedule(), accept)
    if kind == "gibbs-rs":
        return sum(_gibbs_site_kernel(lp, p, i) for i in range(p)) / p
    if kind == "gibbs-ss":
        A = np.eye(1 << p)
        for i in range(p):
            A = A @ _gibbs_site_kernel(lp, p, i)
        return A
    raise ValueError(f"unknown sampler {kind!r}")


def corrupted_log_accept(lse_fwd, lse_bwd, log_q_fwd, log_q_bwd):
    """Negative control: drops the move/inclusion probability correction."""
    return log_accept(lse_fwd, lse_bwd, 0.0, 0.0)


# -------------------------------------------------------------------------
# checks

def reversibility_violation(A: np.ndarray, pi: np.ndarray) -> float:
    F = pi[:, None] * A
    return float(np.max(np.abs(F - F.T)))


def row_sum_violation(A: np.ndarray) -> float:
    return float(np.max(np.abs(A.sum(axis=1) - 1.0)))


def stationary_distribution(A: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``A`` for eigenvalue 1, normalized to sum 1."""
    N = A.shape[0]
    lhs = np.vstack([A.T - np.eye(N), np.ones((1, N))])
    rhs = np.zeros(N + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return pi


def total_variation(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


@dataclass
class PropertyResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: max violation {self.value:.3e} (tol {self.tol:g})"


def check_kernel(kind: str, post: ExactPosterior, cfg: PmtmConfig | None = None, v=None,
                 accept=log_accept, reversible: bool | None = None) -> list[PropertyResult]:
    """Row sums, reversibility (skipped for the systematic scan, which is only
    stationary) and stationarity of one exact kernel."""
    A = exact_kernel(kind, post, cfg, v, accept)
    pi = post.probs()
    out = [PropertyResult(f"{kind} row sums", row_sum_violation(A), 1e-12)]
    if reversible is None:
        reversible = kind != "gibbs-ss"
    if reversible:
        out.append(PropertyResult(f"{kind} reversibility", reversibility_violation(A, pi), 1e-12))
    out.append(PropertyResult(f"{kind} stationarity (TV)",
                              total_variation(stationary_distribution(A), pi), 1e-10))
    return out


def incremental_scoring_violation(data: Dataset, hp: Hyperparams, n_models: int = 100,
                                  seed: int = 0) -> float:
    """Max |incremental - fresh| log posterior over the add, remove and swap
    neighbors of ``n_models`` random models."""
    rng = np.random.default_rng(seed)
    p = data.p
    fresh = Scorer(data, hp, benchmark=True)
    inc = Scorer(data, hp, benchmark=True)
    worst = 0.0
    max_size = max(1, min(p - 1, data.n - 2))
    for _ in range(n_models):
        k = int(rng.integers(1, max_size + 1))
        g = InclusionVector.from_indices(p, rng.choice(p, size=k, replace=False))
        ctx = ModelContext(g)
        tog = inc.toggle_scores(ctx, np.arange(p))
        ref = np.array([fresh.score(g.toggle(i)).log_posterior for i in range(p)])
        ina = np.array([i for i in range(p) if i not in g])
        act = np.array(g.active)
        sw = inc.swap_scores(ctx, ina, act) if ina.size else np.zeros((0, 0))
        ref_sw = np.array([[fresh.score(g.swap(r, a)).log_posterior for a in ina] for r in act])
        for got, want in ((tog, ref), (sw.ravel(), ref_sw.ravel())):
            finite = np.isfinite(want)
            if np.any(np.isfinite(got) != finite):
                return math.inf
            if finite.any():
                worst = max(worst, float(np.max(np.abs(got[finite] - want[finite]))))
    return worst
