"""Chain kernels over the model space.

Six kinds share one stepping interface (``step(state) -> (state, record)``):

* ``prns``      paired add/remove/swap moves over full neighborhoods,
* ``dmtm``      mixed add/remove multiple-try moves over a random toggle set,
* ``pmtm``      paired multiple-try moves over random add/remove/swap sets,
* ``ada-pmtm``  ``pmtm`` plus adaptive importance scores,
* ``gibbs-rs``  random-scan single-site Gibbs,
* ``gibbs-ss``  systematic-scan Gibbs (one sweep per step).

The Metropolis-Hastings log acceptance for every multiple-try kernel is
:func:`log_accept`; the exact-kernel oracle calls the same function.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adaptation import (CorrRule, ImportanceScores, ThresholdedCorr, build_thresholded_corr,
                         f_budget, g_budget, g_unit, update_scores)
from .errors import AllInadmissible
from .modelspace import (MOVES, InclusionVector, LightTailSchedule, MoveType, default_schedule,
                         move_weights, select_proportional)
from .scorer import Dataset, Hyperparams, ModelContext, Scorer

KINDS = ("prns", "dmtm", "pmtm", "ada-pmtm", "gibbs-rs", "gibbs-ss")
SCHEMA_VERSION = 1
MIX = "mix"
FLIP = "flip"


def _lse(a) -> float:
    """log-sum-exp without scipy's dispatch overhead; -inf for an empty or all -inf input."""
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        return -math.inf
    m = a.max()
    if not math.isfinite(m):
        return float(m)
    return float(m + math.log(np.exp(a - m).sum()))


def log_accept(lse_fwd, lse_bwd, log_q_fwd, log_q_bwd):
    """``min(0, log_q_bwd + lse_fwd - log_q_fwd - lse_bwd)``.

    ``lse_*`` are log-sum-exps of the forward and backward candidate scores and
    ``log_q_*`` the log probabilities of choosing the move and of the selected
    candidate entering its set. Works elementwise on arrays.
    """
    if all(isinstance(x, float) for x in (lse_fwd, lse_bwd, log_q_fwd, log_q_bwd)):
        r = (log_q_bwd - log_q_fwd) + (lse_fwd - lse_bwd)
        return r if math.isnan(r) else min(0.0, r)
    with np.errstate(invalid="ignore"):
        r = np.minimum(0.0, np.add(np.subtract(log_q_bwd, log_q_fwd), np.subtract(lse_fwd, lse_bwd)))
    return float(r) if np.ndim(r) == 0 else r


def gibbs_prob_one(s0: float, s1: float) -> float:
    """P(gamma_i = 1 | rest) from the two unnormalized log posteriors."""
    if s0 == -math.inf and s1 == -math.inf:
        return 0.5
    d = s0 - s1
    if d > 0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


@dataclass
class PmtmConfig:
    """Settings of the multiple-try kernels.

    ``M`` is the expected add-candidate budget (``None`` means ``max(1, p/10)``),
    ``remove_weight`` picks the remove probability: ``"unit"`` (always 1) or
    ``"inverse"`` (1/v). ``freeze`` keeps the importance scores fixed.
    """

    M: float | None = None
    burnin_frac: float = 0.2
    zeta: float = 2 / 3
    corr_rule: CorrRule = field(default_factory=CorrRule)
    adaptive: bool = False
    remove_weight: str = "unit"
    freeze: bool = False
    light_tail_dstar: int | None = None
    light_tail_delta: float = 0.1

    def __post_init__(self):
        if isinstance(self.corr_rule, dict):
            self.corr_rule = CorrRule(**self.corr_rule)
        if self.M is not None and self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0 < self.burnin_frac < 1:
            raise ValueError("burnin_frac must lie in (0, 1)")
        if not 0.5 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0.5, 1]")
        if self.remove_weight not in ("unit", "inverse"):
            raise ValueError("remove_weight must be 'unit' or 'inverse'")

    def budget(self, p: int) -> float:
        return float(self.M) if self.M is not None else max(1.0, p / 10)

    def schedule(self):
        if self.light_tail_dstar is None:
            return default_schedule
        return LightTailSchedule(self.light_tail_dstar, self.light_tail_delta)

    def remove_fn(self):
        return g_unit if self.remove_weight == "unit" else g_budget

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PmtmConfig":
        return cls(**d)


@dataclass
class SamplerState:
    ctx: ModelContext
    log_post: float
    rng: np.random.Generator
    scores: ImportanceScores
    t: int = 0

    @property
    def gamma(self) -> InclusionVector:
        return self.ctx.gamma

    @property
    def v(self) -> np.ndarray:
        return self.scores.v


@dataclass(frozen=True)
class ChainRecord:
    iter: int
    model: tuple
    log_posterior: float
    move_type: str
    accepted: bool
    n_evals: int
    forward_set_size: int
    backward_set_size: int

    def to_dict(self) -> dict:
        return {"iter": self.iter, "model": list(self.model), "logPosterior": self.log_posterior,
                "moveType": self.move_type, "accepted": self.accepted, "nEvals": self.n_evals,
                "forwardSetSize": self.forward_set_size, "backwardSetSize": self.backward_set_size}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ChainRecord":
        return cls(int(d["iter"]), tuple(d["model"]), float(d["logPosterior"]), d["moveType"],
                   bool(d["accepted"]), int(d["nEvals"]), int(d["forwardSetSize"]),
                   int(d["backwardSetSize"]))


def _pick_move(w, u: float) -> MoveType:
    acc = 0.0
    for m, wm in zip(MOVES, w):
        acc += wm
        if u < acc and wm > 0:
            return m
    return [m for m, wm in zip(MOVES, w) if wm > 0][-1]


def _inactive(gamma: InclusionVector) -> np.ndarray:
    mask = np.ones(gamma.p, dtype=bool)
    mask[list(gamma.active)] = False
    return np.flatnonzero(mask)


def _active(gamma: InclusionVector) -> np.ndarray:
    return np.asarray(gamma.active, dtype=np.intp)


class Sampler:
    """Shared plumbing: initial state, accept/reject and record building."""

    kind = ""

    def __init__(self, scorer: Scorer, cfg: PmtmConfig | None = None, iters: int = 1000,
                 corr: ThresholdedCorr | None = None):
        self.scorer = scorer
        self.p = scorer.data.p
        self.cfg = cfg or PmtmConfig()
        self.iters = int(iters)
        self.M = self.cfg.budget(self.p)
        self.schedule = self.cfg.schedule()
        self.remove_fn = self.cfg.remove_fn()
        self.corr = corr

    def init_state(self, rng: np.random.Generator, gamma: InclusionVector | None = None,
                   v=None) -> SamplerState:
        """Start at ``gamma`` (default empty) with ``v`` (default all ones); scores it once."""
        gamma = gamma if gamma is not None else InclusionVector.empty(self.p)
        card = self.scorer.score(gamma)
        if not card.admissible:
            raise AllInadmissible("initial model has zero posterior mass")
        b0 = max(1, math.ceil(self.cfg.burnin_frac * self.iters))
        scores = ImportanceScores(np.ones(self.p) if v is None else np.array(v, dtype=float),
                                  b0, self.cfg.zeta, frozen=self.cfg.freeze)
        return SamplerState(ModelContext(gamma), card.log_posterior, rng, scores)

    def step(self, state: SamplerState):
        raise NotImplementedError

    # helpers -----------------------------------------------------------

    def _add_prob(self, v):
        return f_budget(v, self.M, self.p)

    def _remove_prob(self, v):
        return self.remove_fn(v)

    def _finish(self, state, c0, move, accepted, fwd, bwd, new_ctx=None, new_lp=None):
        state.t += 1
        if accepted and new_ctx is not None:
            state.ctx, state.log_post = new_ctx, float(new_lp)
        label = move.value if isinstance(move, MoveType) else move
        rec = ChainRecord(state.t, state.gamma.active, state.log_post, label, bool(accepted),
                          self.scorer.counter.value - c0, int(fwd), int(bwd))
        return state, rec

    def _metropolis(self, state, log_alpha: float) -> bool:
        return state.rng.random() < math.exp(log_alpha)


class PRNS(Sampler):
    """Paired random neighborhood search over full add/remove/swap sets."""

    kind = "prns"

    def _scores(self, ctx, move, skip=None):
        g = ctx.gamma
        if move is MoveType.ADD:
            idx = _inactive(g)
            return self.scorer.toggle_scores(ctx, idx, skip), idx
        if move is MoveType.REMOVE:
            idx = _active(g)
            return self.scorer.toggle_scores(ctx, idx, skip), idx
        ina, act = _inactive(g), _active(g)
        S = self.scorer.swap_scores(ctx, ina, act, skip)
        return S, (act, ina)

    def step(self, state):
        c0 = self.scorer.counter.value
        g, p = state.gamma, self.p
        w = move_weights(g.size, p, self.schedule)
        move = _pick_move(w, state.rng.random())
        scores, idx = self._scores(state.ctx, move)
        flat = scores.ravel()
        try:
            j, lse_f = select_proportional(flat, state.rng)
        except AllInadmissible:
            return self._finish(state, c0, move, False, flat.size, 0)
        back = move.backward
        if move is MoveType.SWAP:
            act, ina = idx
            r, a = int(act[j // ina.size]), int(ina[j % ina.size])
            new_ctx = state.ctx.swapped(r, a)
            ng = new_ctx.gamma
            skip = (int(np.searchsorted(_active(ng), a)), int(np.searchsorted(_inactive(ng), r)))
            bscores, _ = self._scores(new_ctx, back, skip)
            bscores[skip] = state.log_post
        else:
            i = int(idx[j])
            new_ctx = state.ctx.toggled(i)
            ng = new_ctx.gamma
            cand = _active(ng) if back is MoveType.REMOVE else _inactive(ng)
            skip = int(np.searchsorted(cand, i))
            bscores, _ = self._scores(new_ctx, back, skip)
            bscores[skip] = state.log_post
        lse_b = _lse(bscores)
        wb = move_weights(ng.size, p, self.schedule)
        la = log_accept(lse_f, lse_b, math.log(w[move]), math.log(wb[back]) if wb[back] > 0 else -math.inf)
        ok = self._metropolis(state, la)
        return self._finish(state, c0, move, ok, flat.size, bscores.size, new_ctx, flat[j])


class DMTM(Sampler):
    """Mixed add/remove multiple-try kernel: every predictor joins the candidate
    toggle set independently with probability omega(gamma_i, v_i)."""

    kind = "dmtm"

    def omega(self, mask: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.where(mask, self._remove_prob(v), self._add_prob(v))

    def step(self, state):
        c0 = self.scorer.counter.value
        rng, v = state.rng, state.v
        mask = state.gamma.to_array()
        probs = self.omega(mask, v)
        idx = np.flatnonzero(rng.random(self.p) < probs)
        if idx.size == 0:
            return self._finish(state, c0, MIX, False, 0, 0)
        scores = self.scorer.toggle_scores(state.ctx, idx)
        try:
            j, lse_f = select_proportional(scores, rng)
        except AllInadmissible:
            return self._finish(state, c0, MIX, False, idx.size, 0)
        i = int(idx[j])
        new_ctx = state.ctx.toggled(i)
        mask[i] = not mask[i]
        probs_b = self.omega(mask, v)
        eta = rng.random(self.p) < probs_b
        eta[i] = True
        idx_b = np.flatnonzero(eta)
        pos = int(np.searchsorted(idx_b, i))
        bscores = self.scorer.toggle_scores(new_ctx, idx_b, skip=pos)
        bscores[pos] = state.log_post
        lse_b = _lse(bscores)
        la = log_accept(lse_f, lse_b, math.log(probs[i]), math.log(probs_b[i]) if probs_b[i] > 0 else -math.inf)
        ok = self._metropolis(state, la)
        return self._finish(state, c0, MIX, ok, idx.size, idx_b.size, new_ctx, scores[j])


class PMTM(Sampler):
    """Paired multiple-try kernel with random add, remove and swap candidate sets."""

    kind = "pmtm"

    def _toggle_move(self, state, move, w, c0):
        rng, v, g = state.rng, state.v, state.gamma
        add = move is MoveType.ADD
        cand = _inactive(g) if add else _active(g)
        probs = self._add_prob(v[cand]) if add else self._remove_prob(v[cand])
        idx = cand[rng.random(cand.size) < probs]
        if idx.size == 0:
            return self._finish(state, c0, move, False, 0, 0)
        scores = self.scorer.toggle_scores(state.ctx, idx)
        try:
            j, lse_f = select_proportional(scores, rng)
        except AllInadmissible:
            return self._finish(state, c0, move, False, idx.size, 0)
        i = int(idx[j])
        new_ctx = state.ctx.toggled(i)
        ng = new_ctx.gamma
        cand_b = _active(ng) if add else _inactive(ng)
        probs_b = self._remove_prob(v[cand_b]) if add else self._add_prob(v[cand_b])
        eta = rng.random(cand_b.size) < probs_b
        eta[np.searchsorted(cand_b, i)] = True
        idx_b = cand_b[eta]
        pos = int(np.searchsorted(idx_b, i))
        bscores = self.scorer.toggle_scores(new_ctx, idx_b, skip=pos)
        bscores[pos] = state.log_post
        lse_b = _lse(bscores)
        wb = move_weights(ng.size, self.p, self.schedule)
        q_f = math.log(w[move]) + math.log(self._add_prob(v[i]) if add else self._remove_prob(v[i]))
        q_b_prob = wb[move.backward] * (self._remove_prob(v[i]) if add else self._add_prob(v[i]))
        q_b = math.log(q_b_prob) if q_b_prob > 0 else -math.inf
        ok = self._metropolis(state, log_accept(lse_f, lse_b, q_f, q_b))
        return self._finish(state, c0, move, ok, idx.size, idx_b.size, new_ctx, scores[j])

    def _swap_move(self, state, c0):
        rng, v, g = state.rng, state.v, state.gamma
        move = MoveType.SWAP
        ina, act = _inactive(g), _active(g)
        adds = ina[rng.random(ina.size) < self._add_prob(v[ina])]
        rems = act[rng.random(act.size) < self._remove_prob(v[act])]
        if adds.size == 0 or rems.size == 0:
            return self._finish(state, c0, move, False, 0, 0)
        S = self.scorer.swap_scores(state.ctx, adds, rems)
        flat = S.ravel()
        try:
            j, lse_f = select_proportional(flat, rng)
        except AllInadmissible:
            return self._finish(state, c0, move, False, flat.size, 0)
        r, a = int(rems[j // adds.size]), int(adds[j % adds.size])
        new_ctx = state.ctx.swapped(r, a)
        ng = new_ctx.gamma
        ina_b, act_b = _inactive(ng), _active(ng)
        ea = rng.random(ina_b.size) < self._add_prob(v[ina_b])
        ea[np.searchsorted(ina_b, r)] = True
        er = rng.random(act_b.size) < self._remove_prob(v[act_b])
        er[np.searchsorted(act_b, a)] = True
        adds_b, rems_b = ina_b[ea], act_b[er]
        skip = (int(np.searchsorted(rems_b, a)), int(np.searchsorted(adds_b, r)))
        B = self.scorer.swap_scores(new_ctx, adds_b, rems_b, skip=skip)
        B[skip] = state.log_post
        lse_b = _lse(B)
        q_f = math.log(self._add_prob(v[a])) + math.log(self._remove_prob(v[r]))
        q_b = math.log(self._add_prob(v[r])) + math.log(self._remove_prob(v[a]))
        ok = self._metropolis(state, log_accept(lse_f, lse_b, q_f, q_b))
        return self._finish(state, c0, move, ok, flat.size, B.size, new_ctx, flat[j])

    def step(self, state):
        c0 = self.scorer.counter.value
        w = move_weights(state.gamma.size, self.p, self.schedule)
        move = _pick_move(w, state.rng.random())
        if move is MoveType.SWAP:
            return self._swap_move(state, c0)
        return self._toggle_move(state, move, w, c0)


class AdaPMTM(PMTM):
    """:class:`PMTM` followed by an importance-score update at the new model."""

    kind = "ada-pmtm"

    def __init__(self, scorer, cfg=None, iters=1000, corr=None):
        super().__init__(scorer, cfg, iters, corr)
        if self.corr is None:
            self.corr = build_thresholded_corr(scorer.data, self.cfg.corr_rule)

    def step(self, state):
        state, rec = super().step(state)
        update_scores(state.scores, state.gamma, self.corr, state.t)
        return state, rec


class GibbsRandomScan(Sampler):
    kind = "gibbs-rs"

    def _update(self, state, i):
        s_other = self.scorer.toggle_scores(state.ctx, [i])[0]
        on = i in state.gamma
        s1, s0 = (state.log_post, s_other) if on else (s_other, state.log_post)
        want_on = state.rng.random() < gibbs_prob_one(s0, s1)
        if want_on != on:
            state.ctx = state.ctx.toggled(i)
            state.log_post = float(s_other)
            return True
        return False

    def step(self, state):
        c0 = self.scorer.counter.value
        i = int(state.rng.integers(self.p))
        changed = self._update(state, i)
        return self._finish(state, c0, FLIP, changed, 1, 0)


class GibbsSystematicScan(GibbsRandomScan):
    kind = "gibbs-ss"

    def step(self, state):
        c0 = self.scorer.counter.value
        start = state.gamma
        for i in range(self.p):
            self._update(state, i)
        return self._finish(state, c0, FLIP, state.gamma != start, self.p, 0)


_CLASSES = {c.kind: c for c in (PRNS, DMTM, PMTM, AdaPMTM, GibbsRandomScan, GibbsSystematicScan)}


def make_sampler(kind: str, scorer: Scorer, cfg: PmtmConfig | None = None, iters: int = 1000,
                 corr: ThresholdedCorr | None = None) -> Sampler:
    if kind not in _CLASSES:
        raise ValueError(f"unknown sampler {kind!r}; choose from {KINDS}")
    return _CLASSES[kind](scorer, cfg, iters, corr)


@dataclass
class ChainSummary:
    kind: str
    iters_run: int
    total_evals: int
    accept_rate: float
    final_model: tuple
    final_log_posterior: float
    hit_iter: int | None = None
    hit_evals: int | None = None
    v: np.ndarray | None = None
    elapsed: float = 0.0

    def manifest(self) -> dict:
        """Deterministic fields only; wall time is reported separately."""
        return {"kind": self.kind, "itersRun": self.iters_run, "totalEvals": self.total_evals,
                "acceptRate": self.accept_rate, "finalModel": list(self.final_model),
                "finalLogPosterior": self.final_log_posterior, "hitIter": self.hit_iter,
                "hitEvals": self.hit_evals}


def run_chain(kind: str, data: Dataset, hp: Hyperparams, cfg: PmtmConfig | None = None,
              iters: int = 1000, seed: int = 0, emit: Callable[[ChainRecord], None] | None = None,
              *, workers: int = 1, benchmark: bool = False, target: InclusionVector | None = None,
              time_budget: float | None = None, max_evals: int | None = None,
              scorer: Scorer | None = None, corr: ThresholdedCorr | None = None,
              init_v=None) -> ChainSummary:
    """Run ``iters`` steps of sampler ``kind`` from the empty model.

    Output depends only on the arguments (not on ``workers``). With ``target``
    the chain stops at the first step whose model equals it and reports the
    cumulative evaluation count. ``max_evals`` stops once that many evaluations
    have been spent; ``time_budget`` (seconds) stops early on wall time.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    kind = kind.lower()
    cfg = cfg or PmtmConfig(adaptive=kind == "ada-pmtm")
    if scorer is None:
        scorer = Scorer(data, hp, benchmark=benchmark, workers=workers)
    sampler = make_sampler(kind, scorer, cfg, iters, corr)
    rng = np.random.default_rng(seed)
    c_start = scorer.counter.value
    state = sampler.init_state(rng, v=init_v)
    t0 = time.perf_counter()
    n_acc = 0
    hit_iter = hit_evals = None
    if target is not None and state.gamma == target:
        hit_iter, hit_evals = 0, scorer.counter.value - c_start
    else:
        for _ in range(iters):
            state, rec = sampler.step(state)
            n_acc += rec.accepted
            if emit is not None:
                emit(rec)
            if target is not None and state.gamma == target:
                hit_iter, hit_evals = state.t, scorer.counter.value - c_start
                break
            if max_evals is not None and scorer.counter.value - c_start >= max_evals:
                break
            if time_budget is not None and time.perf_counter() - t0 > time_budget:
                break
    return ChainSummary(kind, state.t, scorer.counter.value - c_start,
                        n_acc / state.t if state.t else 0.0, state.gamma.active, state.log_post,
                        hit_iter, hit_evals, state.v.copy(), time.perf_counter() - t0)
