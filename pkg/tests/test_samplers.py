import math

import numpy as np
import pytest

from modelhop import oracle
from modelhop.adaptation import ThresholdedCorr
from modelhop.modelspace import InclusionVector, MoveWeights
from modelhop.samplers import (KINDS, ChainRecord, PmtmConfig, gibbs_prob_one, log_accept,
                               make_sampler, run_chain)
from modelhop.scorer import Hyperparams, Scorer

from conftest import random_dataset, unit_info


def _records(kind, data, hp, iters=300, seed=0, cfg=None, **kw):
    out = []
    summary = run_chain(kind, data, hp, cfg, iters, seed, emit=out.append, **kw)
    return out, summary


@pytest.mark.parametrize("kind", KINDS)
def test_same_seed_same_stream(kind):
    data = random_dataset(30, 8, seed=1)
    hp = unit_info(data)
    a, _ = _records(kind, data, hp, seed=4)
    b, _ = _records(kind, data, hp, seed=4)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


@pytest.mark.parametrize("kind", KINDS)
def test_record_invariants(kind):
    data = random_dataset(30, 8, seed=2)
    recs, summary = _records(kind, data, unit_info(data), iters=400, seed=1)
    prev = ()
    for r in recs:
        if not r.accepted and kind not in ("gibbs-rs", "gibbs-ss"):
            assert r.model == prev
        if r.forward_set_size > 0:
            assert r.n_evals >= 1
        prev = r.model
    assert summary.iters_run == 400
    assert summary.total_evals == 1 + sum(r.n_evals for r in recs)


def test_record_json_roundtrip():
    r = ChainRecord(3, (1, 4), -12.5, "swap", True, 7, 3, 2)
    assert ChainRecord.from_dict(r.to_dict()) == r
    assert '"logPosterior":-12.5' in r.to_json()


def test_log_accept_range_and_identity():
    assert log_accept(1.0, 1.0, 0.0, 0.0) == 0.0
    assert log_accept(0.0, 2.0, 0.0, 0.0) == -2.0
    assert log_accept(5.0, 0.0, 0.0, 0.0) == 0.0
    assert log_accept(0.0, 0.0, -math.inf, 0.0) == 0.0
    assert log_accept(0.0, 0.0, 0.0, -math.inf) == -math.inf


def test_gibbs_conditional():
    assert gibbs_prob_one(0.0, 0.0) == 0.5
    assert gibbs_prob_one(-math.inf, -math.inf) == 0.5
    assert gibbs_prob_one(-math.inf, 0.0) == 1.0
    assert gibbs_prob_one(1000.0, 0.0) == pytest.approx(0.0)
    assert gibbs_prob_one(0.0, math.log(3)) == pytest.approx(0.75)


@pytest.mark.parametrize("kind", ["prns", "pmtm", "ada-pmtm"])
def test_boundary_moves_forced(kind):
    data = random_dataset(20, 1, seed=0, n_true=1)
    recs, _ = _records(kind, data, unit_info(data), iters=50)
    prev = ()
    for r in recs:
        assert r.move_type == ("add" if prev == () else "remove")
        prev = r.model


def test_prns_p1_two_state_kernel():
    # p=1: the only transitions are {} <-> {0}; both directions are forced, so
    # the kernel is an independence sampler between two states.
    data = random_dataset(20, 1, seed=3, n_true=1)
    hp = unit_info(data)
    post = oracle.enumerate_posterior(data, hp)
    A = oracle.exact_kernel("prns", post)
    pi = post.probs()
    assert A[0, 1] == pytest.approx(min(1.0, pi[1] / pi[0]))
    assert A[1, 0] == pytest.approx(min(1.0, pi[0] / pi[1]))


def _empirical_row(kind, data, hp, gamma, cfg, n, seed, v=None):
    scorer = Scorer(data, hp)
    sampler = make_sampler(kind, scorer, cfg, iters=10)
    rng = np.random.default_rng(seed)
    counts = np.zeros(1 << data.p)
    for _ in range(n):
        state = sampler.init_state(rng, gamma, v)
        state, _ = sampler.step(state)
        counts[state.gamma.bits] += 1
    return counts / n


@pytest.mark.parametrize("kind,start", [("prns", [1, 3]), ("dmtm", [0]), ("pmtm", [0, 2]),
                                        ("pmtm", []), ("gibbs-rs", [1]), ("gibbs-ss", [2, 3])])
def test_step_matches_exact_kernel_row(kind, start):
    data = random_dataset(25, 4, seed=5, n_true=2)
    hp = Hyperparams(25.0, 2.0, 2.0)
    cfg = PmtmConfig(M=2.0)
    post = oracle.enumerate_posterior(data, hp)
    A = oracle.exact_kernel(kind, post, cfg)
    g = InclusionVector.from_indices(4, start)
    n = 20_000
    freq = _empirical_row(kind, data, hp, g, cfg, n, seed=11)
    row = A[g.bits]
    se = np.sqrt(row * (1 - row) / n) + 1e-12
    assert np.all(np.abs(freq - row) < 4.5 * se + 1e-9)


def test_step_matches_kernel_with_scores():
    data = random_dataset(25, 4, seed=6, n_true=2)
    hp = Hyperparams(25.0, 2.0, 2.0)
    v = np.array([1.0, 3.0, 1.5, 2.0])
    cfg = PmtmConfig(M=2.0, remove_weight="inverse", adaptive=True, freeze=True)
    post = oracle.enumerate_posterior(data, hp)
    A = oracle.exact_kernel("pmtm", post, cfg, v)
    g = InclusionVector.from_indices(4, [1, 2])
    n = 20_000
    freq = _empirical_row("ada-pmtm", data, hp, g, cfg, n, seed=12, v=v)
    row = A[g.bits]
    se = np.sqrt(row * (1 - row) / n) + 1e-12
    assert np.all(np.abs(freq - row) < 4.5 * se + 1e-9)


def test_swap_branch_ignores_swap_weight():
    data = random_dataset(30, 8, seed=7)
    hp = unit_info(data)

    def heavy_swap(k, p):
        if k == 0:
            return MoveWeights(1.0, 0.0, 0.0)
        if k == p:
            return MoveWeights(0.0, 1.0, 0.0)
        return MoveWeights(0.1, 0.1, 0.8)

    g = InclusionVector.from_indices(8, [0, 4])
    outs = []
    for sched in (None, heavy_swap):
        sampler = make_sampler("pmtm", Scorer(data, hp), PmtmConfig(M=3.0), iters=10)
        if sched is not None:
            sampler.schedule = sched
        rng = np.random.default_rng(3)
        res = []
        for _ in range(200):
            state = sampler.init_state(rng, g)
            _, rec = sampler._swap_move(state, 0)
            res.append((rec.model, rec.accepted, rec.forward_set_size, rec.backward_set_size))
        outs.append(res)
    assert outs[0] == outs[1]


def test_frozen_adaptive_equals_pmtm():
    data = random_dataset(30, 10, seed=8)
    hp = unit_info(data)
    a, _ = _records("pmtm", data, hp, 300, 5, PmtmConfig(M=2.0))
    b, s = _records("ada-pmtm", data, hp, 300, 5, PmtmConfig(M=2.0, adaptive=True, freeze=True))
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
    assert np.all(s.v == 1.0)


def test_zero_correlation_adapts_active_only():
    data = random_dataset(30, 6, seed=9)
    hp = unit_info(data)
    corr = ThresholdedCorr(np.zeros((6, 6)), 0.5, None)
    recs, s = _records("ada-pmtm", data, hp, 200, 2, PmtmConfig(M=2.0, adaptive=True), corr=corr)
    visited = set().union(*(set(r.model) for r in recs))
    never = [i for i in range(6) if i not in visited]
    assert np.all(s.v[never] == 1.0)
    assert np.all(s.v[list(visited)] > 1.0)


def test_adaptive_scores_nondecreasing():
    data = random_dataset(40, 20, seed=10, n_true=3)
    hp = unit_info(data)
    scorer = Scorer(data, hp)
    sampler = make_sampler("ada-pmtm", scorer, PmtmConfig(adaptive=True), iters=200)
    state = sampler.init_state(np.random.default_rng(0))
    prev = state.v.copy()
    for _ in range(200):
        state, _ = sampler.step(state)
        assert np.all(state.v >= prev)
        assert np.all(state.v - prev <= max(1.0, state.t / state.scores.b0) + 1e-12)
        prev = state.v.copy()


def test_gibbs_p1_marginal():
    data = random_dataset(20, 1, seed=4, n_true=1)
    hp = unit_info(data)
    post = oracle.enumerate_posterior(data, hp)
    recs, _ = _records("gibbs-rs", data, hp, 100_000, 3)
    on = np.mean([len(r.model) for r in recs])
    assert abs(on - post.probs()[1]) < 0.01


def test_forward_add_set_binomial():
    data = random_dataset(40, 60, seed=11)
    hp = unit_info(data)
    sampler = make_sampler("pmtm", Scorer(data, hp), PmtmConfig(M=6.0), iters=1)
    rng = np.random.default_rng(1)
    v = np.full(60, 2.0)
    sizes = []
    for _ in range(4000):
        _, rec = sampler.step(sampler.init_state(rng, v=v))
        sizes.append(rec.forward_set_size)
    f = 6 * 2 / (6 * 2 + 60)
    se = math.sqrt(60 * f * (1 - f) / 4000)
    assert abs(np.mean(sizes) - 60 * f) < 3 * se


def test_target_equal_to_start():
    data = random_dataset(30, 5, seed=2)
    s = run_chain("pmtm", data, unit_info(data), iters=10, target=InclusionVector.empty(5),
                  benchmark=True)
    assert s.hit_iter == 0 and s.hit_evals == 1 and s.iters_run == 0


def test_max_evals_stops_chain():
    data = random_dataset(30, 20, seed=2)
    s = run_chain("prns", data, unit_info(data), iters=10_000, max_evals=500, benchmark=True)
    assert 500 <= s.total_evals < 500 + 20 * 20 * 2 + 40


def test_unknown_kind():
    data = random_dataset(30, 5, seed=2)
    with pytest.raises(ValueError):
        run_chain("nope", data, unit_info(data), iters=5)
    with pytest.raises(ValueError):
        run_chain("pmtm", data, unit_info(data), iters=0)


def test_config_validation_and_roundtrip():
    cfg = PmtmConfig(M=5.0, zeta=0.9, remove_weight="inverse", light_tail_dstar=3)
    assert PmtmConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(M=0.5), dict(burnin_frac=1.0), dict(zeta=0.5), dict(remove_weight="x")):
        with pytest.raises(ValueError):
            PmtmConfig(**bad)
    assert PmtmConfig().budget(1000) == 100
    assert PmtmConfig().budget(5) == 1
