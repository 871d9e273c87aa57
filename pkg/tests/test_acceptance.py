"""Exit criteria, one test per criterion. Each prints a PASS/FAIL line that is
also collected in the terminal summary."""

import filecmp
import math

import numpy as np
import pytest

from modelhop import benchgen, cli, oracle
from modelhop.adaptation import (ImportanceScores, ThresholdedCorr, step_factor,
                                 update_scores)
from modelhop.modelspace import InclusionVector
from modelhop.samplers import PmtmConfig, make_sampler, run_chain
from modelhop.scorer import (Hyperparams, ModelContext, Scorer, log_marginal_likelihood,
                             standardize)

from conftest import random_dataset, unit_info
from oracles import direct_score_sum, log_marginal_by_quadrature

pytestmark = [pytest.mark.acceptance]


def test_ac1_exact_reversibility(report):
    worst = {}
    for seed in range(3):
        data = random_dataset(30, 5, seed=seed)
        post = oracle.enumerate_posterior(data, unit_info(data))
        pi = post.probs()
        for kind in ("prns", "dmtm", "pmtm"):
            A = oracle.exact_kernel(kind, post)
            worst[kind] = max(worst.get(kind, 0.0), oracle.reversibility_violation(A, pi))
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    report("AC1 exact reversibility (p=5, 3 instances, tol 1e-12)",
           all(v < 1e-12 for v in worst.values()), detail)


def test_ac2_exact_stationarity(report):
    tv = {}
    data = random_dataset(30, 5, seed=11)
    post = oracle.enumerate_posterior(data, unit_info(data))
    v = np.random.default_rng(0).uniform(1, 4, 5)
    frozen = PmtmConfig(adaptive=True, freeze=True, M=2.5, remove_weight="inverse")
    for kind, cfg, vv in (("prns", None, None), ("dmtm", None, None), ("pmtm", None, None),
                          ("ada-pmtm", frozen, v)):
        A = oracle.exact_kernel(kind, post, cfg, vv)
        tv[kind] = oracle.total_variation(oracle.stationary_distribution(A), post.probs())
    gdata = random_dataset(30, 10, seed=12, n_true=3)
    gpost = oracle.enumerate_posterior(gdata, unit_info(gdata))
    for kind in ("gibbs-rs", "gibbs-ss"):
        A = oracle.exact_kernel(kind, gpost)
        tv[kind] = oracle.total_variation(oracle.stationary_distribution(A), gpost.probs())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in tv.items())
    report("AC2 exact stationarity (TV tol 1e-10)", all(v < 1e-10 for v in tv.values()), detail)


def _visit_tv(kind, data, hp, post, iters, seed=0, burnin=0.2):
    counts = np.zeros(1 << data.p)
    models = []
    run_chain(kind, data, hp, PmtmConfig(), iters, seed, emit=lambda r: models.append(r.model))
    for m in models[math.ceil(burnin * len(models)):]:
        counts[InclusionVector.from_indices(data.p, m).bits] += 1
    return oracle.total_variation(counts / counts.sum(), post.probs())


@pytest.mark.slow
def test_ac3_sampling_correctness(report):
    inst = benchgen.gen_compound_symmetry(50, 10, 0.3, seed=0)
    data = standardize(inst.data)
    hp = unit_info(data)
    post = oracle.enumerate_posterior(data, hp)
    lengths = (12_500, 50_000, 200_000)
    ok, parts = True, []
    for kind in ("prns", "dmtm", "pmtm", "gibbs-rs", "gibbs-ss"):
        tvs = [_visit_tv(kind, data, hp, post, n) for n in lengths]
        good = tvs[-1] < 0.05 and all(a > b for a, b in zip(tvs, tvs[1:]))
        ok &= good
        parts.append(f"{kind} " + "/".join(f"{t:.4f}" for t in tvs))
    report("AC3 visit frequencies vs enumeration (TV<0.05 at 2e5, decreasing over 4x runs)",
           ok, "; ".join(parts))


def test_ac4_scoring_correctness(report):
    rng = np.random.default_rng(4)
    data = random_dataset(60, 30, seed=4, n_true=5)
    hp = unit_info(data)
    inc_fresh = oracle.incremental_scoring_violation(data, hp, n_models=100, seed=4)

    # models reached by a random walk of cached-factor updates vs least squares
    scorer = Scorer(data, hp, benchmark=True)
    ctx = ModelContext(InclusionVector.empty(30))
    ctx.chol(data)
    walk = 0.0
    for _ in range(100):
        i = int(rng.integers(30))
        if ctx.gamma.size >= 20 and i not in ctx.gamma:
            continue
        ctx = ctx.toggled(i)
        r2_inc = ctx.chol(data).r_squared(data)
        idx = list(ctx.gamma.active)
        if idx:
            beta, *_ = np.linalg.lstsq(data.X[:, idx], data.y, rcond=None)
            fit = data.X[:, idx] @ beta
            r2_ref = float(fit @ fit) / data.y_sq_norm
        else:
            r2_ref = 0.0
        lp_inc = scorer.log_posterior_from_r2(r2_inc, ctx.gamma.size)
        lp_ref = scorer.log_posterior_from_r2(r2_ref, ctx.gamma.size)
        walk = max(walk, abs(lp_inc - lp_ref))

    n, ysq = data.n, data.y_sq_norm
    closed = math.lgamma(n / 2) - n / 2 * math.log(math.pi) - n / 2 * math.log(ysq)
    got = log_marginal_likelihood(data, InclusionVector.empty(30), hp).log_marginal
    empty_err = abs(got - closed)
    empty_ok = empty_err <= 8 * np.finfo(float).eps * abs(closed)

    small = random_dataset(20, 6, seed=5, n_true=3)
    shp = Hyperparams(20.0, 3.0, 3.0)
    quad = 0.0
    for bits in range(64):
        g = InclusionVector(6, bits)
        ref = log_marginal_by_quadrature(small.X, small.y, g.active, shp.g)
        quad = max(quad, abs(log_marginal_likelihood(small, g, shp).log_marginal - ref))

    ok = inc_fresh < 1e-8 and walk < 1e-8 and empty_ok and quad < 1e-6
    report("AC4 scoring correctness", ok,
           f"incremental vs fresh {max(inc_fresh, walk):.2e} (tol 1e-8), "
           f"empty model {empty_err:.2e}, quadrature {quad:.2e} (tol 1e-6)")


@pytest.mark.slow
def test_ac5_evaluations_to_truth(report):
    kinds = ("ada-pmtm", "prns", "gibbs-ss")
    medians = {}
    lines = []
    for p in (50, 100, 200):
        for kind in kinds:
            hits = [cli.first_hit_evals(kind, p, s, iters=10**7, max_evals=300_000)
                    for s in range(20)]
            med = float(np.median([math.inf if h is None else h for h in hits]))
            medians[p, kind] = med
            lines.append(f"p={p} {kind} {med:.0f} ({sum(h is None for h in hits)}/20 censored)")
    for line in lines:
        print(line)
    ada, prns, gss = (medians[200, k] for k in kinds)
    report("AC5 median first-hit evaluations at p=200: ada-pMTM < Gibbs-SS and pRNS < Gibbs-SS",
           ada < gss and prns < gss, "; ".join(lines))


@pytest.mark.slow
def test_ac6_reduced_table(report):
    fn, fp = [], []
    for rep in range(20):
        inst = benchgen.gen_compound_symmetry(100, 200, 0.3, seed=1000 + rep)
        data = standardize(inst.data)
        hp = Hyperparams(100.0, 10.0, 190.0)
        models = []
        cfg = PmtmConfig(M=20, burnin_frac=0.2, adaptive=True)
        run_chain("ada-pmtm", data, hp, cfg, 1000, seed=rep, emit=lambda r: models.append(r.model))
        post = models[math.ceil(0.2 * len(models)):]
        incl = np.zeros(200)
        for m in post:
            incl[list(m)] += 1
        mpm = set(np.flatnonzero(incl / len(post) > 0.5).tolist())
        truth = set(np.flatnonzero(inst.true_beta).tolist())
        fn.append(len(truth - mpm))
        fp.append(len(mpm - truth))
    mfn, mfp = float(np.mean(fn)), float(np.mean(fp))
    report("AC6 ada-pMTM MPM on CS(0.3), n=100, p=200, 20 replicates",
           mfn <= 0.5 and mfp <= 1.0, f"mean FN {mfn:.2f} (<= 0.5), mean FP {mfp:.2f} (<= 1.0)")


def test_ac7_budget(report):
    p, M = 100, 10.0
    data = random_dataset(40, p, seed=7)
    scorer = Scorer(data, unit_info(data))
    sampler = make_sampler("pmtm", scorer, PmtmConfig(M=M), iters=1)
    rng = np.random.default_rng(7)
    sizes = []
    for _ in range(10_000):
        state = sampler.init_state(rng)
        _, rec = sampler.step(state)
        assert rec.move_type == "add"
        sizes.append(rec.forward_set_size)
    sizes = np.asarray(sizes, dtype=float)
    expect = p * M / (M + p)
    se = sizes.std(ddof=1) / math.sqrt(sizes.size)
    z = (sizes.mean() - expect) / se
    report("AC7 mean add-set size from a fresh state", abs(z) < 3,
           f"mean {sizes.mean():.4f}, expected {expect:.4f}, {z:+.2f} SE")


@pytest.mark.slow
def test_ac8_determinism(report, tmp_path):
    d = tmp_path / "inst"
    assert cli.main(["generate", "--design", "cs", "--n", "50", "--p", "600", "--rho", "0.3",
                     "--seed", "2", "--out-dir", str(d)]) == 0
    bad = []
    for kind in ("prns", "dmtm", "pmtm", "ada-pmtm", "gibbs-rs", "gibbs-ss"):
        iters = "10" if kind in ("prns", "gibbs-ss") else "150"
        outs = []
        for w in (1, 4, 8):
            out = tmp_path / f"{kind}-{w}.jsonl"
            rc = cli.main(["sample", "--sampler", kind, "--iters", iters, "--seed", "9",
                           "--workers", str(w), "--data-dir", str(d), "--out", str(out)])
            assert rc == 0
            outs.append(out)
        if not all(filecmp.cmp(outs[0], o, shallow=False) for o in outs[1:]):
            bad.append(kind)
    report("AC8 byte-identical chains at workers 1/4/8", not bad,
           "all samplers identical" if not bad else f"differs: {bad}")


def test_ac9_adaptation_schedule(report):
    p, b0, zeta, T = 4, 10, 2 / 3, 100
    C = np.array([[0, 0.8, 0.4, 0], [0.8, 0, 0, 0.5], [0.4, 0, 0, 0.9], [0, 0.5, 0.9, 0]])
    corr = ThresholdedCorr(C, 0.3, None)
    rng = np.random.default_rng(9)
    scores = ImportanceScores.initial(p, b0, zeta)
    traj, z = [], np.zeros((T, p))
    for t in range(T):
        active = [j for j in range(p) if rng.random() < 0.4]
        for i in range(p):
            if i in active:
                z[t, i] = 1.0
            elif active:
                z[t, i] = sum(C[i, j] for j in active) / len(active)
        update_scores(scores, InclusionVector.from_indices(p, active), corr)
        traj.append(scores.v.copy())
    traj = np.array(traj)
    err = max(float(np.max(np.abs(traj[:, i] - direct_score_sum(z[:, i], b0, zeta))))
              for i in range(p))

    ones = ImportanceScores.initial(1, b0, zeta)
    full = ThresholdedCorr(np.zeros((1, 1)), 0.3, None)
    g1 = InclusionVector.from_indices(1, [0])
    v_prev, incs = 1.0, []
    for _ in range(T):
        update_scores(ones, g1, full)
        incs.append(float(ones.v[0]) - v_prev)
        v_prev = float(ones.v[0])
    expect = 1 + sum(t / 10 for t in range(1, 11)) + sum((t - 10) ** (-2 / 3) for t in range(11, 101))
    err = max(err, abs(v_prev - expect))
    post = incs[b0:]
    decreasing = all(a > b for a, b in zip(post, post[1:]))
    factors_ok = step_factor(b0, b0, zeta) == 1.0 and step_factor(b0 + 1, b0, zeta) == 1.0
    report("AC9 score updates vs direct summation (tol 1e-12), diminishing increments",
           err < 1e-12 and decreasing and factors_ok,
           f"max error {err:.2e}, post-burn-in increments strictly decreasing: {decreasing}")
