import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelhop.adaptation import (DENSE_LIMIT, CorrRule, ImportanceScores, ThresholdedCorr,
                                 build_thresholded_corr, f_budget, g_budget, g_unit, step_factor,
                                 update_scores, write_scores_csv, z_score, z_scores)
from modelhop.modelspace import InclusionVector
from modelhop.scorer import Dataset

from conftest import random_dataset
from oracles import direct_score_sum


def test_orthogonal_design_gives_zero_matrix():
    H = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=float)
    X = H[:, 1:]
    C = build_thresholded_corr(Dataset(X, np.arange(4.0)), CorrRule("fixed", epsilon=0.1))
    assert np.all(C.dense() == 0.0)


def test_duplicated_column_survives():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 5))
    X[:, 4] = X[:, 1]
    for eps in (0.0, 0.5, 0.99):
        C = build_thresholded_corr(Dataset(X, rng.standard_normal(30)), CorrRule("fixed", epsilon=eps))
        assert C.dense()[1, 4] == pytest.approx(1.0)


def test_quantile_rule_count():
    data = random_dataset(40, 50, seed=1)
    C = build_thresholded_corr(data)
    pairs = 50 * 49 // 2
    assert C.nnz_upper() == math.ceil(0.25 * pairs)
    # independent sort-based threshold
    R = np.abs(np.corrcoef(data.X, rowvar=False))[np.triu_indices(50, 1)]
    assert C.epsilon == pytest.approx(np.sort(R)[pairs - math.ceil(0.25 * pairs) - 1], abs=1e-14)


def test_matrix_invariants_and_idempotence():
    data = random_dataset(40, 30, seed=2)
    C = build_thresholded_corr(data).dense()
    assert np.array_equal(C, C.T)
    assert np.all((C >= 0) & (C <= 1))
    assert np.all(np.diag(C) == 0)
    again = np.where(C > build_thresholded_corr(data).epsilon, C, 0.0)
    assert np.array_equal(again, C)


def test_sparse_path_matches_dense():
    rng = np.random.default_rng(3)
    n, p = 15, DENSE_LIMIT + 5
    X = rng.standard_normal((n, p))
    X[:, 7] = X[:, 3] + 0.1 * rng.standard_normal(n)
    data = Dataset(X, rng.standard_normal(n))
    C = build_thresholded_corr(data, CorrRule("fixed", epsilon=0.7))
    assert C.is_sparse
    R = np.abs(np.corrcoef(X, rowvar=False))
    np.fill_diagonal(R, 0.0)
    ref = np.where(R > 0.7, R, 0.0)
    np.testing.assert_allclose(C.dense(), ref, atol=1e-12)
    q = build_thresholded_corr(data)
    assert q.is_sparse and 0 < q.epsilon < 1


def test_z_examples():
    C = np.zeros((4, 4))
    C[0, 1] = C[1, 0] = 0.8
    C[0, 2] = C[2, 0] = 0.4
    corr = ThresholdedCorr(C, 0.3, CorrRule())
    g = InclusionVector.from_indices(4, [1, 2])
    assert z_score(0, g, corr) == pytest.approx(0.6)
    assert z_score(1, g, corr) == 1.0
    assert z_score(3, g, corr) == 0.0
    assert z_score(0, InclusionVector.empty(4), corr) == 0.0
    np.testing.assert_allclose(z_scores(g, corr), [0.6, 1.0, 1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_vectorized_z_matches_scalar(seed):
    data = random_dataset(30, 12, seed=seed)
    corr = build_thresholded_corr(data, CorrRule(q=0.5))
    g = InclusionVector.from_indices(12, np.flatnonzero(np.random.default_rng(seed).random(12) < 0.3))
    z = z_scores(g, corr)
    assert np.all((z >= 0) & (z <= 1))
    np.testing.assert_allclose(z, [z_score(i, g, corr) for i in range(12)], atol=1e-15)


def test_step_factor_boundaries():
    assert step_factor(10, 10, 2 / 3) == 1.0
    assert step_factor(11, 10, 2 / 3) == 1.0
    assert step_factor(5, 10, 2 / 3) == 0.5
    assert step_factor(18, 10, 2 / 3) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        step_factor(0, 10, 2 / 3)


def test_update_matches_direct_summation():
    corr = ThresholdedCorr(np.zeros((1, 1)), 0.5, CorrRule())
    s = ImportanceScores.initial(1, b0=10)
    g = InclusionVector.from_indices(1, [0])
    for _ in range(100):
        update_scores(s, g, corr)
    expect = 1 + sum(t / 10 for t in range(1, 11)) + sum((t - 10) ** (-2 / 3) for t in range(11, 101))
    assert abs(s.v[0] - expect) < 1e-12
    assert abs(s.v[0] - direct_score_sum(np.ones(100), 10, 2 / 3)[-1]) < 1e-12


def test_frozen_scores_only_count():
    corr = ThresholdedCorr(np.zeros((2, 2)), 0.5, CorrRule())
    s = ImportanceScores.initial(2, b0=5, frozen=True)
    update_scores(s, InclusionVector.from_indices(2, [0]), corr)
    assert s.t == 1 and np.all(s.v == 1.0)


def test_scores_validation():
    with pytest.raises(ValueError):
        ImportanceScores(np.array([0.5, 1.0]), 5)
    with pytest.raises(ValueError):
        ImportanceScores(np.ones(2), 5, zeta=0.4)


def test_budget_functions():
    assert f_budget(1.0, 100, 100) == 0.5
    assert f_budget(1.0, 10, 100) == pytest.approx(1 / 11)
    assert f_budget(1e12, 10, 100) == pytest.approx(1.0)
    assert g_budget(1.0) == 1.0 and g_budget(4.0) == 0.25
    assert g_unit(7.0) == 1.0
    v = np.linspace(1, 20, 50)
    assert np.all(np.diff(f_budget(v, 5, 100)) > 0)
    assert np.all(np.diff(g_budget(v)) < 0)


def test_scores_csv(tmp_path):
    path = tmp_path / "v.csv"
    write_scores_csv(path, [1.0, 2.5])
    assert path.read_text().splitlines() == ["index,score", "0,1.0", "1,2.5"]
