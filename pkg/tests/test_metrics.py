from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llambo.acquire import CandidateBatch
from llambo.bench import BRANIN_MIN, get_task
from llambo.metrics import (MetricError, calibration, candidate_stats, correlation_matrix,
                            design_report, generalized_variance, mean_nlpd, mean_std_band, nrmse,
                            r_squared, regret_curve, surrogate_report)
from llambo.space import normalized_array, sample_random
from llambo.surrogate import PredictiveDistribution as PD
from llambo.surrogate.tpe import fit_kde

Z975 = 1.959963984540054


# -- regret ----------------------------------------------------------------------

def test_regret_example():
    assert regret_curve([0.9, 0.8, 0.85], 0.8, 0.9).tolist() == [1.0, 0.0, 0.0]


def test_regret_zero_after_optimum():
    curve = regret_curve([3.0, 1.0, 2.0, 5.0], 1.0, 5.0)
    assert curve[1:].tolist() == [0.0, 0.0, 0.0]


def test_regret_degenerate_bounds():
    assert regret_curve([2.0, 2.0, 2.0], 2.0, 2.0).tolist() == [0.0, 0.0, 0.0]


def test_regret_empty():
    with pytest.raises(MetricError):
        regret_curve([], 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(scores=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_regret_nonincreasing_and_bounded(scores):
    lo, hi = min(scores), max(scores)
    c = regret_curve(scores, lo, hi)
    assert np.all(np.diff(c) <= 0)
    assert np.all(c >= 0) and np.all(c <= 1)


# -- accuracy --------------------------------------------------------------------

def test_nrmse_fixtures():
    assert nrmse([0, 1], [0.5, 0.5]) == 0.5
    assert nrmse([1, 2, 4], [1, 2, 4]) == 0.0
    t, p = np.array([0.2, 0.9, 0.4]), np.array([0.1, 0.7, 0.6])
    assert nrmse(3 * t - 1, 3 * p - 1) == pytest.approx(nrmse(t, p), abs=1e-12)
    with pytest.raises(MetricError):
        nrmse([1, 1], [0, 2])


@settings(max_examples=100, deadline=None)
@given(t=st.lists(st.floats(-100, 100), min_size=2, max_size=10), seed=st.integers(0, 99))
def test_nrmse_zero_iff_equal(t, seed):
    t = np.array(t)
    if np.ptp(t) == 0:
        return
    assert nrmse(t, t) == 0
    p = t.copy()
    p[seed % len(t)] += 1.0
    assert nrmse(t, p) > 0


def test_r_squared_fixtures():
    t = [1.0, 2.0, 4.0]
    assert r_squared(t, t) == 1.0
    assert r_squared(t, [np.mean(t)] * 3) == 0.0
    assert r_squared([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-3.0, abs=1e-12)
    with pytest.raises(MetricError):
        r_squared([2.0, 2.0], [1.0, 3.0])


# -- calibration -------------------------------------------------------------------

def test_calibration_fixtures():
    preds = [PD(0.0, 1.0), PD(1.0, 2.0), PD(-1.0, 0.5)]
    cov, sharp = calibration(preds, [0.0, 1.0, -1.0])
    assert cov == 1.0
    assert sharp == pytest.approx(2 * Z975 * 3.5 / 3, abs=1e-9)
    cov, sharp = calibration([PD(0.0, 1.0)], [3.0])
    assert cov == 0.0 and sharp == pytest.approx(2 * 1.95996, abs=1e-5)
    assert sharp == pytest.approx(2 * Z975, abs=1e-9)


def test_calibration_monte_carlo():
    rng = np.random.default_rng(0)
    mean, std = rng.normal(size=10 ** 4), rng.uniform(0.5, 2, 10 ** 4)
    cov, _ = calibration([PD(m, s) for m, s in zip(mean, std)], rng.normal(mean, std))
    assert abs(cov - 0.95) < 0.02


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), a=st.floats(0.01, 0.99), b=st.floats(0.01, 0.99))
def test_coverage_monotone_in_alpha(seed, a, b):
    rng = np.random.default_rng(seed)
    preds = [PD(float(m), float(s)) for m, s in zip(rng.normal(size=20), rng.uniform(0.1, 2, 20))]
    truth = rng.normal(size=20)
    lo, hi = sorted((a, b))
    assert calibration(preds, truth, lo)[0] <= calibration(preds, truth, hi)[0]


def test_mean_nlpd_fixture():
    preds = [PD(0.0, 1.0), PD(1.0, 1.0)]
    expected = 0.5 * math.log(2 * math.pi) + 0.25
    assert mean_nlpd(preds, [0.0, 2.0]) == pytest.approx(expected, abs=1e-12)


def test_surrogate_report_fields():
    preds = [PD(0.1, 0.2), PD(0.6, 0.2), PD(0.9, 0.2)]
    rep = surrogate_report("gp", 5, preds, [0.0, 0.5, 1.0], "0-5")
    assert rep.nrmse == pytest.approx(math.sqrt(0.01) / 1.0, abs=1e-12)
    assert rep.r2 == pytest.approx(1 - 0.03 / 0.5, abs=1e-12)
    assert rep.regret == 0.0 and rep.split_id == "0-5"


# -- design diversity --------------------------------------------------------------

def test_generalized_variance_fixtures():
    assert generalized_variance([[0, 0], [1, 0], [0, 1], [1, 1]]) == pytest.approx(1 / 9,
                                                                                   abs=1e-12)
    assert generalized_variance([[0.3, 0.3]] * 4) == 0.0
    P = np.array([[0.1, 0.5, 0.2], [0.7, 0.3, 0.9], [0.4, 0.8, 0.1], [0.9, 0.2, 0.6]])
    assert generalized_variance(P[:, [2, 0, 1]]) == pytest.approx(generalized_variance(P),
                                                                   abs=1e-15)
    with pytest.raises(MetricError):
        generalized_variance([[0.1, 0.2]])


def test_generalized_variance_uncorrelated_product():
    P = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]])
    var = P.var(axis=0, ddof=1)
    assert generalized_variance(P) == pytest.approx(var.prod(), abs=1e-12)


def test_correlation_fixtures():
    line = np.array([[0.1, 0.1], [0.4, 0.4], [0.8, 0.8]])
    C = correlation_matrix(line)
    assert abs(C[0, 1] - 1) <= 1e-12 and abs(C[1, 0] - 1) <= 1e-12
    const = np.array([[0.1, 0.5], [0.4, 0.5], [0.8, 0.5]])
    C = correlation_matrix(const)
    assert C[0, 1] == 0 and C[1, 1] == 1
    U = np.random.default_rng(0).random((10 ** 4, 3))
    off = correlation_matrix(U)[~np.eye(3, dtype=bool)]
    assert np.mean(np.abs(off)) < 0.05


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 10), d=st.integers(1, 4))
def test_design_report_invariants(seed, n, d):
    P = np.random.default_rng(seed).random((n, d))
    rep = design_report(P)
    assert rep.gen_variance >= 0
    assert np.allclose(rep.corr, rep.corr.T) and np.all(np.diag(rep.corr) == 1)
    assert np.all(np.abs(rep.corr) <= 1)


# -- candidate statistics -----------------------------------------------------------

def test_candidate_stats_optimum_and_identical():
    task = get_task("synthetic/Branin")
    opt = {"x1": math.pi, "x2": 2.275}
    density = fit_kde(normalized_array(task.space, [opt]), "independent")
    stats = candidate_stats(CandidateBatch([opt, dict(opt)], "llm"), task, density)
    assert stats.best_regret == pytest.approx(0.0, abs=1e-12)
    assert stats.gen_var == 0.0
    assert task.known_best == BRANIN_MIN


def test_candidate_stats_loglik_prefers_fitted_points():
    task = get_task("wine/SVM")
    fitted = sample_random(task.space, 6, seed=1)
    density = fit_kde(normalized_array(task.space, fitted), "multivariate")
    at_fit = candidate_stats(CandidateBatch(fitted, "llm"), task, density)
    uniform = candidate_stats(CandidateBatch(sample_random(task.space, 6, seed=2), "random"),
                              task, density)
    assert at_fit.mean_loglik >= uniform.mean_loglik


# -- aggregation --------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_band_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    A = rng.random((5, 12))
    m1, s1 = mean_std_band(A)
    m2, s2 = mean_std_band(A[rng.permutation(5)])
    assert np.array_equal(m1, m2) and np.array_equal(s1, s2)


def test_band_identical_runs_zero_std():
    _, std = mean_std_band([[0.5, 0.2, 0.1]] * 5)
    assert np.all(std == 0)
