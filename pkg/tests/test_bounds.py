import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approxcv.bounds import (
    QuadraticPair, argmin_smallest, assessment_bound, certify, kappa, kappa_ratio, lemma_residuals,
    moment_bound, proxnewton_residual, row_passes, selection_bound, taylor_residual,
)
from approxcv.model import L1, Dataset, GLMLoss, Model, PseudoHuber, QuadraticLoss, Ridge, analytic_constants
from approxcv.solver import fit_path


def _logistic(n=60, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ np.ones(d)))).astype(float)
    return Dataset(X, y)


def _pd(rng, d):
    A = rng.standard_normal((d, d))
    return A @ A.T + 0.1 * np.eye(d)


def test_kappa_dominates_dense_lambda_grid():
    data = _logistic()
    c = analytic_constants(Model(GLMLoss(), Ridge()), data, [0.01, 0.1])
    lams = np.concatenate([[0.0], np.logspace(-6, 8, 5000)])
    for p in (1, 2):
        k = kappa(p, c)
        grid_sup = max(kappa_ratio(p, c, l) for l in lams)
        assert 0 < k < math.inf
        assert grid_sup <= k * (1 + 1e-12)
        assert grid_sup >= 0.999 * k


def test_kappa_diverges_without_penalty_curvature():
    # curvature of the penalty vanishes at infinity while its third derivative does not
    data = _logistic()
    c = analytic_constants(Model(GLMLoss(), PseudoHuber(0.5)), data, [0.01, 0.1])
    assert kappa(2, c) == math.inf
    assert kappa_ratio(2, c, 1e8) > 1e3 * kappa_ratio(2, c, 1.0)


def test_kappa_is_zero_for_quadratic_ridge():
    data = Dataset(np.random.default_rng(0).standard_normal((20, 2)))
    c = analytic_constants(Model(QuadraticLoss(), Ridge()), data, [0.1])
    assert kappa(2, c) == 0.0
    assert assessment_bound("thm1", c, {(0, 3): 1.0, (1, 3): 1.0, (1, 4): 1.0}, 20, 0.1) == 0.0


def test_grid_moment_matches_direct_average():
    data = _logistic()
    model = Model(GLMLoss(), Ridge())
    grid = [0.01, 0.1, 1.0]
    fits = fit_path(model, data, grid)
    c = analytic_constants(model, data, grid, fits)
    m = moment_bound(model, data, 1, 3, grid, fits, c)
    direct = max(np.mean(c.L * np.linalg.norm(model.loss.grads(data, f.beta), axis=1) ** 3) for f in fits)
    assert m.value == pytest.approx(direct, rel=1e-14)


def test_sufficient_moment_bound_dominates_grid_sup():
    data = _logistic()
    model = Model(GLMLoss(), Ridge())
    grid = [0.05, 0.5, 5.0]
    fits = fit_path(model, data, grid)
    c = analytic_constants(model, data, grid, fits)
    for s, r in [(0, 2), (1, 3), (1, 4)]:
        a = moment_bound(model, data, s, r, grid, fits, c).value
        b = moment_bound(model, data, s, r, grid, fits, c, source="prop1").value
        assert a <= b


def test_assessment_bound_needs_moments():
    data = _logistic()
    c = analytic_constants(Model(GLMLoss(), Ridge()), data, [0.1])
    with pytest.raises(ValueError, match="moments"):
        assessment_bound("thm1", c, {}, 60, 0.1)
    with pytest.raises(ValueError):
        assessment_bound("thm9", c, {}, 60, 0.1)


def test_bounds_decrease_with_n():
    data = _logistic()
    c = analytic_constants(Model(GLMLoss(), Ridge()), data, [0.1])
    M = {k: 1.0 for k in [(0, 2), (0, 3), (1, 2), (1, 3), (1, 4), (2, 2), (3, 2)]}
    for kind in ("thm1", "thm2", "thm6", "thm7"):
        b1 = assessment_bound(kind, c, M, 100, 0.1)
        b2 = assessment_bound(kind, c, M, 200, 0.1)
        assert 3.9 <= b1 / b2  # at least quadratic decay
    s1 = selection_bound("thm8", c, M, 100)["bound"]
    s2 = selection_bound("thm8", c, M, 200)["bound"]
    assert s2 < s1


def test_thm5_requires_penalty_gradient():
    data = _logistic()
    c = analytic_constants(Model(GLMLoss(), Ridge()), data, [0.0, 0.1])
    M = {k: 1.0 for k in [(0, 2), (1, 1), (1, 2), (0, 3), (1, 3), (1, 4)]}
    if c.grad_reg_at_est0:
        res = selection_bound("thm5", c, M, 60)
        assert 0 <= res["lower"] <= res["centre"] <= res["upper"]
    c.grad_reg_at_est0 = 0.0
    with pytest.raises(ValueError):
        selection_bound("thm5", c, M, 60)


def test_pass_rule_and_tie_break():
    assert row_passes(1.0, 1.0) and row_passes(1.0 + 5e-13, 1.0) and not row_passes(1.0 + 1e-11, 1.0)
    assert argmin_smallest([0.3, 0.1, 0.2], [1.0, 1.0, 2.0]) == 1


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5))
def test_optimizer_comparison_inequalities(seed, d):
    rng = np.random.default_rng(seed)
    pair = QuadraticPair(_pd(rng, d), rng.standard_normal(d), _pd(rng, d), rng.standard_normal(d))
    res = lemma_residuals(pair)
    scale = 1 + np.abs(pair.Q1).max() + np.abs(pair.Q2).max()
    assert res["errorbound_residual"] <= 1e-10 * scale
    assert res["growth_residual"] <= 1e-10 * scale


def test_lemma_residuals_reject_singular():
    with pytest.raises(ValueError):
        lemma_residuals(QuadraticPair(np.zeros((1, 1)), np.zeros(1), np.eye(1), np.zeros(1)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.0, 0.2))
def test_taylor_comparison_residual_nonpositive(seed, lam):
    rng = np.random.default_rng(seed)
    data = _logistic(30, 2, seed)
    model = Model(GLMLoss(), L1())
    w = rng.standard_normal(2) * 0.5
    assert taylor_residual(model, data, w, lam) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 4), lam=st.floats(0.0, 1.0))
def test_proxnewton_comparison_residual_nonpositive(seed, d, lam):
    rng = np.random.default_rng(seed)
    H, Ht = _pd(rng, d), _pd(rng, d)
    r = proxnewton_residual(rng.standard_normal(d), rng.standard_normal(d), H, Ht, L1(), lam)
    assert r <= 1e-9


def test_certificate_serialization_is_consistent():
    data = _logistic(40)
    model = Model(GLMLoss(), Ridge())
    cert = certify(model, data, [0.05, 0.5], ["acv", "acv_ij"], instance={"name": "t"})
    d = json.loads(cert.to_json())
    assert d["passed"] == cert.passed
    lines = cert.to_csv().strip().split("\n")
    assert lines[0] == "lambda,method,gap,bound,pass"
    for line in lines[1:]:
        lam, m, gap, bound, ok = line.split(",")
        assert (ok == "true") == row_passes(float(gap), float(bound))
    assert cert.to_json() == certify(model, data, [0.05, 0.5], ["acv", "acv_ij"], instance={"name": "t"}).to_json()


def test_quadratic_certificate_is_exact():
    data = Dataset(np.random.default_rng(0).standard_normal((30, 2)))
    cert = certify(Model(QuadraticLoss(), Ridge()), data, [0.01, 0.1, 1.0], ["acv", "acv_ij"])
    assert cert.passed
    assert max(r["gap"] for r in cert.rows if r["method"] == "acv") <= 1e-12
