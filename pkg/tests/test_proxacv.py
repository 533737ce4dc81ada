import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approxcv.acv import acv, acv_ij
from approxcv.cv import exact_cv
from approxcv.model import L1, Dataset, GLMLoss, Model, QuadraticLoss, Ridge
from approxcv.proxacv import prox_model_minimizer, proxacv, proxacv_ij, proxacv_p
from approxcv.solver import fit_erm


def _logistic(n=80, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ np.ones(d)))).astype(float)
    return Dataset(X, y)


def _fit(model, data, lam):
    return fit_erm(model, data, data.full_weights(), lam)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 3), lam=st.floats(0.01, 1.0))
def test_quadratic_l1_is_exact(seed, d, lam):
    data = Dataset(np.random.default_rng(seed).standard_normal((30, d)) + 0.3)
    model = Model(QuadraticLoss(), L1())
    fit = _fit(model, data, lam)
    gap = abs(proxacv(model, data, lam, fit).value - exact_cv(model, data, lam, fit=fit).value)
    assert gap <= 1e-8


def test_ridge_penalty_reduces_to_newton_methods():
    data = _logistic()
    model = Model(GLMLoss(), Ridge())
    fit = _fit(model, data, 0.05)
    assert np.allclose(proxacv(model, data, 0.05, fit).estimators, acv(model, data, 0.05, fit).estimators, atol=1e-10)
    assert np.allclose(proxacv_ij(model, data, 0.05, fit).estimators, acv_ij(model, data, 0.05, fit).estimators, atol=1e-10)


def test_second_order_prox_model_reproduces_proxacv():
    data = _logistic()
    model = Model(GLMLoss(), L1())
    fit = _fit(model, data, 0.03)
    a = proxacv(model, data, 0.03, fit)
    b = proxacv_p(model, data, 0.03, fit, p=2)
    assert np.allclose(a.estimators, b.estimators, atol=1e-9)


def test_third_order_prox_model_is_closer_to_cv():
    data = _logistic(40)
    model = Model(GLMLoss(), L1())
    fit = _fit(model, data, 0.02)
    cv = exact_cv(model, data, 0.02, fit=fit)
    e2 = np.abs(proxacv(model, data, 0.02, fit).estimators - cv.estimators).max()
    e3 = np.abs(proxacv_p(model, data, 0.02, fit, p=3).estimators - cv.estimators).max()
    assert e3 < e2


def test_prox_model_minimizer_fixed_point():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    H = A @ A.T + 0.5 * np.eye(3)
    g = rng.standard_normal(3)
    bh = rng.standard_normal(3)
    x = prox_model_minimizer(H, g, bh, L1(), 0.4)
    # optimality: 0 in H (x - bh) + g + lam * subgrad |x|
    r = H @ (x - bh) + g
    nz = np.abs(x) > 1e-10
    assert np.allclose(r[nz] + 0.4 * np.sign(x[nz]), 0, atol=1e-9)
    assert np.all(np.abs(r[~nz]) <= 0.4 + 1e-9)


def test_semidefinite_fold_hessian_accepted_when_d_exceeds_n():
    data = _logistic(n=10, d=15, seed=1)
    model = Model(GLMLoss(), L1())
    lam = 0.05
    fit = _fit(model, data, lam)
    res = proxacv(model, data, lam, fit)
    assert np.all(np.isfinite(res.estimators))


def test_unregularized_case_matches_newton():
    data = _logistic()
    model = Model(GLMLoss(), L1())
    fit = _fit(model, data, 0.0)
    res = proxacv(model, data, 0.0, fit)
    ref = acv(Model(GLMLoss(), Ridge()), data, 0.0, fit)
    assert np.allclose(res.estimators, ref.estimators, atol=1e-10)
