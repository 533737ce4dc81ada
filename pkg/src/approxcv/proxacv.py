"""Proximal-Newton approximations of cross-validation for non-smooth penalties.

Only the loss is expanded around the full-data fit; the penalty enters exactly
through a metric proximal operator.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .acv import ApproxResult, _finish, _power_term, fold_gradients
from .cv import FoldScheme, make_folds
from .model import Dataset, Model, NoPenalty
from .solver import DEFAULT, FitResult, SolverConfig, SolverError, quad_prox_solve


def _check_psd(H, what):
    evals = np.linalg.eigvalsh(H)
    if evals[0] < -1e-12 * max(1.0, abs(evals[-1])):
        raise ValueError(f"{what} loss Hessian is not positive semidefinite "
                         f"(smallest eigenvalue {evals[0]:.3e})")


def prox_model_minimizer(H, g, beta_hat, reg, lam, cfg: SolverConfig = DEFAULT):
    """argmin_beta 0.5 ||beta_hat - beta||_H^2 + beta^T g + lam pi(beta).

    Equal to prox^H_{lam pi}(beta_hat - H^{-1} g) when H is positive definite.
    A merely semidefinite H is accepted when the penalty keeps the problem
    bounded (the minimizer closest to the warm start beta_hat is returned).
    """
    b = H @ beta_hat - g
    if lam == 0 or isinstance(reg, NoPenalty):
        x, _, _ = quad_prox_solve(H, b, reg, 0.0)
        return x
    x, ok, res = quad_prox_solve(H, b, reg, lam, x0=beta_hat, cfg=cfg)
    if not ok:
        raise SolverError(f"prox subproblem did not converge (residual {res:.3e})")
    return x


def proxacv(model: Model, data: Dataset, lam: float, fit: FitResult,
            cfg: Optional[SolverConfig] = None, scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """One proximal-Newton step per fold, with the fold-specific loss Hessian.

    Parameters
    ----------
    model, data, lam : the instance.
    fit : full-data FitResult at ``lam``.
    cfg : SolverConfig for the inner prox problems.
    scheme : FoldScheme (leave-one-out by default).

    Returns
    -------
    ApproxResult
        Estimator f minimizes 0.5||beta_hat - beta||^2_{H_f} + beta^T g_f + lam pi(beta)
        with H_f, g_f the loss Hessian and gradient of the fold objective at beta_hat.
    """
    cfg = cfg or DEFAULT
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    loss = model.loss
    H_full = loss.hessian(data, beta, data.full_weights())
    g_full = loss.grad(data, beta, data.full_weights())
    G = fold_gradients(model, data, beta, scheme)
    est = np.empty((scheme.n_folds, data.d))
    for f, fold in enumerate(scheme.folds):
        H = H_full - loss.hessian(data, beta, data.fold_weights(fold))
        _check_psd(H, f"fold {f}")
        est[f] = prox_model_minimizer(H, g_full - G[f], beta, model.reg, lam, cfg)
    return _finish(model, data, scheme, lam, "proxacv", est)


def proxacv_ij(model: Model, data: Dataset, lam: float, fit: FitResult,
               cfg: Optional[SolverConfig] = None, scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """As ``proxacv`` but every fold shares the full-data loss Hessian."""
    cfg = cfg or DEFAULT
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    loss = model.loss
    H = loss.hessian(data, beta, data.full_weights())
    _check_psd(H, "full-data")
    g_full = loss.grad(data, beta, data.full_weights())
    G = fold_gradients(model, data, beta, scheme)
    est = np.array([prox_model_minimizer(H, g_full - G[f], beta, model.reg, lam, cfg)
                    for f in range(scheme.n_folds)])
    return _finish(model, data, scheme, lam, "proxacv_ij", est)


def _prox_newton_on_model(g0, H0, third, rho, p, beta_hat, reg, lam, cfg, tol=1e-11, max_iter=100):
    """Minimize s(u) + lam pi(beta_hat + u), s the (regularized) Taylor polynomial of the loss."""
    d = len(g0)

    def smooth_eval(u):
        Tu = third(u) if p == 3 else np.zeros((d, d))
        val = g0 @ u + 0.5 * u @ H0 @ u + (u @ Tu @ u) / 6.0
        grad = g0 + H0 @ u + 0.5 * Tu @ u
        hess = H0 + Tu
        pv, pg, ph = _power_term(u, rho, p)
        return val + pv, grad + pg, hess + ph

    def total(u, sval):
        return sval + lam * reg.value(beta_hat + u)

    u = np.zeros(d)
    sval, sgrad, shess = smooth_eval(u)
    F = total(u, sval)
    for _ in range(max_iter):
        b = beta_hat + u
        res = float(np.linalg.norm(b - reg.prox(b - sgrad, lam)))
        if res <= tol:
            return b
        _check_psd(shess, "Taylor-model")
        target, ok, r_in = quad_prox_solve(shess, shess @ b - sgrad, reg, lam, x0=b, cfg=cfg)
        if not ok:
            raise SolverError(f"inner prox problem did not converge (residual {r_in:.3e})")
        step = target - b
        dec = float(sgrad @ step) + lam * (reg.value(target) - reg.value(b))
        t = 1.0
        while True:
            cand = u + t * step
            s_new, g_new, h_new = smooth_eval(cand)
            F_new = total(cand, s_new)
            if F_new <= F + 1e-4 * t * dec or abs(dec) <= 1e-15 * (1 + abs(F)):
                break
            t *= 0.5
            if t < 1e-20:
                raise SolverError("line search failed on the proximal Taylor model")
        u, sval, sgrad, shess, F = cand, s_new, g_new, h_new, F_new
    b = beta_hat + u
    res = float(np.linalg.norm(b - reg.prox(b - sgrad, lam)))
    if res <= tol:
        return b
    raise SolverError(f"proximal Taylor model did not converge (residual {res:.3e})")


def proxacv_p(model: Model, data: Dataset, lam: float, fit: FitResult, p: int = 2,
              regularized: bool = False, cfg: Optional[SolverConfig] = None,
              scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """Higher-order proximal variant: p-th order Taylor model of the fold loss plus the exact penalty.

    With ``regularized`` the term rho/(p+1) ||beta - beta_hat||^{p+1} is added, rho
    being the Lipschitz constant of the p-th derivative of the fold loss.
    """
    if p not in (2, 3):
        raise ValueError("p must be 2 or 3")
    cfg = cfg or DEFAULT
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    loss = model.loss
    H_full = loss.hessian(data, beta, data.full_weights())
    g_full = loss.grad(data, beta, data.full_weights())
    G = fold_gradients(model, data, beta, scheme)
    est = np.empty((scheme.n_folds, data.d))
    for f, fold in enumerate(scheme.folds):
        w = data.holdout_weights(fold)
        H = H_full - loss.hessian(data, beta, data.fold_weights(fold))

        def third(u, w=w):
            return loss.third_matrix(data, beta, u, w)

        rho = loss.deriv_bound(data, w, p + 1) if regularized else 0.0
        if not np.isfinite(rho):
            raise ValueError("no finite Lipschitz constant for the regularized Taylor model")
        est[f] = _prox_newton_on_model(g_full - G[f], H, third, rho, p, beta, model.reg, lam, cfg)
    tag = f"proxacv_p{p}" + ("_reg" if regularized else "")
    return _finish(model, data, scheme, lam, tag, est)
