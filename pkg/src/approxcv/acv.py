"""Newton-step approximations of cross-validation for smooth objectives.

Also holds the support-restricted variants for sparse penalties, which apply
the same step on the nonzero coordinates of the full-data fit only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .cv import FoldScheme, fold_losses, make_folds
from .model import Dataset, Model
from .solver import FitResult, SolverError

SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class ApproxResult:
    lam: float
    method: str
    estimators: np.ndarray
    heldout: np.ndarray
    value: float


def _finish(model, data, scheme, lam, method, est) -> ApproxResult:
    est = np.asarray(est)
    held = fold_losses(model, data, scheme, est)
    return ApproxResult(lam, method, est, held, float(np.mean(held)))


def fold_gradients(model: Model, data: Dataset, beta, scheme: FoldScheme) -> np.ndarray:
    """Row f holds (1/n) * sum_{j in fold f} grad l(z_j, beta)."""
    G = model.loss.grads(data, beta)
    return np.array([G[list(fold)].sum(axis=0) for fold in scheme.folds]) / data.n


def _factor(H, what):
    try:
        return cho_factor(H)
    except np.linalg.LinAlgError:
        emin = float(np.linalg.eigvalsh(H)[0])
        raise ValueError(f"{what} Hessian is not positive definite (smallest eigenvalue {emin:.3e})")


def _require_smooth(model, lam):
    if not model.reg.smooth and lam > 0:
        raise ValueError(f"penalty {model.reg.name!r} is not smooth; use proxacv or "
                         "acv_support_restricted")


def _objective_hessian(model, data, beta, w, lam):
    H = model.loss.hessian(data, beta, w)
    if lam > 0:
        H = H + lam * np.diag(model.reg.hess_diag(beta))
    return H


def acv(model: Model, data: Dataset, lam: float, fit: FitResult,
        scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """One Newton step per fold from the full-data fit.

    Each estimator is beta_hat + H_f^{-1} g_f, where H_f is the objective Hessian
    with fold f removed and g_f = (1/n) sum_{j in f} grad l(z_j, beta_hat).

    Returns
    -------
    ApproxResult
    """
    _require_smooth(model, lam)
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    H_full = _objective_hessian(model, data, beta, data.full_weights(), lam)
    G = fold_gradients(model, data, beta, scheme)
    est = np.empty((scheme.n_folds, data.d))
    for f, fold in enumerate(scheme.folds):
        H = H_full - model.loss.hessian(data, beta, data.fold_weights(fold))
        est[f] = beta + cho_solve(_factor(H, f"fold {f}"), G[f])
    return _finish(model, data, scheme, lam, "acv", est)


def acv_ij(model: Model, data: Dataset, lam: float, fit: FitResult,
           scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """Infinitesimal-jackknife variant: every fold uses the full-data Hessian."""
    _require_smooth(model, lam)
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    fac = _factor(_objective_hessian(model, data, beta, data.full_weights(), lam), "full-data")
    G = fold_gradients(model, data, beta, scheme)
    est = beta[None, :] + cho_solve(fac, G.T).T
    return _finish(model, data, scheme, lam, "acv_ij", est)


def taylor_lipschitz(model: Model, data: Dataset, w, lam: float, p: int) -> float:
    """Lipschitz constant of the p-th derivative of the objective with weights ``w``."""
    rho = model.loss.deriv_bound(data, w, p + 1)
    if lam > 0:
        rho += lam * model.reg.deriv_bound(p + 1)
    return float(rho)


def _power_term(delta, rho, p):
    """Gradient and Hessian of rho/(p+1) ||delta||^{p+1}."""
    d = len(delta)
    r = float(np.linalg.norm(delta))
    if rho == 0 or r == 0:
        return 0.0, np.zeros(d), np.zeros((d, d))
    val = rho / (p + 1) * r ** (p + 1)
    grad = rho * r ** (p - 1) * delta
    hess = rho * (r ** (p - 1) * np.eye(d) + (p - 1) * r ** (p - 3) * np.outer(delta, delta))
    return val, grad, hess


def minimize_taylor_model(g0, H0, third, rho, p, tol=1e-11, max_iter=100):
    """Minimize g0.u + u'H0 u/2 [+ T[u,u,u]/6] [+ rho/(p+1)||u||^{p+1}] from u = 0.

    ``third(u)`` must return the matrix T[u] (the third derivative contracted
    once); it is ignored for p = 2. Newton with backtracking on the model.
    """
    d = len(g0)

    def model_eval(u):
        Tu = third(u) if p == 3 else np.zeros((d, d))
        val = g0 @ u + 0.5 * u @ H0 @ u + (u @ Tu @ u) / 6.0
        grad = g0 + H0 @ u + 0.5 * Tu @ u
        hess = H0 + Tu
        pv, pg, ph = _power_term(u, rho, p)
        return val + pv, grad + pg, hess + ph

    u = np.zeros(d)
    val, grad, hess = model_eval(u)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            return u
        try:
            step = -cho_solve(cho_factor(hess), grad)
        except np.linalg.LinAlgError:
            raise SolverError("Taylor model is not locally convex along the Newton path")
        slope = float(grad @ step)
        t = 1.0
        while True:
            cand = u + t * step
            v_new, g_new, h_new = model_eval(cand)
            if v_new <= val + 1e-4 * t * slope or -slope <= 1e-15 * (1 + abs(val)):
                break
            t *= 0.5
            if t < 1e-20:
                raise SolverError("line search failed on Taylor model")
        u, val, grad, hess = cand, v_new, g_new, h_new
    if np.linalg.norm(grad) <= tol:
        return u
    raise SolverError(f"Taylor model solve did not converge (gradient {np.linalg.norm(grad):.3e})")


def acv_p(model: Model, data: Dataset, lam: float, fit: FitResult, p: int = 2,
          regularized: bool = False, scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """Minimizer of the p-th order Taylor model of each fold objective about beta_hat.

    Parameters
    ----------
    p : 2 or 3.
    regularized : add rho/(p+1) ||beta - beta_hat||^{p+1}, rho being the Lipschitz
        constant of the p-th derivative of the fold objective.

    Returns
    -------
    ApproxResult
        With p = 2 and no regularization this coincides with ``acv``.
    """
    if p not in (2, 3):
        raise ValueError("p must be 2 or 3")
    _require_smooth(model, lam)
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    loss, reg = model.loss, model.reg
    H_full = _objective_hessian(model, data, beta, data.full_weights(), lam)
    G = fold_gradients(model, data, beta, scheme)
    reg3 = reg.third_diag(beta) if lam > 0 else np.zeros(data.d)
    est = np.empty((scheme.n_folds, data.d))
    for f, fold in enumerate(scheme.folds):
        w = data.holdout_weights(fold)
        H = H_full - loss.hessian(data, beta, data.fold_weights(fold))

        def third(u, w=w):
            return loss.third_matrix(data, beta, u, w) + lam * np.diag(reg3 * u)

        rho = taylor_lipschitz(model, data, w, lam, p) if regularized else 0.0
        if not np.isfinite(rho):
            raise ValueError("no finite Lipschitz constant for the regularized Taylor model")
        # the full-data gradient vanishes at beta_hat, so the fold gradient is -g_f
        est[f] = beta + minimize_taylor_model(-G[f], H, third, rho, p)
    tag = f"acv_p{p}" + ("_reg" if regularized else "")
    return _finish(model, data, scheme, lam, tag, est)


def support(beta, tol: float = SUPPORT_TOL) -> np.ndarray:
    return np.flatnonzero(np.abs(beta) > tol)


def acv_support_restricted(model: Model, data: Dataset, lam: float, fit: FitResult,
                           ij: bool = False, scheme: Optional[FoldScheme] = None) -> ApproxResult:
    """Newton (or IJ) step confined to the support S of beta_hat; other coordinates stay 0.

    The Hessian is the loss Hessian plus the penalty curvature on S (zero for l1,
    1/delta in the curved region of the patched Lasso).
    """
    scheme = scheme or make_folds(data.n)
    beta = fit.beta
    S = support(beta)
    est = np.zeros((scheme.n_folds, data.d))
    method = "acv_ij_sr" if ij else "acv_sr"
    if len(S) == 0:
        return _finish(model, data, scheme, lam, method, est)
    G = fold_gradients(model, data, beta, scheme)[:, S]
    H_full = model.loss.hessian(data, beta, data.full_weights())
    if lam > 0:
        H_full = H_full + lam * np.diag(model.reg.hess_diag(beta))
    H_full = H_full[np.ix_(S, S)]
    if ij:
        fac = _factor(H_full, "restricted full-data")
        est[:, S] = beta[S][None, :] + cho_solve(fac, G.T).T
    else:
        for f, fold in enumerate(scheme.folds):
            H = H_full - model.loss.hessian(data, beta, data.fold_weights(fold))[np.ix_(S, S)]
            est[f, S] = beta[S] + cho_solve(_factor(H, f"restricted fold {f}"), G[f])
    return _finish(model, data, scheme, lam, method, est)
