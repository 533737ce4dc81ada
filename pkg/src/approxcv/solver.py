"""ERM fitting, the metric proximal operator, and single Newton / proximal-Newton steps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import INF, Dataset, Model, Ridge, NoPenalty, evaluate, objective_value


@dataclass(frozen=True)
class SolverConfig:
    tol_fit: float = 1e-10
    max_iter: int = 200
    inner_tol: float = 1e-12
    inner_max_iter: int = 10000
    ls_factor: float = 0.5
    ls_decrease: float = 1e-4
    warm_start: bool = True

    def __post_init__(self):
        if min(self.tol_fit, self.inner_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_iter, self.inner_max_iter) < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.ls_factor < 1 or not 0 < self.ls_decrease < 1:
            raise ValueError("line-search parameters must lie in (0, 1)")


DEFAULT = SolverConfig()


@dataclass(frozen=True)
class FitResult:
    lam: float
    beta: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# quadratic-plus-penalty subproblems


def _is_diagonal(H) -> bool:
    return not np.any(H - np.diag(np.diag(H)))


def _linear_solve(H, b):
    try:
        return cho_solve(cho_factor(H), b)
    except np.linalg.LinAlgError:
        emin = float(np.linalg.eigvalsh(H)[0])
        raise ValueError(f"Hessian is not positive definite (smallest eigenvalue {emin:.3e})")


def quad_prox_solve(H, b, reg, lam, x0=None, cfg: SolverConfig = DEFAULT):
    """Minimize 0.5 x^T H x - b^T x + lam * pi(x) for symmetric PSD ``H``.

    Returns
    -------
    x : ndarray
    converged : bool
    residual : float
        Norm of the prox-gradient mapping at ``x`` (0 for closed-form cases).
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam == 0 or isinstance(reg, NoPenalty):
        return _linear_solve(H, b), True, 0.0
    if isinstance(reg, Ridge):
        return _linear_solve(H + 2.0 * reg.scale * lam * np.eye(len(b)), b), True, 0.0
    if _is_diagonal(H):
        h = np.diag(H)
        if np.all(h > 0):
            return reg.prox(b / h, lam / h), True, 0.0
    evals = np.linalg.eigvalsh(H)
    L = float(evals[-1])
    mu = max(float(evals[0]), 0.0)
    if L <= 0:
        if not np.any(b):
            return reg.argmin(len(b)), True, 0.0
        raise SolverError("prox subproblem has no curvature")
    x = np.array(b / L if x0 is None else x0, dtype=float)
    y = x.copy()
    tk = 1.0
    strong = mu > 1e-10 * L
    mom = (math.sqrt(L) - math.sqrt(mu)) / (math.sqrt(L) + math.sqrt(mu)) if strong else 0.0
    scale = max(1.0, float(np.linalg.norm(b)))
    res = INF
    for it in range(cfg.inner_max_iter):
        grad = H @ y - b
        x_new = reg.prox(y - grad / L, lam / L)
        res = L * float(np.linalg.norm(x_new - y))
        if res <= cfg.inner_tol * scale:
            return x_new, True, res
        if strong:
            beta_k = mom
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
            beta_k = (tk - 1.0) / t_new
            tk = t_new
        # adaptive restart when momentum points uphill
        if np.dot(y - x_new, x_new - x) > 0:
            beta_k = 0.0
            tk = 1.0
        y = x_new + beta_k * (x_new - x)
        x = x_new
    return x, False, res


def generalized_prox(H, v, reg, lam, cfg: SolverConfig = DEFAULT):
    """Metric proximal operator argmin_beta 0.5 ||v - beta||_H^2 + lam * pi(beta).

    Parameters
    ----------
    H : (d, d) symmetric positive definite matrix.
    v : (d,) point being projected.
    reg : Regularizer, lam : float
        The penalty is lam * reg.

    Returns
    -------
    ndarray
        The unique minimizer. Closed form when H is diagonal (every penalty here is
        separable); otherwise accelerated proximal gradient with step 1/lambda_max(H).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValueError("H must be symmetric")
    emin = float(np.linalg.eigvalsh(H)[0])
    if emin <= 0:
        raise ValueError(f"H must be positive definite (smallest eigenvalue {emin:.3e})")
    if lam == 0 or isinstance(reg, NoPenalty):
        return v.copy()
    x, ok, res = quad_prox_solve(H, H @ v, reg, lam, x0=v, cfg=cfg)
    if not ok:
        raise SolverError(f"prox subproblem did not converge (residual {res:.3e})")
    return x


def newton_step(beta0, gradient, hessian):
    """beta0 - hessian^{-1} gradient."""
    beta0 = np.atleast_1d(np.asarray(beta0, dtype=float))
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    g = np.atleast_1d(np.asarray(gradient, dtype=float))
    return beta0 - _linear_solve(H, g)


def prox_newton_step(beta0, grad_loss, hess_loss, reg, lam, cfg: SolverConfig = DEFAULT):
    """prox^H_{lam pi}(beta0 - H^{-1} g)."""
    target = newton_step(beta0, grad_loss, hess_loss)
    return generalized_prox(hess_loss, target, reg, lam, cfg)


# ---------------------------------------------------------------------------
# fitting


def prox_residual(model: Model, data: Dataset, weights, beta, lam) -> float:
    """||beta - prox_{lam pi}(beta - grad loss)||, zero exactly at a minimizer."""
    g = model.loss.grad(data, beta, weights)
    return float(np.linalg.norm(beta - model.reg.prox(beta - g, lam)))


def _fit_smooth(model, data, w, lam, beta, cfg):
    it = 0
    ev = evaluate(model, data, w, beta, lam)
    for it in range(1, cfg.max_iter + 1):
        gnorm = float(np.linalg.norm(ev.gradient))
        if gnorm <= cfg.tol_fit:
            return FitResult(lam, beta, ev.value, gnorm, it - 1, True)
        try:
            step = -cho_solve(cho_factor(ev.hessian), ev.gradient)
        except np.linalg.LinAlgError:
            emin = float(np.linalg.eigvalsh(ev.hessian)[0])
            raise ValueError(f"indefinite Hessian at lambda={lam} (smallest eigenvalue {emin:.3e})")
        slope = float(ev.gradient @ step)
        t = 1.0
        while True:
            cand = beta + t * step
            f_new = objective_value(model, data, w, cand, lam)
            if f_new <= ev.value + cfg.ls_decrease * t * slope:
                break
            if -slope <= 1e-13 * (1.0 + abs(ev.value)):
                break  # decrease is below rounding; trust the Newton step
            t *= cfg.ls_factor
            if t < 1e-20:
                return FitResult(lam, beta, ev.value, gnorm, it, False)
        beta = cand
        ev = evaluate(model, data, w, beta, lam)
    gnorm = float(np.linalg.norm(ev.gradient))
    return FitResult(lam, beta, ev.value, gnorm, cfg.max_iter, gnorm <= cfg.tol_fit)


def _fit_prox(model, data, w, lam, beta, cfg):
    loss, reg = model.loss, model.reg
    F = objective_value(model, data, w, beta, lam)
    for it in range(1, cfg.max_iter + 1):
        g = loss.grad(data, beta, w)
        res = float(np.linalg.norm(beta - reg.prox(beta - g, lam)))
        if res <= cfg.tol_fit:
            return FitResult(lam, beta, F, res, it - 1, True)
        H = loss.hessian(data, beta, w)
        scale = max(float(np.trace(H)) / len(beta), 1e-300)
        if float(np.linalg.eigvalsh(H)[0]) < 1e-8 * scale:
            H = H + 1e-8 * scale * np.eye(len(beta))
        target, _, _ = quad_prox_solve(H, H @ beta - g, reg, lam, x0=beta, cfg=cfg)
        d = target - beta
        delta = float(g @ d) + lam * (reg.value(target) - reg.value(beta))
        t = 1.0
        while True:
            cand = beta + t * d
            F_new = objective_value(model, data, w, cand, lam)
            if F_new <= F + cfg.ls_decrease * t * delta:
                break
            if abs(delta) <= 1e-13 * (1.0 + abs(F)):
                break
            t *= cfg.ls_factor
            if t < 1e-20:
                return FitResult(lam, beta, F, res, it, False)
        beta, F = cand, F_new
    g = loss.grad(data, beta, w)
    res = float(np.linalg.norm(beta - reg.prox(beta - g, lam)))
    return FitResult(lam, beta, F, res, cfg.max_iter, res <= cfg.tol_fit)


def fit_erm(model: Model, data: Dataset, weights, lam: float, cfg: Optional[SolverConfig] = None,
            beta0=None) -> FitResult:
    """Minimize sum_i w_i l(z_i, beta) + lam * pi(beta).

    Parameters
    ----------
    model, data : the instance.
    weights : (n,) nonnegative weights (the measure being fit).
    lam : float in [0, inf]; ``math.inf`` returns argmin pi exactly.
    cfg : SolverConfig.
    beta0 : optional warm start.

    Returns
    -------
    FitResult
        Damped Newton for smooth objectives (gradient-norm residual), proximal
        Newton with backtracking otherwise (prox-gradient residual).
    """
    cfg = cfg or DEFAULT
    if lam < 0 or math.isnan(lam):
        raise ValueError("lambda must be nonnegative")
    if math.isinf(lam):
        beta = model.reg.argmin(data.d)
        return FitResult(INF, beta, INF if isinstance(model.reg, NoPenalty) else 0.0, 0.0, 0, True)
    beta = np.zeros(data.d) if beta0 is None else np.array(beta0, dtype=float)
    w = np.asarray(weights, dtype=float)
    if model.reg.smooth or lam == 0:
        return _fit_smooth(model, data, w, lam, beta, cfg)
    return _fit_prox(model, data, w, lam, beta, cfg)


def fit_path(model: Model, data: Dataset, lambdas, cfg: Optional[SolverConfig] = None,
             weights=None, strict: bool = True) -> list:
    """Fit every lambda in order, warm-starting each from the previous fit."""
    cfg = cfg or DEFAULT
    w = data.full_weights() if weights is None else weights
    out = []
    beta = None
    for lam in lambdas:
        fit = fit_erm(model, data, w, float(lam), cfg, beta0=beta if cfg.warm_start else None)
        if strict and not fit.converged:
            raise SolverError(f"fit did not converge at lambda={lam} (residual {fit.residual:.3e})")
        out.append(fit)
        if np.all(np.isfinite(fit.beta)):
            beta = fit.beta
    return out
