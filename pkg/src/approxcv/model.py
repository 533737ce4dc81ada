"""Losses, regularizers, datasets and the curvature/smoothness constants used by the bounds.

Every loss exposes per-point derivative oracles up to third order. Third-order
information is only ever returned as a directional contraction, so no d x d x d
tensor is formed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

INF = math.inf


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    """Immutable training set.

    For quadratic losses the rows of ``X`` are the points z_i. For GLM losses
    the rows of ``X`` are covariates and ``y`` holds the labels.
    """

    X: np.ndarray
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("points must form a 2-d array")
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 points, got {X.shape[0]}")
        if X.shape[1] < 1:
            raise ValueError("points must have dimension >= 1")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.array(self.y, dtype=float).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError("labels and covariates disagree on n")
            y.setflags(write=False)
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def full_weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def holdout_weights(self, fold: Sequence[int]) -> np.ndarray:
        """Weights of the objective with ``fold`` removed: 1/n elsewhere, not renormalized."""
        w = self.full_weights()
        w[list(fold)] = 0.0
        return w

    def fold_weights(self, fold: Sequence[int]) -> np.ndarray:
        """Weights 1/n on ``fold`` and 0 elsewhere (the removed part of the measure)."""
        w = np.zeros(self.n)
        w[list(fold)] = 1.0 / self.n
        return w

    @classmethod
    def from_csv(cls, path, labeled: bool = False) -> "Dataset":
        rows = []
        with open(path, newline="") as fh:
            for k, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if k == 0 and not rows:
                        continue  # header
                    raise ValueError(f"{path}: non-numeric entry on line {k + 1}")
        arr = np.array(rows, dtype=float)
        if labeled:
            y = arr[:, -1]
            if not np.all((y == 0) | (y == 1)):
                raise ValueError(f"{path}: labels must be 0 or 1")
            return cls(arr[:, :-1], y)
        return cls(arr)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cols = [f"x{j}" for j in range(self.d)]
            if self.y is not None:
                cols.append("y")
            w.writerow(cols)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.X[i]]
                if self.y is not None:
                    row.append(repr(float(self.y[i])))
                w.writerow(row)


# ---------------------------------------------------------------------------
# losses


class Loss:
    """Per-point loss l(z, beta) with derivative oracles."""

    name = "loss"

    def values(self, data: Dataset, beta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, data: Dataset, beta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, data, beta, w) -> float:
        return float(w @ self.values(data, beta))

    def grad(self, data, beta, w) -> np.ndarray:
        return w @ self.grads(data, beta)

    def hessian(self, data, beta, w) -> np.ndarray:
        raise NotImplementedError

    def point_hessian_norms(self, data, beta) -> np.ndarray:
        raise NotImplementedError

    def third_matrix(self, data, beta, v, w) -> np.ndarray:
        """Weighted sum of the third derivative contracted once with v (a d x d matrix)."""
        raise NotImplementedError

    def third_contraction(self, data, beta, v, w) -> np.ndarray:
        """Weighted sum of the third derivative contracted twice with v."""
        return self.third_matrix(data, beta, v, w) @ v

    def grad_lipschitz(self, data) -> np.ndarray:
        """Per-point Lipschitz constants L_i of beta -> grad l(z_i, beta)."""
        raise NotImplementedError

    def deriv_bound(self, data, w, k: int) -> float:
        """Lipschitz constant of the (k-1)-th derivative of the weighted loss.

        k = 2 bounds the Hessian norm, k = 3 is the Hessian-Lipschitz constant.
        """
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.name}


class QuadraticLoss(Loss):
    """l(z, beta) = scale * (beta - z)^T A (beta - z), A = ``metric`` (identity by default)."""

    name = "quadratic"

    def __init__(self, metric=None, scale: float = 0.5):
        self.metric = None if metric is None else np.array(metric, dtype=float)
        self.scale = float(scale)
        if self.metric is not None:
            if self.metric.ndim != 2 or self.metric.shape[0] != self.metric.shape[1]:
                raise ValueError("metric must be square")
            if np.linalg.eigvalsh(self.metric).min() < 0:
                raise ValueError("metric must be positive semidefinite")

    def _Q(self, d):
        A = np.eye(d) if self.metric is None else self.metric
        if A.shape[0] != d:
            raise ValueError(f"metric is {A.shape[0]}-dimensional, data are {d}-dimensional")
        return 2.0 * self.scale * A

    def values(self, data, beta):
        R = np.asarray(beta)[None, :] - data.X
        Q = self._Q(data.d)
        return 0.5 * np.einsum("ij,jk,ik->i", R, Q, R)

    def grads(self, data, beta):
        R = np.asarray(beta)[None, :] - data.X
        return R @ self._Q(data.d)

    def hessian(self, data, beta, w):
        return float(np.sum(w)) * self._Q(data.d)

    def point_hessian_norms(self, data, beta):
        return np.full(data.n, np.linalg.norm(self._Q(data.d), 2))

    def third_matrix(self, data, beta, v, w):
        return np.zeros((data.d, data.d))

    def third_contraction(self, data, beta, v, w):
        return np.zeros(data.d)

    def grad_lipschitz(self, data):
        return np.full(data.n, np.linalg.norm(self._Q(data.d), 2))

    def deriv_bound(self, data, w, k):
        if k == 2:
            return float(np.sum(w)) * float(np.linalg.norm(self._Q(data.d), 2))
        return 0.0

    def describe(self):
        out = {"kind": self.name, "scale": self.scale}
        if self.metric is not None:
            out["metric"] = self.metric.tolist()
        return out


@dataclass(frozen=True)
class Link:
    """Scalar loss psi(t, y) of the linear predictor t = x^T beta.

    ``sup`` maps derivative order k to sup_t |psi^(k)(t, y)| over labels.
    """

    name: str
    psi: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    sup: dict = field(default_factory=dict)


def _logistic_link() -> Link:
    def d2(t, y):
        s = expit(t)
        return s * (1.0 - s)

    def d3(t, y):
        s = expit(t)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    return Link(
        name="logistic",
        psi=lambda t, y: np.logaddexp(0.0, t) - y * t,
        d1=lambda t, y: expit(t) - y,
        d2=d2,
        d3=d3,
        # |s(1-s)| <= 1/4, |s(1-s)(1-2s)| <= 1/(6 sqrt 3), |s(1-s)(1-6s+6s^2)| <= 1/8
        sup={2: 0.25, 3: 1.0 / (6.0 * math.sqrt(3.0)), 4: 0.125},
    )


def _exponential_link() -> Link:
    sgn = lambda y: 2.0 * y - 1.0
    return Link(
        name="exponential",
        psi=lambda t, y: np.exp(-sgn(y) * t),
        d1=lambda t, y: -sgn(y) * np.exp(-sgn(y) * t),
        d2=lambda t, y: np.exp(-sgn(y) * t),
        d3=lambda t, y: -sgn(y) * np.exp(-sgn(y) * t),
        sup={2: INF, 3: INF, 4: INF},
    )


LINKS = {"logistic": _logistic_link, "exponential": _exponential_link}


class GLMLoss(Loss):
    """l((x, y), beta) = psi(x^T beta, y)."""

    def __init__(self, link="logistic"):
        if isinstance(link, str):
            if link not in LINKS:
                raise ValueError(f"unknown link {link!r}; choose from {sorted(LINKS)}")
            link = LINKS[link]()
        self.link = link
        self.name = link.name

    def _t(self, data, beta):
        if data.y is None:
            raise ValueError("GLM losses need labelled data")
        return data.X @ np.asarray(beta, dtype=float)

    def values(self, data, beta):
        return self.link.psi(self._t(data, beta), data.y)

    def grads(self, data, beta):
        return self.link.d1(self._t(data, beta), data.y)[:, None] * data.X

    def hessian(self, data, beta, w):
        w = np.asarray(w)
        idx = np.flatnonzero(w)
        X = data.X[idx]
        c = w[idx] * self.link.d2(X @ beta, data.y[idx])
        return X.T @ (c[:, None] * X)

    def point_hessian_norms(self, data, beta):
        t = self._t(data, beta)
        return np.abs(self.link.d2(t, data.y)) * np.einsum("ij,ij->i", data.X, data.X)

    def third_matrix(self, data, beta, v, w):
        w = np.asarray(w)
        idx = np.flatnonzero(w)
        X = data.X[idx]
        c = w[idx] * self.link.d3(X @ beta, data.y[idx]) * (X @ v)
        return X.T @ (c[:, None] * X)

    def third_contraction(self, data, beta, v, w):
        c = np.asarray(w) * self.link.d3(self._t(data, beta), data.y) * (data.X @ v) ** 2
        return data.X.T @ c

    def grad_lipschitz(self, data):
        return self.link.sup.get(2, INF) * np.einsum("ij,ij->i", data.X, data.X)

    def deriv_bound(self, data, w, k):
        s = self.link.sup.get(k, INF)
        if s == 0.0:
            return 0.0
        w = np.asarray(w)
        if k == 2:
            gram = data.X.T @ (w[:, None] * data.X)
            return s * float(np.linalg.eigvalsh(gram)[-1])
        norms = np.linalg.norm(data.X, axis=1)
        return s * float(w @ norms**k)

    def describe(self):
        return {"kind": "glm", "link": self.name}


def custom_link(name, psi, d1, d2, d3, sup: dict) -> Link:
    """Build a user-defined GLM link; ``sup`` must hold user-supplied derivative bounds."""
    return Link(name=name, psi=psi, d1=d1, d2=d2, d3=d3, sup=dict(sup))


# ---------------------------------------------------------------------------
# regularizers (all separable across coordinates)


def soft_threshold(v, t):
    """Componentwise soft-thresholding; |v| == t maps to 0."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class Regularizer:
    name = "none"
    smooth = True
    prox_capable = True
    c_pi = 0.0
    lambda_pi = 0.0

    def value(self, beta) -> float:
        return 0.0

    def grad(self, beta):
        return np.zeros_like(np.asarray(beta, dtype=float))

    def hess_diag(self, beta):
        return np.zeros_like(np.asarray(beta, dtype=float))

    def third_diag(self, beta):
        return np.zeros_like(np.asarray(beta, dtype=float))

    def prox(self, v, t):
        """argmin_x 0.5 (x - v)^2 + t pi(x) componentwise; ``t`` may be a vector."""
        return np.array(v, dtype=float)

    def argmin(self, d: int):
        return np.zeros(d)

    def deriv_bound(self, k: int) -> float:
        return 0.0

    def describe(self) -> dict:
        return {"kind": self.name}


class NoPenalty(Regularizer):
    name = "none"


class Ridge(Regularizer):
    """pi(beta) = scale * ||beta||^2."""

    name = "ridge"

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("ridge scale must be positive")
        self.scale = float(scale)
        self.c_pi = 2.0 * self.scale

    def value(self, beta):
        return self.scale * float(np.dot(beta, beta))

    def grad(self, beta):
        return 2.0 * self.scale * np.asarray(beta, dtype=float)

    def hess_diag(self, beta):
        return np.full(np.shape(beta), 2.0 * self.scale)

    def prox(self, v, t):
        return np.asarray(v, dtype=float) / (1.0 + 2.0 * self.scale * np.asarray(t))

    def deriv_bound(self, k):
        return 2.0 * self.scale if k == 2 else 0.0

    def describe(self):
        return {"kind": self.name, "scale": self.scale}


class L1(Regularizer):
    name = "l1"
    smooth = False

    def value(self, beta):
        return float(np.sum(np.abs(beta)))

    def grad(self, beta):
        raise ValueError("l1 penalty is not differentiable; use a proximal method")

    def prox(self, v, t):
        return soft_threshold(v, t)


class ElasticNet(Regularizer):
    """pi(beta) = l1_ratio * ||beta||_1 + (1 - l1_ratio) * ||beta||^2."""

    name = "elastic_net"
    smooth = False

    def __init__(self, l1_ratio: float = 0.5):
        if not 0.0 < l1_ratio < 1.0:
            raise ValueError("l1_ratio must lie in (0, 1)")
        self.a = float(l1_ratio)
        self.b = 1.0 - self.a
        self.c_pi = 2.0 * self.b

    def value(self, beta):
        return self.a * float(np.sum(np.abs(beta))) + self.b * float(np.dot(beta, beta))

    def grad(self, beta):
        raise ValueError("elastic net penalty is not differentiable; use a proximal method")

    def hess_diag(self, beta):
        return np.full(np.shape(beta), 2.0 * self.b)

    def prox(self, v, t):
        t = np.asarray(t)
        return soft_threshold(v, self.a * t) / (1.0 + 2.0 * self.b * t)

    def deriv_bound(self, k):
        return 2.0 * self.b if k == 2 else 0.0

    def describe(self):
        return {"kind": self.name, "l1_ratio": self.a}


class PseudoHuber(Regularizer):
    """pi(beta) = sum delta^2 (sqrt(1 + (beta_j/delta)^2) - 1)."""

    name = "pseudo_huber"

    def __init__(self, delta: float = 1.0):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)

    def _u(self, beta):
        return np.asarray(beta, dtype=float) / self.delta

    def value(self, beta):
        u = self._u(beta)
        return float(self.delta**2 * np.sum(np.sqrt(1.0 + u * u) - 1.0))

    def grad(self, beta):
        u = self._u(beta)
        return self.delta * u / np.sqrt(1.0 + u * u)

    def hess_diag(self, beta):
        u = self._u(beta)
        return (1.0 + u * u) ** -1.5

    def third_diag(self, beta):
        u = self._u(beta)
        return -3.0 * u * (1.0 + u * u) ** -2.5 / self.delta

    def prox(self, v, t):
        v = np.asarray(v, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), v.shape)
        x = v / (1.0 + t)
        # x + t pi'(x) = v is strictly increasing in x, root lies between v/(1+t) and v
        lo, hi = np.minimum(x, v), np.maximum(x, v)
        for _ in range(100):
            f = x + t * self.grad(x) - v
            step = f / (1.0 + t * self.hess_diag(x))
            x_new = np.clip(x - step, lo, hi)
            if np.all(np.abs(x_new - x) <= 1e-15 * (1.0 + np.abs(x))):
                return x_new
            x = x_new
        return x

    def deriv_bound(self, k):
        if k == 2:
            return 1.0
        if k == 3:
            return 3.0 * 0.5 * 1.25**-2.5 / self.delta
        if k == 4:
            return 3.0 / self.delta**2
        return INF

    def describe(self):
        return {"kind": self.name, "delta": self.delta}


class PatchedLasso(Regularizer):
    """Lasso with the kink rounded: delta/2 + beta^2/(2 delta) for |beta| <= delta, |beta| beyond.

    The penalty is C^1 and convex; its second derivative jumps at |beta| = delta
    and the curved-region value 1/delta is used there.
    """

    name = "patched_lasso"

    def __init__(self, delta: float):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)

    def value(self, beta):
        a = np.abs(np.asarray(beta, dtype=float))
        inner = a <= self.delta
        return float(np.sum(np.where(inner, self.delta / 2 + a * a / (2 * self.delta), a)))

    def grad(self, beta):
        b = np.asarray(beta, dtype=float)
        return np.where(np.abs(b) <= self.delta, b / self.delta, np.sign(b))

    def hess_diag(self, beta):
        b = np.asarray(beta, dtype=float)
        return np.where(np.abs(b) <= self.delta, 1.0 / self.delta, 0.0)

    def prox(self, v, t):
        v = np.asarray(v, dtype=float)
        t = np.asarray(t, dtype=float)
        inner = np.abs(v) <= self.delta + t
        return np.where(inner, v / (1.0 + t / self.delta), v - t * np.sign(v))

    def deriv_bound(self, k):
        if k == 2:
            return 1.0 / self.delta
        return INF

    def describe(self):
        return {"kind": self.name, "delta": self.delta}


@dataclass(frozen=True)
class Model:
    loss: Loss
    reg: Regularizer = field(default_factory=NoPenalty)

    @property
    def smooth(self) -> bool:
        return self.reg.smooth

    def describe(self) -> dict:
        return {"loss": self.loss.describe(), "penalty": self.reg.describe()}


def make_regularizer(kind: str, scale: float = 1.0, delta: float = 1.0, l1_ratio: float = 0.5):
    kind = kind.lower()
    if kind in ("none", "zero"):
        return NoPenalty()
    if kind == "ridge":
        return Ridge(scale)
    if kind in ("l1", "lasso"):
        return L1()
    if kind == "elastic_net":
        return ElasticNet(l1_ratio)
    if kind == "pseudo_huber":
        return PseudoHuber(delta)
    if kind == "patched_lasso":
        return PatchedLasso(delta)
    raise ValueError(f"unknown penalty {kind!r}")


# ---------------------------------------------------------------------------
# objective evaluation


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    reg_smooth: bool


def _check_beta(data, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.d,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({data.d},)")
    return beta


def evaluate(model: Model, data: Dataset, weights, beta, lam: float) -> ObjectiveEval:
    """Value, gradient and Hessian of sum_i w_i l(z_i, beta) + lam * pi(beta).

    For a non-smooth penalty the gradient and Hessian cover the loss only and
    ``reg_smooth`` is False.
    """
    if not np.isfinite(lam):
        raise ValueError("lambda = inf has no objective; fit_erm handles it directly")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    beta = _check_beta(data, beta)
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,):
        raise ValueError("weights must have one entry per point")
    loss, reg = model.loss, model.reg
    value = loss.value(data, beta, w) + (lam * reg.value(beta) if lam > 0 else 0.0)
    g = loss.grad(data, beta, w)
    H = loss.hessian(data, beta, w)
    if reg.smooth and lam > 0:
        g = g + lam * reg.grad(beta)
        H = H + lam * np.diag(reg.hess_diag(beta))
    return ObjectiveEval(float(value), g, H, reg.smooth)


def objective_value(model: Model, data: Dataset, weights, beta, lam: float) -> float:
    v = model.loss.value(data, beta, weights)
    if lam > 0:
        v += lam * model.reg.value(beta)
    return float(v)


# ---------------------------------------------------------------------------
# constants


SAFETY = 0.99


@dataclass
class ConstantSet:
    c_ell: float
    c_pi: float
    lambda_pi: float
    c_m: float
    L: np.ndarray
    C_ell: dict
    C_pi: dict
    grad_reg_at_est0: Optional[float]
    c_lambda: dict
    c_global: float
    empirical: bool
    q: int = 2

    def c_at(self, lam: float) -> float:
        """Curvature c_{lam,lam} at a grid value (falls back to the split form off-grid)."""
        if lam in self.c_lambda:
            return self.c_lambda[lam]
        return self.c_ell + (lam * self.c_pi if lam >= self.lambda_pi else 0.0)

    def to_dict(self) -> dict:
        return {
            "c_ell": self.c_ell,
            "c_pi": self.c_pi,
            "lambda_pi": self.lambda_pi,
            "c_m": self.c_m,
            "c_m_source": "empirical (0.99 x min Hessian eigenvalue)" if self.empirical else "analytic",
            "L_max": float(np.max(self.L)) if len(self.L) else 0.0,
            "C_ell": {str(k): v for k, v in sorted(self.C_ell.items())},
            "C_pi": {str(k): v for k, v in sorted(self.C_pi.items())},
            "grad_reg_at_est0": self.grad_reg_at_est0,
            "c_lambda": [[lam, c] for lam, c in sorted(self.c_lambda.items())],
            "c_global": self.c_global,
            "q": self.q,
        }


def loo_max_deriv_bound(loss: Loss, data: Dataset, k: int) -> float:
    """max_i of the order-k derivative bound of the leave-one-out loss l(P_{-i}, .)."""
    n = data.n
    if isinstance(loss, QuadraticLoss):
        return loss.deriv_bound(data, data.full_weights(), k) * (n - 1) / n
    if k == 2:
        return max(loss.deriv_bound(data, data.holdout_weights([i]), k) for i in range(n))
    s = loss.link.sup.get(k, INF) if isinstance(loss, GLMLoss) else INF
    if s == 0.0:
        return 0.0
    norms = np.linalg.norm(data.X, axis=1) ** k
    return s * float((norms.sum() - norms.min()) / n)


def analytic_constants(model: Model, data: Dataset, lambda_grid, fits=None,
                       loo_estimators=None, cfg=None) -> ConstantSet:
    """Curvature and smoothness constants valid over ``lambda_grid``.

    Parameters
    ----------
    model, data : the instance.
    lambda_grid : sequence of finite nonnegative floats.
    fits : optional list of FitResult aligned with ``lambda_grid``; computed when absent.
    loo_estimators : optional list (aligned with the grid) of (n, d) arrays of
        leave-one-out minimizers. When given, curvature is also checked at these
        points so that gradient growth holds along the whole segment endpoints.
    cfg : SolverConfig for any fits computed here.

    Returns
    -------
    ConstantSet
        For quadratic losses the curvature constants are exact. Otherwise c_ell and
        c_lambda are 0.99 times the smallest Hessian eigenvalue of the leave-one-out
        objectives found at the supplied points.
    """
    from . import solver

    grid = [float(l) for l in lambda_grid]
    if not grid or any((not np.isfinite(l)) or l < 0 for l in grid):
        raise ValueError("lambda grid must be nonempty, finite and nonnegative")
    loss, reg = model.loss, model.reg
    n = data.n
    if fits is None:
        fits = solver.fit_path(model, data, grid, cfg)
    L = loss.grad_lipschitz(data)
    C_ell = {k: loo_max_deriv_bound(loss, data, k) for k in (2, 3, 4)}
    C_pi = {k: reg.deriv_bound(k) for k in (2, 3, 4)}
    c_pi, lambda_pi = reg.c_pi, reg.lambda_pi
    if isinstance(loss, QuadraticLoss):
        c_ell = (n - 1) / n * float(np.linalg.eigvalsh(loss._Q(data.d))[0])
        c_lambda = {}
        for lam, fit in zip(grid, fits):
            extra = 0.0
            if reg.smooth and lam > 0:
                extra = lam * float(np.min(reg.hess_diag(fit.beta)))
            elif lam > 0:
                extra = lam * c_pi
            c_lambda[lam] = c_ell + extra
        empirical = False
    else:
        loss_min = INF
        c_lambda = {}
        for k, (lam, fit) in enumerate(zip(grid, fits)):
            lam_min = INF
            for i in range(n):
                w = data.holdout_weights([i])
                cands = [fit.beta] if loo_estimators is None else [fit.beta, loo_estimators[k][i]]
                for b in cands:
                    Hl = loss.hessian(data, b, w)
                    e_loss = float(np.linalg.eigvalsh(Hl)[0])
                    loss_min = min(loss_min, e_loss)
                    if reg.smooth and lam > 0:
                        e_obj = float(np.linalg.eigvalsh(Hl + lam * np.diag(reg.hess_diag(b)))[0])
                    else:
                        e_obj = e_loss + (lam * c_pi if lam > 0 else 0.0)
                    lam_min = min(lam_min, e_obj)
            c_lambda[lam] = max(SAFETY * lam_min, 0.0)
        c_ell = max(SAFETY * loss_min, 0.0)
        empirical = True
    c_m = min(c_lambda.values())
    # global strong convexity of every leave-one-out objective over the grid (for moment bounds)
    lmin = min(grid)
    c_glob_reg = lmin * c_pi if lmin >= lambda_pi else 0.0
    c_glob_loss = c_ell if isinstance(loss, QuadraticLoss) else 0.0
    grad_reg0 = None
    if reg.smooth and not isinstance(reg, NoPenalty):
        try:
            f0 = solver.fit_erm(model, data, data.full_weights(), 0.0, cfg)
            if f0.converged:
                grad_reg0 = float(np.linalg.norm(reg.grad(f0.beta)))
        except (ValueError, np.linalg.LinAlgError):
            grad_reg0 = None
    return ConstantSet(
        c_ell=float(c_ell), c_pi=float(c_pi), lambda_pi=float(lambda_pi), c_m=float(c_m),
        L=L, C_ell=C_ell, C_pi=C_pi, grad_reg_at_est0=grad_reg0, c_lambda=c_lambda,
        c_global=float(c_glob_loss + c_glob_reg), empirical=empirical,
    )
