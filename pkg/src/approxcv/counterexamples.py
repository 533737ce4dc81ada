"""Adversarial one-dimensional datasets and two small multimodality instances.

Each builder returns the dataset, the model and the closed-form reference values
stated for the instance; ``run_case`` evaluates the generic pipeline on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acv import acv, acv_ij, acv_support_restricted
from .cv import exact_cv
from .model import L1, Dataset, Model, PatchedLasso, QuadraticLoss, Ridge
from .proxacv import proxacv
from .solver import fit_erm, fit_path

CASES = ("prop5", "prop6", "prop7", "fig1a", "fig1b")
FIG_GRID = np.logspace(-3, 3, 200)


@dataclass
class Instance:
    case: str
    data: Dataset
    model: Model
    reference: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)


def sign_atoms() -> tuple:
    """Roots a > b > 0 of a^2 + b^2 = 2, a + b = 2 sqrt(2/pi)."""
    s = 2.0 * math.sqrt(2.0 / math.pi)
    prod = (s * s - 2.0) / 2.0  # ab from (a+b)^2 = a^2 + b^2 + 2ab
    disc = s * s - 4.0 * prod
    r = math.sqrt(disc)
    return (s + r) / 2.0, (s - r) / 2.0


def moment_matched(n: int, mean, seed: int = 0) -> np.ndarray:
    """n points whose sample mean is ``mean`` and sample covariance (1/n normalization) is I."""
    mean = np.asarray(mean, dtype=float)
    d = mean.size
    if n <= d:
        raise ValueError(f"need n > {d} points to match a {d}-dimensional covariance")
    Z = np.random.default_rng(seed).standard_normal((n, d))
    Z -= Z.mean(axis=0)
    L = np.linalg.cholesky(Z.T @ Z / n)
    Z = np.linalg.solve(L, Z.T).T
    return Z + mean


def _four_atoms(n, centre):
    if n < 4 or n % 4:
        raise ValueError(f"n must be a positive multiple of 4, got {n}")
    a, b = sign_atoms()
    vals = np.repeat([centre - a, centre - b, centre + b, centre + a], n // 4)
    return vals, a, b


def build(case: str, n: int, delta: float = 0.05) -> Instance:
    """Construct one of ``CASES`` at sample size ``n``.

    Parameters
    ----------
    case : "prop5", "prop6", "prop7", "fig1a" or "fig1b".
    n : sample size.
    delta : curvature width of the patched Lasso (prop6 only).

    Returns
    -------
    Instance
    """
    case = case.lower()
    if case == "prop5":
        zbar = math.sqrt(2.0 / n)
        z, a, b = _four_atoms(n, zbar)
        inst = Instance(case, Dataset(z), Model(QuadraticLoss(), L1()))
        inst.reference = {"gap": reference_gap(case, n), "gap_exact": prop5_exact_gap(n),
                          "a": a, "b": b, "zbar": zbar}
        inst.lambdas = {"zbar": zbar}
        return inst
    if case == "prop6":
        if delta <= 0:
            raise ValueError("delta must be positive")
        zbar = 2.0 * delta
        z, a, b = _four_atoms(n, zbar)
        inst = Instance(case, Dataset(z), Model(QuadraticLoss(), PatchedLasso(delta)))
        inst.reference = {"gap": reference_gap(case, n, delta), "leading_order": True,
                          "scaled_limit": math.sqrt(2.0 / math.pi), "a": a, "b": b, "zbar": zbar}
        inst.lambdas = {"delta": delta}
        return inst
    if case == "prop7":
        if n < 4 or n % 2:
            raise ValueError(f"n must be even and >= 4, got {n}")
        a = math.sqrt(2.0)
        b = 2.0 * math.sqrt(2.0 / n) - math.sqrt(2.0)
        z = np.repeat([a, b], n // 2)
        zbar = math.sqrt(2.0 / n)
        inst = Instance(case, Dataset(z), Model(QuadraticLoss(), L1()))
        inst.reference = {"gap": reference_gap(case, n), "beta_gap": math.sqrt(2.0 / n),
                          "a": a, "b": b, "zbar": zbar}
        inst.lambdas = {"zero": 0.0, "zbar": zbar}
        return inst
    if case == "fig1a":
        mean = np.array([1.3893, 1.5]) / math.sqrt(n)
        model = Model(QuadraticLoss(metric=np.diag([1.0, 40.0]), scale=1.0), Ridge(1.0))
        inst = Instance(case, Dataset(moment_matched(n, mean)), model)
        inst.reference = {"min_local_minima": 2, "mean": mean.tolist()}
        return inst
    if case == "fig1b":
        mean = np.array([math.sqrt(1 / 8), math.sqrt(9 / 8), 2.0]) / math.sqrt(n)
        inst = Instance(case, Dataset(moment_matched(n, mean)), Model(QuadraticLoss(), L1()))
        inst.reference = {"min_local_minima": 2, "mean": mean.tolist()}
        return inst
    raise ValueError(f"unknown case {case!r}; choose from {CASES}")


def reference_gap(case: str, n: int, delta: float = 0.05) -> float:
    """Closed-form values as stated for each instance.

    prop5: ACV-IJ(zbar) - CV(zbar) = n/(4(n-1)^2) (1 - 4/sqrt(n pi) + 2/n).
    prop6: leading term delta sqrt(2/pi)/n of ACV-IJ(delta) - CV(delta).
    prop7: ProxACV(0) - ProxACV(zbar) = 5/(2 n^2).
    """
    case = case.lower()
    if case == "prop5":
        return n / (4 * (n - 1) ** 2) * (1 - 4 / math.sqrt(n * math.pi) + 2 / n)
    if case == "prop6":
        return delta * math.sqrt(2 / math.pi) / n
    if case == "prop7":
        return 5 / (2 * n**2)
    raise ValueError(f"no reference gap for {case!r}")


def prop5_exact_gap(n: int) -> float:
    """Exact support-restricted ACV-IJ minus CV at lambda = zbar on the four-atom data.

    At lambda = zbar the full fit is 0, so every IJ estimator is 0, while the
    leave-one-out fit for point i is max(-z_i, 0)/(n-1). Hence the gap is
    -(2n-1)/(2(n-1)^2) * mean(z^2 1{z < 0}).
    """
    z, _, _ = _four_atoms(n, math.sqrt(2.0 / n))
    neg = np.mean(np.where(z < 0, z * z, 0.0))
    return float(-(2 * n - 1) / (2 * (n - 1) ** 2) * neg)


def count_local_minima(values) -> int:
    """Number of interior strict local minima of a sequence."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return 0
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))


def curve(inst: Instance, grid=FIG_GRID, method: str = "acv") -> np.ndarray:
    """Approximate-CV curve of an instance on a lambda grid."""
    fits = fit_path(inst.model, inst.data, grid)
    out = []
    for lam, fit in zip(grid, fits):
        if method == "acv":
            out.append(acv(inst.model, inst.data, lam, fit).value)
        elif method == "proxacv":
            out.append(proxacv(inst.model, inst.data, lam, fit).value)
        elif method == "cv":
            out.append(exact_cv(inst.model, inst.data, lam, fit=fit).value)
        else:
            raise ValueError(f"unknown curve method {method!r}")
    return np.array(out)


def _pair(model, data, lam):
    fit = fit_erm(model, data, data.full_weights(), lam)
    return fit, exact_cv(model, data, lam, fit=fit)


def run_case(case: str, n: int, delta: float = 0.05) -> dict:
    """Evaluate the generic pipeline on an instance and compare with its reference values."""
    inst = build(case, n, delta)
    m, data = inst.model, inst.data
    out = {"case": inst.case, "n": n, "reference": dict(inst.reference)}
    if inst.case == "prop5":
        zbar = inst.lambdas["zbar"]
        fit, cv = _pair(m, data, zbar)
        ij = acv_support_restricted(m, data, zbar, fit, ij=True)
        gap = ij.value - cv.value
        out.update(pipeline_gap=gap, acv_ij_at_zbar=ij.value,
                   abs_diff=abs(gap - inst.reference["gap"]),
                   abs_diff_exact=abs(gap - inst.reference["gap_exact"]))
        grid = np.union1d(np.logspace(-3, 1, 81), [zbar])
        fits = fit_path(m, data, grid)
        vals = [acv_support_restricted(m, data, l, f, ij=True).value for l, f in zip(grid, fits)]
        k = int(np.argmin(vals))
        best = np.flatnonzero(np.asarray(vals) == vals[k])
        out.update(argmin_lambda=float(grid[best[0]]), zbar_is_argmin=bool(vals[np.searchsorted(grid, zbar)] == min(vals)))
        return out
    if inst.case == "prop6":
        fit, cv = _pair(m, data, delta)
        ij = acv_ij(m, data, delta, fit)
        gap = ij.value - cv.value
        scaled = n * gap / delta
        out.update(pipeline_gap=gap, scaled=scaled,
                   scaled_error=abs(scaled - inst.reference["scaled_limit"]),
                   abs_diff=abs(gap - inst.reference["gap"]))
        return out
    if inst.case == "prop7":
        zbar = inst.lambdas["zbar"]
        f0 = fit_erm(m, data, data.full_weights(), 0.0)
        fz = fit_erm(m, data, data.full_weights(), zbar)
        p0 = proxacv(m, data, 0.0, f0).value
        pz = proxacv(m, data, zbar, fz).value
        cv0 = exact_cv(m, data, 0.0, fit=f0).value
        cvz = exact_cv(m, data, zbar, fit=fz).value
        gap = p0 - pz
        bgap = float(f0.beta[0] - fz.beta[0])
        out.update(pipeline_gap=gap, abs_diff=abs(gap - inst.reference["gap"]),
                   beta_gap=bgap, beta_abs_diff=abs(bgap - inst.reference["beta_gap"]),
                   cv_gap=cv0 - cvz)
        return out
    method = "acv" if inst.case == "fig1a" else "proxacv"
    vals = curve(inst, FIG_GRID, method)
    mins = np.flatnonzero((vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:])) + 1
    out.update(method=method, local_minima=count_local_minima(vals),
               minima_lambdas=[float(FIG_GRID[k]) for k in mins])
    return out
