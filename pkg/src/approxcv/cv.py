"""Exact cross-validation over leave-one-out, k-fold and leave-pair-out schemes."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Dataset, Model
from .solver import DEFAULT, FitResult, SolverConfig, SolverError, fit_erm


@dataclass(frozen=True)
class FoldScheme:
    kind: str
    folds: tuple

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def is_loo(self) -> bool:
        return self.kind == "loo"


def make_folds(n: int, kind: str = "loo", k: Optional[int] = None, seed: Optional[int] = None) -> FoldScheme:
    """Build held-out index sets (0-based).

    ``kfold`` assigns consecutive blocks of size n // k, the last block taking the
    remainder; with a seed the indices are permuted first.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if kind == "loo":
        return FoldScheme("loo", tuple((i,) for i in range(n)))
    if kind == "kfold":
        if k is None or k < 2 or k > n:
            raise ValueError(f"k-fold needs 2 <= k <= n, got k={k}, n={n}")
        order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
        size = n // k
        folds = []
        for j in range(k):
            stop = n if j == k - 1 else (j + 1) * size
            folds.append(tuple(sorted(int(i) for i in order[j * size:stop])))
        return FoldScheme("kfold", tuple(folds))
    if kind == "lpo":
        return FoldScheme("lpo", tuple(itertools.combinations(range(n), 2)))
    raise ValueError(f"unknown fold scheme {kind!r}")


@dataclass(frozen=True)
class CVResult:
    lam: float
    estimators: np.ndarray
    heldout: np.ndarray
    value: float
    fits: tuple


def _pointwise_losses(model, data, scheme, estimators):
    out = np.empty(scheme.n_folds)
    for f, fold in enumerate(scheme.folds):
        vals = [_loss_at(model, data, j, estimators[f]) for j in fold]
        out[f] = float(np.mean(vals))
    return out


def _loss_at(model, data, j, beta):
    # evaluate a single point without building a new Dataset
    w = np.zeros(data.n)
    w[j] = 1.0
    return model.loss.value(data, beta, w)


def fold_losses(model: Model, data: Dataset, scheme: FoldScheme, estimators) -> np.ndarray:
    if scheme.is_loo():
        # each fold holds one point: loss of point i at estimator i
        vals = np.empty(data.n)
        for i in range(data.n):
            vals[i] = _loss_at(model, data, i, estimators[i])
        return vals
    return _pointwise_losses(model, data, scheme, estimators)


def exact_cv(model: Model, data: Dataset, lam: float, scheme: Optional[FoldScheme] = None,
             cfg: Optional[SolverConfig] = None, fit: Optional[FitResult] = None,
             jobs: int = 1) -> CVResult:
    """Refit with each fold removed and average the held-out losses.

    Parameters
    ----------
    model, data : the instance.
    lam : regularization level.
    scheme : FoldScheme (leave-one-out when omitted).
    cfg : SolverConfig.
    fit : optional full-data fit used as the warm start for every fold.
    jobs : number of worker threads; aggregation is always in fold order.

    Returns
    -------
    CVResult
    """
    cfg = cfg or DEFAULT
    scheme = scheme or make_folds(data.n)
    start = None if fit is None else fit.beta

    def run(f):
        fold = scheme.folds[f]
        res = fit_erm(model, data, data.holdout_weights(fold), lam, cfg, beta0=start)
        if not res.converged:
            raise SolverError(f"fold {f} {fold} did not converge at lambda={lam} "
                              f"(residual {res.residual:.3e})")
        return res

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            fold_fits = list(ex.map(run, range(scheme.n_folds)))
    else:
        fold_fits = [run(f) for f in range(scheme.n_folds)]
    est = np.array([r.beta for r in fold_fits])
    held = fold_losses(model, data, scheme, est)
    return CVResult(lam, est, held, float(np.mean(held)), tuple(fold_fits))
