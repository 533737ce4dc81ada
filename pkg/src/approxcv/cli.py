"""Command-line front end: fits, CV curves, sweeps, scaling studies, certificates, counterexamples.

Usage: approxcv {fit,cv,sweep,scaling,certify,counterexample} --config cfg.json --out DIR
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import counterexamples as cx
from .bounds import CERT_METHODS, certify, evaluate_methods, fmt
from .cv import exact_cv, make_folds
from .model import Dataset, GLMLoss, Model, QuadraticLoss, make_regularizer
from .solver import SolverConfig, fit_path

METHOD_ORDER = ["acv", "acv_ij", "acv_p3", "proxacv", "proxacv_ij", "acv_sr", "acv_ij_sr"]


# ---------------------------------------------------------------------------
# configuration


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticInstance(_Strict):
    kind: Literal["synthetic"]
    family: Literal["logistic", "quadratic"] = "logistic"
    n: int = Field(200, ge=2)
    d: int = Field(5, ge=1)
    nonzero: Optional[int] = None
    intercept: bool = False
    seed: Optional[int] = None


class CounterexampleInstance(_Strict):
    kind: Literal["counterexample"]
    case: Literal["prop5", "prop6", "prop7", "fig1a", "fig1b"]
    n: int = Field(..., ge=2)
    delta: float = Field(0.05, gt=0)


class CsvInstance(_Strict):
    kind: Literal["csv"]
    path: str
    labeled: bool = False


class ModelOptions(_Strict):
    loss: Literal["quadratic", "logistic", "exponential"] = "logistic"
    loss_scale: float = Field(0.5, gt=0)
    metric: Optional[List[List[float]]] = None
    penalty: Literal["none", "ridge", "l1", "elastic_net", "pseudo_huber", "patched_lasso"] = "ridge"
    penalty_scale: float = Field(1.0, gt=0)
    delta: float = Field(1.0, gt=0)
    l1_ratio: float = Field(0.5, gt=0, lt=1)


class GridOptions(_Strict):
    min: float = Field(1e-4, gt=0)
    max: float = Field(1e2, gt=0)
    count: int = Field(30, ge=1)
    values: Optional[List[Union[float, str]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.values is None and self.max < self.min:
            raise ValueError("grid max must be >= min")
        if self.values is not None and len(self.values) == 0:
            raise ValueError("explicit grid must be nonempty")
        return self


class FoldOptions(_Strict):
    kind: Literal["loo", "kfold", "lpo"] = "loo"
    k: Optional[int] = None
    seed: Optional[int] = None


class SolverOptions(_Strict):
    tol_fit: float = Field(1e-10, gt=0)
    max_iter: int = Field(200, ge=1)
    inner_tol: float = Field(1e-12, gt=0)
    inner_max_iter: int = Field(10000, ge=1)
    warm_start: bool = True


class ExperimentConfig(_Strict):
    instance: Union[SyntheticInstance, CounterexampleInstance, CsvInstance] = Field(..., discriminator="kind")
    model: Optional[ModelOptions] = None
    lambda_grid: GridOptions = GridOptions()
    methods: Optional[List[str]] = None
    folds: FoldOptions = FoldOptions()
    solver: SolverOptions = SolverOptions()
    n_list: Optional[List[int]] = None
    seed: int = 0

    @field_validator("methods")
    @classmethod
    def _known(cls, v):
        if v is not None:
            bad = [m for m in v if m not in METHOD_ORDER]
            if bad:
                raise ValueError(f"unknown methods {bad}; choose from {METHOD_ORDER}")
        return v


class ConfigError(ValueError):
    pass


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = [f"{path}: invalid configuration"]
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"  field {loc}: {err['msg']}")
        raise ConfigError("\n".join(lines))


# ---------------------------------------------------------------------------
# building instances


def synthetic_logistic(n, d, nonzero=None, intercept=False, seed=0) -> Dataset:
    """Standard-normal design, first ``nonzero`` true coefficients N(0,1), Bernoulli labels.

    With ``intercept`` the last of the d columns is a column of ones.
    """
    rng = np.random.default_rng(seed)
    p = d - 1 if intercept else d
    X = rng.standard_normal((n, p))
    if intercept:
        X = np.hstack([X, np.ones((n, 1))])
    k = d if nonzero is None else nonzero
    beta = np.zeros(d)
    beta[:k] = rng.standard_normal(k)
    prob = 1.0 / (1.0 + np.exp(-X @ beta))
    y = (rng.random(n) < prob).astype(float)
    return Dataset(X, y)


def synthetic_points(n, d, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, d)) + rng.standard_normal(d))


def build_model(opts: ModelOptions) -> Model:
    if opts.loss == "quadratic":
        loss = QuadraticLoss(metric=opts.metric, scale=opts.loss_scale)
    else:
        loss = GLMLoss(opts.loss)
    reg = make_regularizer(opts.penalty, scale=opts.penalty_scale, delta=opts.delta,
                           l1_ratio=opts.l1_ratio)
    return Model(loss, reg)


def build_instance(cfg: ExperimentConfig, n: Optional[int] = None, seed: Optional[int] = None):
    """Return (data, model, named lambdas, descriptor)."""
    inst = cfg.instance
    seed = cfg.seed if seed is None else seed
    if inst.kind == "counterexample":
        built = cx.build(inst.case, n or inst.n, inst.delta)
        desc = {"kind": "counterexample", "case": inst.case, "n": n or inst.n, "delta": inst.delta}
        return built.data, built.model, built.lambdas, desc
    if cfg.model is None:
        raise ConfigError("field model: required for synthetic and csv instances")
    model = build_model(cfg.model)
    if inst.kind == "synthetic":
        nn = n or inst.n
        s = inst.seed if inst.seed is not None else seed
        if inst.family == "logistic":
            data = synthetic_logistic(nn, inst.d, inst.nonzero, inst.intercept, s)
        else:
            data = synthetic_points(nn, inst.d, s)
        desc = {"kind": "synthetic", "family": inst.family, "n": nn, "d": inst.d,
                "nonzero": inst.nonzero, "intercept": inst.intercept, "seed": s}
    else:
        data = Dataset.from_csv(inst.path, labeled=inst.labeled)
        desc = {"kind": "csv", "path": inst.path, "n": data.n, "d": data.d}
    desc.update(model.describe())
    return data, model, {}, desc


def resolve_grid(opts: GridOptions, named: dict) -> list:
    if opts.values is None:
        grid = np.logspace(math.log10(opts.min), math.log10(opts.max), opts.count)
        return [float(x) for x in grid]
    out = []
    for v in opts.values:
        if isinstance(v, str):
            if v not in named:
                raise ConfigError(f"field lambda_grid.values: unknown name {v!r}; available {sorted(named)}")
            out.append(float(named[v]))
        else:
            out.append(float(v))
    if any(x < 0 or not math.isfinite(x) for x in out):
        raise ConfigError("field lambda_grid.values: lambdas must be finite and nonnegative")
    out = sorted(out)
    if len(set(out)) != len(out):
        raise ConfigError("field lambda_grid.values: duplicate lambdas")
    return out


def solver_config(opts: SolverOptions) -> SolverConfig:
    return SolverConfig(tol_fit=opts.tol_fit, max_iter=opts.max_iter, inner_tol=opts.inner_tol,
                        inner_max_iter=opts.inner_max_iter, warm_start=opts.warm_start)


def default_methods(model: Model) -> list:
    return ["acv", "acv_ij"] if model.smooth else ["proxacv", "proxacv_ij"]


def fold_scheme(cfg: ExperimentConfig, n: int):
    f = cfg.folds
    return make_folds(n, f.kind, f.k, f.seed)


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_fit(cfg, args) -> int:
    data, model, named, _ = build_instance(cfg)
    grid = resolve_grid(cfg.lambda_grid, named)
    fits = fit_path(model, data, grid, solver_config(cfg.solver), strict=False)
    header = ["lambda", "objective", "residual", "iterations", "converged"] + [f"beta_{j}" for j in range(data.d)]
    rows = [[f.lam, f.objective, f.residual, f.iterations, "true" if f.converged else "false",
             *[float(b) for b in f.beta]] for f in fits]
    write_csv(_out_dir(args) / "fits.csv", header, rows)
    return 0 if all(f.converged for f in fits) else 1


def cmd_cv(cfg, args) -> int:
    data, model, named, _ = build_instance(cfg)
    grid = resolve_grid(cfg.lambda_grid, named)
    scfg = solver_config(cfg.solver)
    fits = fit_path(model, data, grid, scfg)
    scheme = fold_scheme(cfg, data.n)
    rows = [[lam, exact_cv(model, data, lam, scheme, scfg, f, args.jobs).value] for lam, f in zip(grid, fits)]
    write_csv(_out_dir(args) / "cv.csv", ["lambda", "cv"], rows)
    return 0


def _split_methods(cfg, model):
    methods = cfg.methods or default_methods(model)
    cert = [m for m in METHOD_ORDER if m in methods and m in CERT_METHODS]
    extra = [m for m in METHOD_ORDER if m in methods and m not in CERT_METHODS]
    return cert, extra


def _run_certificate(cfg, args):
    data, model, named, desc = build_instance(cfg)
    grid = resolve_grid(cfg.lambda_grid, named)
    cert_m, extra = _split_methods(cfg, model)
    scheme = fold_scheme(cfg, data.n)
    cert = certify(model, data, grid, cert_m, scheme, solver_config(cfg.solver), args.jobs,
                   instance=desc, extra_methods=extra)
    return cert, grid, cert_m, extra


def cmd_certify(cfg, args) -> int:
    cert, *_ = _run_certificate(cfg, args)
    out = _out_dir(args)
    (out / "certificate.json").write_text(cert.to_json() + "\n")
    (out / "certificate.csv").write_text(cert.to_csv())
    print(f"certificate {'PASS' if cert.passed else 'FAIL'}: {out / 'certificate.json'}")
    return 0 if cert.passed else 1


def cmd_sweep(cfg, args) -> int:
    cert, grid, cert_m, extra = _run_certificate(cfg, args)
    methods = cert_m + extra
    curves = cert.curves
    header = ["lambda", "cv"] + methods + [f"gap_{m}" for m in methods]
    header += [f"bound_{m}" for m in cert_m] + [f"pass_{m}" for m in cert_m]
    by = {(r["method"], r["lambda"]): r for r in cert.rows}
    rows = []
    for k, lam in enumerate(grid):
        row = [lam, curves["cv"][k]] + [curves[m][k] for m in methods]
        for m in methods:
            if m in cert_m:
                row.append(by[m, lam]["gap"])
            else:
                row.append(abs(curves[m][k] - curves["cv"][k]))
        row += [by[m, lam]["bound"] for m in cert_m]
        row += ["true" if by[m, lam]["pass"] else "false" for m in cert_m]
        rows.append(row)
    out = _out_dir(args)
    write_csv(out / "sweep.csv", header, rows)
    (out / "certificate.json").write_text(cert.to_json() + "\n")
    (out / "certificate.csv").write_text(cert.to_csv())
    return 0 if cert.passed else 1


ZERO_GAP = 1e-13


def loglog_slope(ns, gaps, floor: float = ZERO_GAP) -> float:
    """Least-squares slope of log(gap) against log(n).

    Gaps at or below ``floor`` are roundoff; any such gap gives the -inf sentinel.
    """
    gaps = np.asarray(gaps, dtype=float)
    if np.any(gaps <= floor):
        return -math.inf
    return float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])


def scaling_study(cfg: ExperimentConfig, n_list, jobs: int = 1) -> dict:
    """Max-over-lambda gaps per method for each n, and the fitted log-log slopes.

    Gaps compare each method with its reference (CV, or ACV for acv_ij, ProxACV for
    proxacv_ij). The same generator seed is used for every n.
    """
    if len(n_list) < 3:
        raise ConfigError("field n_list: need at least 3 sample sizes")
    scfg = solver_config(cfg.solver)
    per_n = []
    methods = None
    for n in n_list:
        data, model, named, _ = build_instance(cfg, n=n)
        grid = resolve_grid(cfg.lambda_grid, named)
        if methods is None:
            methods = [m for m in METHOD_ORDER if m in (cfg.methods or default_methods(model))]
        fits = fit_path(model, data, grid, scfg)
        res = evaluate_methods(model, data, grid, fits, methods, fold_scheme(cfg, n), scfg, jobs)
        gaps = {}
        for m in methods:
            ref = CERT_METHODS.get(m, ("cv",))[0]
            gaps[m] = max(abs(a.value - b.value) for a, b in zip(res[m], res[ref]))
        per_n.append((n, gaps))
    slopes = {m: loglog_slope([n for n, _ in per_n], [g[m] for _, g in per_n]) for m in methods}
    return {"n_list": list(n_list), "methods": methods, "gaps": per_n, "slopes": slopes}


def cmd_scaling(cfg, args) -> int:
    n_list = cfg.n_list or [50, 100, 200, 400]
    res = scaling_study(cfg, n_list, args.jobs)
    out = _out_dir(args)
    rows = [[n, m, g[m]] for n, g in res["gaps"] for m in res["methods"]]
    write_csv(out / "scaling.csv", ["n", "method", "max_gap"], rows)
    srows = []
    for m in res["methods"]:
        s = res["slopes"][m]
        srows.append([m, s, "some gap is zero to roundoff" if s == -math.inf else ""])
    write_csv(out / "slopes.csv", ["method", "slope", "note"], srows)
    for m, s, note in srows:
        print(f"{m}: slope {fmt(s)} {note}".rstrip())
    return 0


COUNTEREXAMPLE_TOL = {"prop5": 1e-10, "prop7": 1e-9, "prop6": 0.1}


def counterexample_report(case: str, n: int, delta: float = 0.05) -> dict:
    res = cx.run_case(case, n, delta)
    if case == "prop5":
        ok = res["abs_diff"] <= COUNTEREXAMPLE_TOL[case] and res["zbar_is_argmin"]
    elif case == "prop7":
        ok = res["abs_diff"] <= 1e-9 and res["beta_abs_diff"] <= 1e-12
    elif case == "prop6":
        ok = res["scaled_error"] <= COUNTEREXAMPLE_TOL[case]
    else:
        ok = res["local_minima"] >= 2
    res["matches_reference"] = bool(ok)
    return res


def cmd_counterexample(cfg, args) -> int:
    if args.case is None:
        if cfg is None or cfg.instance.kind != "counterexample":
            raise ConfigError("counterexample needs a CASE argument or a counterexample config")
        case, n, delta = cfg.instance.case, cfg.instance.n, cfg.instance.delta
    else:
        case = args.case
        n = args.n if args.n is not None else {"prop5": 100, "prop6": 400, "prop7": 16}.get(case, 25)
        delta = args.delta
    rep = counterexample_report(case, n, delta)
    text = json.dumps(rep, indent=2, sort_keys=True, default=float)
    print(text)
    if args.out:
        (_out_dir(args) / f"counterexample_{case}_n{n}.json").write_text(text + "\n")
    return 0 if rep["matches_reference"] else 1


COMMANDS = {
    "fit": cmd_fit,
    "cv": cmd_cv,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
    "certify": cmd_certify,
    "counterexample": cmd_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="approxcv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--out", default="out" if name != "counterexample" else None,
                        help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configuration seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for fold fits")
        if name == "counterexample":
            sp.add_argument("case", nargs="?", choices=cx.CASES)
            sp.add_argument("--n", type=int, default=None)
            sp.add_argument("--delta", type=float, default=0.05)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.model_copy(update={"seed": args.seed})
        elif args.command != "counterexample":
            raise ConfigError("--config is required")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
