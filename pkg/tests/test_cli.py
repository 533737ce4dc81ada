import json
import math

import pytest

from approxcv.cli import ConfigError, load_config, loglog_slope, main, resolve_grid, GridOptions


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


RIDGE = {
    "instance": {"kind": "synthetic", "family": "logistic", "n": 60, "d": 3, "seed": 1},
    "model": {"loss": "logistic", "penalty": "ridge"},
    "lambda_grid": {"min": 0.01, "max": 1.0, "count": 4},
    "methods": ["acv", "acv_ij"],
}


def test_sweep_writes_csv_and_certificate(tmp_path):
    cfg = _write(tmp_path, RIDGE)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().strip().split("\n")
    header = rows[0].split(",")
    assert header[:4] == ["lambda", "cv", "acv", "acv_ij"]
    assert len(rows) == 5
    for line in rows[1:]:
        rec = dict(zip(header, line.split(",")))
        for m in ("acv", "acv_ij"):
            ok = float(rec[f"gap_{m}"]) <= float(rec[f"bound_{m}"]) + 1e-12
            assert (rec[f"pass_{m}"] == "true") == ok
    assert json.loads((out / "certificate.json").read_text())["passed"] is True


def test_sweep_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, RIDGE)
    main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "3"])
    for f in ("sweep.csv", "certificate.json", "certificate.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_flag_changes_data(tmp_path):
    cfg = dict(RIDGE, instance=dict(RIDGE["instance"], seed=None))
    p = _write(tmp_path, cfg)
    main(["fit", "--config", str(p), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["fit", "--config", str(p), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "fits.csv").read_bytes() != (tmp_path / "b" / "fits.csv").read_bytes()


def test_cv_command(tmp_path):
    cfg = _write(tmp_path, RIDGE)
    assert main(["cv", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "cv.csv").read_text().startswith("lambda,cv\n")


def test_invalid_config_reports_field(tmp_path, capsys):
    bad = dict(RIDGE, model={"loss": "hinge"})
    assert main(["sweep", "--config", str(_write(tmp_path, bad)), "--out", str(tmp_path)]) == 2
    assert "model.loss" in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{\n  "instance": ,\n}')
    assert main(["fit", "--config", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_method_rejected(tmp_path):
    with pytest.raises(ConfigError, match="methods"):
        load_config(_write(tmp_path, dict(RIDGE, methods=["loo_magic"])))


def test_explicit_grid_sorted_and_named():
    assert resolve_grid(GridOptions(values=[1.0, "zbar", 0.0]), {"zbar": 0.5}) == [0.0, 0.5, 1.0]
    with pytest.raises(ConfigError):
        resolve_grid(GridOptions(values=[1.0, 1.0]), {})
    with pytest.raises(ConfigError):
        resolve_grid(GridOptions(values=["delta"]), {})


def test_default_grid():
    g = resolve_grid(GridOptions(), {})
    assert len(g) == 30 and g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1e2)


def test_slope_sentinel():
    assert loglog_slope([1, 2, 4], [1.0, 0.0, 1.0]) == -math.inf
    assert loglog_slope([1, 2, 4], [1e-16, 1e-17, 1e-18]) == -math.inf
    assert loglog_slope([1, 2, 4], [1.0, 0.25, 0.0625]) == pytest.approx(-2.0)


def test_quadratic_scaling_reports_sentinel(tmp_path, capsys):
    cfg = {"instance": {"kind": "synthetic", "family": "quadratic", "n": 20, "d": 1, "seed": 0},
           "model": {"loss": "quadratic", "penalty": "ridge"},
           "lambda_grid": {"min": 0.01, "max": 1.0, "count": 3},
           "methods": ["acv"], "n_list": [20, 40, 80]}
    assert main(["scaling", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "slopes.csv").read_text()
    assert text.split("\n")[1].startswith("acv,-inf,")


def test_counterexample_command_exit_codes(capsys):
    assert main(["counterexample", "fig1b", "--n", "25"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["local_minima"] >= 2


def test_prop7_sweep_config(tmp_path):
    cfg = {"instance": {"kind": "counterexample", "case": "prop7", "n": 16},
           "lambda_grid": {"values": [0.0, "zbar"]}, "methods": ["proxacv"]}
    out = tmp_path / "o"
    main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(out)])
    rows = (out / "sweep.csv").read_text().strip().split("\n")[1:]
    assert len(rows) == 2 and float(rows[0].split(",")[0]) == 0.0
