import json
import math
import shutil
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughweyl.cli import main
from roughweyl.config import SweepConfig, load_sweep_config
from roughweyl.errors import ConfigError, FitError
from roughweyl.potentials import HolderClass, PotentialSpec
from roughweyl.report import emit_report
from roughweyl.sweep import (CSV_COLUMNS, ExploratoryWarning, SweepRecord, fit_exponent,
                             predicted_exponent, run_sweep, sweep_report, theorem_violations)

from conftest import CONFIGS, ROOT

GOLDEN = ROOT / "tests" / "golden"
HBARS = [0.2, 0.15, 0.1, 0.08, 0.06, 0.05]


def _records(hbars, values):
    return [SweepRecord(h, 0.0, 0.0, 0.0, 0.0, v, "test") for h, v in zip(hbars, values)]


def _quiet_exponent(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        return predicted_exponent(*args, **kw)


# -- predicted exponents ------------------------------------------------------

def test_exponent_examples():
    assert predicted_exponent(0, HolderClass(1, 0.5), 3, "main2") == pytest.approx(1 - 3)
    assert predicted_exponent(0, HolderClass(1, 0.0), 3, "main2") == pytest.approx(2 / 3 - 3)
    assert predicted_exponent(1, HolderClass(2, 1.0), 4, "main3") == pytest.approx(2 - 4)
    assert predicted_exponent(0.5, HolderClass(2, 1.0), 4, "main") == pytest.approx(1.5 - 4)


def test_violations_warn():
    assert theorem_violations(0, HolderClass(1, 1.0), 3, "main") == []
    assert theorem_violations(0, HolderClass(1, 1.0), 2, "main")
    with pytest.warns(ExploratoryWarning):
        predicted_exponent(0, HolderClass(1, 1.0), 2, "main")


@given(st.floats(0, 1), st.integers(3, 6))
def test_main2_range(mu, d):
    kappa = _quiet_exponent(0, HolderClass(1, mu), d, "main2") + d
    assert 2 / 3 - 1e-12 <= kappa <= 1 + 1e-12


@given(st.integers(3, 6))
def test_main_matches_main2_at_half(d):
    hc = HolderClass(1, 0.5)
    assert _quiet_exponent(0, hc, d, "main") == pytest.approx(_quiet_exponent(0, hc, d, "main2"))


@given(st.floats(0.01, 1), st.floats(0, 1))
def test_main3_capped_by_gamma(gamma, mu):
    kappa = _quiet_exponent(gamma, HolderClass(2, mu), 4, "main3") + 4
    assert kappa <= 1 + gamma + 1e-12


# -- fitting ------------------------------------------------------------------

def test_fit_exact_power():
    rep = fit_exponent(_records(HBARS, [h ** 2 for h in HBARS]), predicted=2.0)
    assert rep.slope == pytest.approx(2.0, abs=1e-10)
    assert rep.half_width == pytest.approx(0.0, abs=1e-8)
    assert rep.verdict == "PASS"


def test_fit_noisy_power():
    rng = np.random.default_rng(0)
    h = np.geomspace(0.2, 0.02, 10)
    vals = 3 * h ** 0.66 * np.exp(rng.normal(0, 0.05, h.size))
    rep = fit_exponent(_records(h, vals), predicted=0.66)
    assert 0.5 <= rep.slope <= 0.8
    assert rep.half_width > 0


def test_fit_needs_points():
    with pytest.raises(FitError):
        fit_exponent(_records(HBARS[:3], [1.0, 0.5, 0.2]))
    with pytest.raises(FitError):
        fit_exponent(_records(HBARS, [1.0, 0.0, 0.0, 0.0, 0.5, 0.0]))


def test_fit_zeros_excluded():
    vals = [h ** 1.5 for h in HBARS]
    vals[2] = 0.0
    rep = fit_exponent(_records(HBARS, vals))
    assert rep.points == 5 and rep.excluded == [HBARS[2]]
    assert rep.slope == pytest.approx(1.5)


def test_fit_below_prediction_fails():
    rep = fit_exponent(_records(HBARS, [h ** 0.5 for h in HBARS]), predicted=1.0, tolerance=0.35)
    assert rep.verdict == "FAIL"


# -- sweeps -------------------------------------------------------------------

def _oscillator_cfg(d, hbars, gamma=0.0):
    return SweepConfig(name="osc", strategy="oscillator", gamma=gamma, mode="capped", hbars=hbars, dim=d)


def test_oscillator_d1_residual_bounded():
    cfg = _oscillator_cfg(1, list(np.geomspace(0.2, 0.01, 8)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        recs = run_sweep(cfg, workers=1)
    assert all(r.residual <= 1.0 for r in recs)
    assert {r.method for r in recs} == {"oscillator-lattice"}


def test_oscillator_d2_slope():
    cfg = _oscillator_cfg(2, list(np.geomspace(0.2, 0.02, 8)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        recs = run_sweep(cfg)
        rep, bad = sweep_report(cfg, recs)
    assert bad
    assert rep.slope == pytest.approx(-1.0, abs=0.3)


def test_positive_potential_exact_regime():
    spec = PotentialSpec(1, 1.0, 0.5, 0.25, HolderClass(1, 1.0), box=4.0, name="positive")
    cfg = SweepConfig(name="pos", strategy="grid", gamma=0, mode="capped", hbars=HBARS, spec=spec,
                      framing=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        recs = run_sweep(cfg)
        rep, _ = sweep_report(cfg, recs)
    assert [(r.trace, r.weyl, r.residual) for r in recs] == [(0.0, 0.0, 0.0)] * len(HBARS)
    assert rep.status == "exact regime" and rep.verdict == "PASS"


def test_grid_budget_skips():
    spec = PotentialSpec(2, 1.0, -1.0, 0.25, HolderClass(1, 1.0), box=4.0)
    cfg = SweepConfig(name="tiny", strategy="grid", gamma=0, mode="capped", hbars=HBARS, spec=spec,
                      framing=False, budget=100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        recs = run_sweep(cfg)
    assert all(r.status.startswith("skipped") for r in recs)
    assert all(math.isnan(r.trace) for r in recs)


def test_framed_traces_bracket():
    cfg = load_sweep_config(CONFIGS / "separable_mu1.ini")
    cfg.hbars = cfg.hbars[:6]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        recs = run_sweep(cfg)
    for r in recs:
        assert r.trace_plus <= r.trace <= r.trace_minus
        assert r.band >= r.residual - 1e-9 * r.trace


# -- reports ------------------------------------------------------------------

def test_emit_empty(tmp_path):
    summary = emit_report([], None, tmp_path / "a.csv", tmp_path / "a.json")
    assert summary["status"] == "empty"
    assert (tmp_path / "a.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads((tmp_path / "a.json").read_text())["status"] == "empty"


def test_emit_rows(tmp_path):
    recs = _records(HBARS, [h ** 2 for h in HBARS])
    emit_report(recs, fit_exponent(recs), tmp_path / "a.csv", None)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].split(",")[:8] == ["hbar", "epsilon", "delta", "trace", "weyl", "residual", "method",
                                       "seconds"]
    assert len(lines) == len(recs) + 1


def _run_golden_config(tmp_path):
    shutil.copy(CONFIGS / "oscillator_d2.ini", tmp_path / "osc.ini")
    code = main(["sweep", str(tmp_path / "osc.ini")])
    csv = (tmp_path / "out" / "oscillator_d2.csv").read_bytes()
    js = (tmp_path / "out" / "oscillator_d2.json").read_bytes()
    return code, csv, js


def test_golden_oscillator(tmp_path):
    code, csv, js = _run_golden_config(tmp_path)
    assert code == 0
    assert csv == (GOLDEN / "oscillator_d2.csv").read_bytes()
    got = json.loads(js)
    got.pop("environment")
    assert got == json.loads((GOLDEN / "oscillator_d2.json").read_text())


def test_rerun_byte_identical(tmp_path):
    runs = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        runs.append(_run_golden_config(tmp_path / sub)[1:])
    assert runs[0] == runs[1]


# -- command line -------------------------------------------------------------

def test_cli_oscillator_pass(tmp_path, capsys):
    code = main(["oscillator", "--d", "2", "--hbar-min", "0.02", "--hbar-max", "0.2",
                 "--csv", str(tmp_path / "o.csv"), "--json", str(tmp_path / "o.json")])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert json.loads((tmp_path / "o.json").read_text())["report"]["verdict"] == "PASS"


@pytest.mark.parametrize("argv", [
    ["oscillator", "--d", "0"],
    ["oscillator", "--d", "2", "--hbar-min", "0.3", "--hbar-max", "0.2"],
    ["oscillator", "--d", "2", "--gamma", "2"],
    ["oscillator", "--d", "2", "--points", "3"],
    ["oscillator"],
    ["sweep", "/nonexistent.ini"],
    ["frobnicate"],
])
def test_cli_bad_config(argv, capsys):
    assert main(argv) == 3


def _write(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("text", [
    "[sweep]\nstrategy = grid\n",
    "[sweep]\nstrategy = magic\n[potential]\ndim = 1\n",
    "[sweep]\nstrategy = oscillator\nhbars = 0.1,0.2,0.05,0.04,0.03,0.02\n",
    "[sweep]\nstrategy = oscillator\nkernel = 3\n",
    "[sweep]\nstrategy = grid\n[potential]\nbumps = 0.1:1\n",
    "[sweep]\nstrategy = grid\n[potential]\nnu = -1\n",
    "[sweep]\nstrategy = grid\ntiming = maybe\n[potential]\ndim = 1\n",
    "no section header\n",
])
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_sweep_config(_write(tmp_path, text))
    assert main(["sweep", _write(tmp_path, text)]) == 3


def test_cli_failing_sweep_exit_2(tmp_path):
    shutil.copy(CONFIGS / "oscillator_d2.ini", tmp_path / "osc.ini")
    text = (tmp_path / "osc.ini").read_text().replace("seed = 0", "seed = 0\ntolerance = -1.0")
    (tmp_path / "osc.ini").write_text(text)
    assert main(["sweep", str(tmp_path / "osc.ini")]) == 2


def test_cli_missing_sections(tmp_path):
    for verb in ("cover", "bracketing", "mollify-check"):
        assert main([verb, _write(tmp_path, "[potential]\ndim = 1\n")]) == 3
