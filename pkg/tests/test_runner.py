"""Tests for the scenario driver: seed fan-out, verdict evaluation,
deterministic CSV/JSON output."""

import csv
import json
import pickle

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from couplab import parse_config_text, run_scenario
from couplab.errors import ConfigError, InvalidParameter
from couplab.runner import (
    CSV_HEADER,
    DUALITY_GAP_TOL,
    FamilySampler,
    evaluate_verdict,
    run_and_write,
    write_series_csv,
    write_verdict_json,
)
from couplab.series import DistanceSeries

HEAT_TEXT = """
[scenario]
id = "tiny_heat"
kind = "heat"
seeds = [3, 5]

[scenario.params]
n_pairs = 400
total_time = 0.2
dt = 0.01
n_checkpoints = 3

[scenario.cost]
type = "power"
p = 2.0

[scenario.initial.mu]
type = "dirac"
at = 0.0

[scenario.initial.nu]
type = "dirac"
at = 1.0

[verdict]
constant_tol = 1e-10
"""


def _series(coupled, times=None, **kw):
    coupled = np.asarray(coupled, dtype=float)
    if times is None:
        times = np.arange(len(coupled), dtype=float)
    return DistanceSeries("s", 0, times, coupled, **kw)


def _cfg(verdict_lines: str):
    return parse_config_text(HEAT_TEXT.replace("constant_tol = 1e-10",
                                               verdict_lines))


# ---------------------------------------------------------------------------
# FamilySampler
# ---------------------------------------------------------------------------

def test_family_sampler_dirac_and_gaussian():
    rng = np.random.default_rng(0)
    s = FamilySampler({"type": "dirac", "at": 2.5})
    assert_array_equal(s(4, rng), np.full((4, 1), 2.5))
    g = FamilySampler({"type": "gaussian", "mean": 1.0, "var": 4.0})
    x = g(20000, np.random.default_rng(1))
    assert x.shape == (20000, 1)
    assert abs(x.mean() - 1.0) < 0.05
    assert abs(x.std() - 2.0) < 0.05


def test_family_sampler_is_picklable():
    # samplers cross process boundaries when seeds run in worker processes
    s = FamilySampler({"type": "uniform", "low": -1.0, "high": 1.0})
    s2 = pickle.loads(pickle.dumps(s))
    r1 = s(5, np.random.default_rng(9))
    r2 = s2(5, np.random.default_rng(9))
    assert_array_equal(r1, r2)


# ---------------------------------------------------------------------------
# verdict evaluation on synthetic series
# ---------------------------------------------------------------------------

def test_verdict_empty_table_passes():
    cfg = parse_config_text(HEAT_TEXT.replace(
        "\n[verdict]\nconstant_tol = 1e-10\n", ""))
    out = evaluate_verdict(cfg, _series([1.0, 1.0, 1.0]))
    assert out["checks"] == {}
    assert out["pass"] is True
    assert out["scenario_id"] == "tiny_heat"
    assert out["n_runs"] == 2


def test_verdict_numeric_budget():
    cfg = _cfg("budget = 0.05")
    ok = evaluate_verdict(cfg, _series([1.0, 0.98, 1.0]))
    assert ok["monotone"] is True and ok["pass"] is True
    # the 0.02 rise sits inside the 0.05 budget, so no exceedance remains
    assert ok["worst_violation"] == 0.0
    bad = evaluate_verdict(cfg, _series([1.0, 0.9, 1.0]))
    assert bad["monotone"] is False and bad["pass"] is False
    assert_allclose(bad["worst_violation"], 0.05)


def test_verdict_stderr_budget_needs_bands():
    cfg = _cfg('budget = "2stderr"')
    with pytest.raises(ConfigError, match="error bands"):
        evaluate_verdict(cfg, _series([1.0, 0.9]))
    pooled = _series([1.0, 0.99, 1.0], stderr=[0.01, 0.01, 0.01])
    out = evaluate_verdict(cfg, pooled)
    assert out["monotone"] is True
    assert_allclose(out["budget"], [0.02, 0.02, 0.02])


def test_verdict_rate_range():
    t = np.linspace(0.0, 2.0, 9)
    cfg = _cfg("rate_range = [-2.1, -1.9]")
    out = evaluate_verdict(cfg, _series(3.0 * np.exp(-2.0 * t), times=t))
    assert_allclose(out["fitted_rate"], -2.0, rtol=1e-12)
    assert out["checks"]["rate_in_range"] is True
    assert out["r_squared"] > 0.999999
    slow = evaluate_verdict(cfg, _series(3.0 * np.exp(-1.0 * t), times=t))
    assert slow["checks"]["rate_in_range"] is False and slow["pass"] is False


def test_verdict_rate_window_restricts_fit():
    t = np.linspace(0.0, 2.0, 21)
    # rate -1 before t=1, rate -3 after: the window picks out the tail
    vals = np.where(t <= 1.0, np.exp(-t), np.exp(-1.0 - 3.0 * (t - 1.0)))
    cfg = _cfg('rate_range = [-3.1, -2.9]\nrate_window = [1.0, 2.0]')
    out = evaluate_verdict(cfg, _series(vals, times=t))
    assert_allclose(out["fitted_rate"], -3.0, rtol=1e-10)
    assert out["pass"] is True


def test_verdict_exponential_envelope():
    t = np.linspace(0.0, 2.0, 5)
    cfg = _cfg("bound_factor = 1.05\nbound_rate = -1.8")
    inside = _series(2.0 * np.exp(-1.9 * t), times=t)
    out = evaluate_verdict(cfg, inside)
    assert out["checks"]["within_bound"] is True
    assert out["bound_excess"] <= 0.0
    outside = _series(2.0 * np.exp(-1.7 * t), times=t)
    out = evaluate_verdict(cfg, outside)
    assert out["checks"]["within_bound"] is False
    assert out["bound_excess"] > 0.0


def test_verdict_constant_tolerance():
    cfg = _cfg("constant_tol = 1e-6")
    ok = evaluate_verdict(cfg, _series([0.5, 0.5 + 1e-8, 0.5]))
    assert ok["checks"]["constant"] is True
    assert_allclose(ok["constant_drift"], 1e-8)
    bad = evaluate_verdict(cfg, _series([0.5, 0.5001, 0.5]))
    assert bad["checks"]["constant"] is False


def test_verdict_certificates_checked_automatically():
    cfg = _cfg("constant_tol = 1.0")
    run = _series([1.0, 0.9, 0.8])
    run.meta["certificates"] = [{"duality_gap": 1e-12},
                                {"duality_gap": -3e-11}]
    out = evaluate_verdict(cfg, _series([1.0, 0.9, 0.8]), runs=[run])
    assert out["checks"]["duality_gap"] is True
    assert_allclose(out["worst_duality_gap"], 3e-11)
    run.meta["certificates"] = [{"duality_gap": 10 * DUALITY_GAP_TOL}]
    out = evaluate_verdict(cfg, _series([1.0, 0.9, 0.8]), runs=[run])
    assert out["checks"]["duality_gap"] is False
    assert out["pass"] is False


# ---------------------------------------------------------------------------
# running scenarios
# ---------------------------------------------------------------------------

def test_run_scenario_heat_passes_and_pools():
    cfg = parse_config_text(HEAT_TEXT)
    res = run_scenario(cfg)
    assert len(res.runs) == 2
    assert [r.seed for r in res.runs] == [3, 5]
    assert res.pooled.scenario_id == "tiny_heat"
    # dirac initials one apart, quadratic cost: the gap never moves
    assert_allclose(res.pooled.coupled, 0.5, atol=1e-12)
    assert res.verdict["pass"] is True
    assert res.verdict["checks"]["constant"] is True


def test_run_scenario_worker_count_does_not_change_results():
    cfg = parse_config_text(HEAT_TEXT)
    serial = run_scenario(cfg, workers=1)
    parallel = run_scenario(cfg, workers=2)
    for a, b in zip(serial.runs, parallel.runs):
        assert a.seed == b.seed
        assert_array_equal(a.coupled, b.coupled)
        assert_array_equal(a.ci_low, b.ci_low)
    assert_array_equal(serial.pooled.coupled, parallel.pooled.coupled)
    assert serial.verdict == parallel.verdict


def test_duality_scenario_carries_certificates():
    text = """
[scenario]
id = "tiny_lattice"
kind = "discrete_duality"

[scenario.params]
total_time = 0.2
n_checkpoints = 3
p = 1.0
atom_mu = 0.0
atom_nu = 0.5

[scenario.params.grid]
origin = -2.0
spacing = 0.25
points = 17

[verdict]
budget = 1e-9
"""
    res = run_scenario(parse_config_text(text))
    assert res.verdict["checks"]["duality_gap"] is True
    assert res.verdict["worst_duality_gap"] < DUALITY_GAP_TOL
    assert res.verdict["monotone"] is True
    assert len(res.verdict["certificates"]) == 3


def test_lattice_atom_outside_grid_fails_at_runtime():
    text = """
[scenario]
id = "escaped_atom"
kind = "discrete_duality"

[scenario.params]
total_time = 0.2
n_checkpoints = 2
p = 1.0
atom_mu = 50.0
atom_nu = 0.5

[scenario.params.grid]
origin = -2.0
spacing = 0.25
points = 17
"""
    with pytest.raises(InvalidParameter, match="outside the lattice"):
        run_scenario(parse_config_text(text))


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------

def test_write_series_csv_schema(tmp_path):
    runs = [
        DistanceSeries("sc", 1, [0.0, 1.0], [2.0, 1.5],
                       lp=[2.0, 1.4], ci_low=[1.9, 1.4], ci_high=[2.1, 1.6]),
        DistanceSeries("sc", 2, [0.0, 1.0], [2.0, 1.6]),
    ]
    pooled = DistanceSeries("sc", "pooled", [0.0, 1.0], [2.0, 1.55])
    path = tmp_path / "sc.csv"
    write_series_csv(path, runs, pooled)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 3 * 2
    assert rows[1][:2] == ["sc", "1"]
    assert rows[5][1] == "pooled"
    # repr round-trips floats exactly
    assert float(rows[2][3]) == 1.5
    assert float(rows[2][4]) == 1.4
    # absent columns are empty, not zero
    assert rows[3][4] == "" and rows[3][5] == ""


def test_write_verdict_json_handles_numpy_types(tmp_path):
    verdict = {
        "rate": np.float64(-2.0),
        "ok": np.bool_(True),
        "n": np.int64(7),
        "budget": np.array([0.1, 0.2]),
        "nested": {"vals": [np.float64(1.5), 3]},
    }
    path = tmp_path / "v.json"
    write_verdict_json(path, verdict)
    text = path.read_text()
    assert text.endswith("\n")
    back = json.loads(text)
    assert back == {"rate": -2.0, "ok": True, "n": 7, "budget": [0.1, 0.2],
                    "nested": {"vals": [1.5, 3]}}
    # keys are sorted so repeated runs emit identical bytes
    assert text.index('"budget"') < text.index('"nested"') < text.index('"ok"')


def test_run_and_write_is_byte_deterministic(tmp_path):
    cfg = parse_config_text(HEAT_TEXT)
    first = run_and_write(cfg, tmp_path / "a")
    second = run_and_write(cfg, tmp_path / "b")
    assert first["csv"].endswith("tiny_heat.csv")
    assert first["json"].endswith("tiny_heat.json")
    with open(first["csv"], "rb") as fh:
        csv_a = fh.read()
    with open(second["csv"], "rb") as fh:
        csv_b = fh.read()
    assert csv_a == csv_b
    with open(first["json"], "rb") as fh:
        json_a = fh.read()
    with open(second["json"], "rb") as fh:
        json_b = fh.read()
    assert json_a == json_b
    assert first["result"].verdict["pass"] is True
