"""Drive validated scenario configs end to end.

One scenario = one config = one model family, a seed list, and a verdict
table.  Each seed becomes an independent run (optionally in parallel
worker processes), the runs are pooled into a mean series with error
bands, and the verdict table is evaluated on the pooled series:

* ``budget``            monotonicity slack per checkpoint: the string
                        ``"2stderr"`` (twice the pooled standard error)
                        or a fixed nonnegative number;
* ``expected_rate`` / ``rate_range`` / ``rate_window``
                        least-squares decay-rate fit, passing iff the
                        fitted rate lands in the range;
* ``bound_factor`` / ``bound_rate``
                        envelope check cost(t) <= factor * exp(rate t) *
                        cost(0) at every checkpoint;
* ``constant_tol``      max |cost(t) - cost(0)| <= tol.

Every configured check must hold for the scenario to pass.  Lattice
duality runs additionally carry optimality certificates; their duality
gap is checked against ``DUALITY_GAP_TOL`` automatically.

Outputs are deterministic: a CSV of all per-seed series plus the pooled
series, and a JSON verdict, written with stable formatting so repeated
runs of the same config produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from itertools import repeat

import numpy as np

from .config import (ANGLE_SAMPLERS, D_FUNCTIONS, DRIFTS, NLTR_FIELDS,
                     NOISE_SAMPLERS, PHI_INVERSES, PSI_FUNCTIONS, SIGMAS,
                     ConfigError, ScenarioConfig)
from .costs import KineticSumCost, PowerCost
from .diffusion import (run_diffusion, simulate_nltr, step_fokker_planck,
                        step_fractional, step_heat, step_varcoef)
from .errors import InvalidParameter
from .gridpde import discrete_duality_experiment
from .jumps import (BoltzmannKac, KineticScattering, NeuronIIE, Scattering,
                    kac_run, kinetic_run, neuron_run, scattering_run)
from .measures import BarenblattProfile, GridDensity, sample_family
from .porous import pme_contraction_experiment, power_nonlinearity
from .series import (DistanceSeries, fit_decay_rate, monotonicity_verdict,
                     pool_series)

__all__ = [
    "FamilySampler",
    "ScenarioResult",
    "run_scenario",
    "evaluate_verdict",
    "write_series_csv",
    "write_verdict_json",
    "run_and_write",
    "DUALITY_GAP_TOL",
    "CSV_HEADER",
]

#: optimality certificates from exact-LP scenarios must close to this gap
DUALITY_GAP_TOL = 1e-8

CSV_HEADER = ("scenario_id", "seed", "t", "coupled_cost", "lp_distance",
              "ci_low", "ci_high")


class FamilySampler:
    """Picklable ``(n, rng) -> (n, d) points`` sampler for a measure spec."""

    def __init__(self, spec: dict):
        self.family = spec["type"]
        self.params = {k: v for k, v in spec.items() if k != "type"}

    def __call__(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_family(self.family, self.params, n, rng).points


def _build_cost(spec: dict):
    if spec["type"] == "power":
        return PowerCost(float(spec["p"]))
    if spec["type"] == "kinetic_sum":
        return KineticSumCost(float(spec.get("a", 1.0)),
                              int(spec.get("position_dim", 1)))
    raise ConfigError(f"unknown cost type {spec['type']!r}")


def _birth_law(spec: dict) -> dict:
    """Measure spec ('type') -> declarative birth law ('family')."""
    law = {k: v for k, v in spec.items() if k != "type"}
    law["family"] = spec["type"]
    return law


def _lattice_atom(grid: dict, at: float) -> GridDensity:
    """A unit-mass atom snapped to the nearest lattice site."""
    n = int(grid["points"])
    h = float(grid["spacing"])
    x0 = float(grid["origin"])
    idx = int(round((float(at) - x0) / h))
    if not 0 <= idx < n:
        raise InvalidParameter(f"atom at {at} falls outside the lattice")
    vals = np.zeros(n)
    vals[idx] = 1.0 / h
    return GridDensity(vals, (x0,), h)


def _barenblatt_state(spec: dict, grid: dict) -> GridDensity:
    prof = BarenblattProfile(float(spec["m"]), float(spec.get("center", 0.0)))
    return prof.on_grid(float(grid["origin"]), float(grid["spacing"]),
                        int(grid["points"]), float(spec["t0"]))


_DIFFUSION_STEPS = {
    "heat": lambda P: step_heat,
    "fokker_planck": lambda P: partial(step_fokker_planck,
                                       drift=DRIFTS[P["drift"]]),
    "varcoef": lambda P: partial(step_varcoef, sigma=SIGMAS[P["sigma"]]),
    "fractional": lambda P: partial(step_fractional, sigma=SIGMAS[P["sigma"]],
                                    alpha=float(P["alpha"])),
}


def _run_seed(cfg: ScenarioConfig, seed: int) -> DistanceSeries:
    """One independent run of the configured scenario."""
    P = cfg.params
    kind = cfg.kind
    sid = cfg.scenario_id

    if kind in _DIFFUSION_STEPS:
        return run_diffusion(
            _DIFFUSION_STEPS[kind](P),
            FamilySampler(cfg.initial["mu"]), FamilySampler(cfg.initial["nu"]),
            int(P["n_pairs"]), float(P["total_time"]), float(P["dt"]),
            int(P["n_checkpoints"]), _build_cost(cfg.cost), seed,
            scenario_id=sid, pairing=P.get("pairing", "independent"),
            lp_points=int(P.get("lp_points", 0)),
            n_resamples=int(P.get("n_resamples", 200)),
        )

    if kind == "nltr":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        z0 = FamilySampler(cfg.initial["mu"])(int(P["n_pairs"]), rng)[:, 0]
        v_fn, alpha, beta = NLTR_FIELDS[P["field"]]
        series = simulate_nltr(v_fn, PSI_FUNCTIONS[P["psi"]], alpha, beta,
                               z0, float(P["x0"]), float(P["total_time"]),
                               float(P["dt"]), int(P["n_checkpoints"]),
                               scenario_id=sid)
        # the dynamics are deterministic; the seed labels the initial draw
        return replace(series, seed=seed)

    if kind == "scattering":
        phi_inv, lip = PHI_INVERSES[P["phi_inv"]]
        s = Scattering(phi_inv, NOISE_SAMPLERS[P["noise"]],
                       float(P["jump_rate"]), lip, p=float(P.get("p", 1.0)))
        return scattering_run(s, FamilySampler(cfg.initial["mu"]),
                              FamilySampler(cfg.initial["nu"]),
                              float(P["total_time"]), int(P["n_pairs"]),
                              int(P["n_checkpoints"]), seed, scenario_id=sid,
                              pairing=P.get("pairing", "independent"),
                              n_resamples=int(P.get("n_resamples", 200)))

    if kind == "kinetic_scattering":
        phi_inv, lip = PHI_INVERSES[P["phi_inv"]]
        s = KineticScattering(phi_inv, NOISE_SAMPLERS[P["noise"]],
                              float(P["jump_rate"]), lip,
                              a_weight=float(P.get("a_weight", 1.0)))
        return kinetic_run(s, FamilySampler(cfg.initial["mu"]),
                           FamilySampler(cfg.initial["nu"]),
                           float(P["total_time"]), int(P["n_pairs"]),
                           int(P["n_checkpoints"]), seed, scenario_id=sid,
                           n_resamples=int(P.get("n_resamples", 200)))

    if kind == "neuron":
        if P["case"] == "a":
            s = NeuronIIE.case_a(D_FUNCTIONS[P["d"]],
                                 p=float(P.get("p", 1.0)))
        else:
            s = NeuronIIE.case_b(float(P["alpha"]), float(P["beta"]),
                                 float(P.get("p", 1.0)),
                                 _birth_law(P["birth"]))
        return neuron_run(s, FamilySampler(cfg.initial["mu"]),
                          FamilySampler(cfg.initial["nu"]),
                          float(P["total_time"]), int(P["n_pairs"]),
                          int(P["n_checkpoints"]), seed, scenario_id=sid,
                          pairing=P.get("pairing", "independent"),
                          n_resamples=int(P.get("n_resamples", 200)))

    if kind == "kac":
        s = BoltzmannKac(ANGLE_SAMPLERS[P["angle"]],
                         n_pairs=int(P["n_particles"]))
        return kac_run(s, FamilySampler(cfg.initial["mu"]),
                       FamilySampler(cfg.initial["nu"]),
                       float(P["total_time"]), int(P["n_checkpoints"]),
                       seed, scenario_id=sid)

    if kind == "discrete_duality":
        u1 = _lattice_atom(P["grid"], P["atom_mu"])
        u2 = _lattice_atom(P["grid"], P["atom_nu"])
        series, certificates = discrete_duality_experiment(
            u1, u2, float(P["p"]), float(P["total_time"]),
            int(P["n_checkpoints"]), scenario_id=sid,
            dt=P.get("dt"))
        series.meta["certificates"] = certificates
        return series

    if kind == "pme":
        a = power_nonlinearity(float(P["m"]))
        grid = P["grid"]
        u1 = _barenblatt_state(cfg.initial["mu"], grid)
        u2 = _barenblatt_state(cfg.initial["nu"], grid)
        return pme_contraction_experiment(a, u1, u2, float(P["total_time"]),
                                          int(P["n_checkpoints"]),
                                          scenario_id=sid)

    raise ConfigError(f"unknown scenario kind {kind!r}")


def _resolve_workers(workers) -> int:
    if workers is None:
        workers = os.environ.get("COUPLAB_WORKERS", "1")
    return max(1, int(workers))


def _run_all_seeds(cfg: ScenarioConfig, workers) -> list[DistanceSeries]:
    seeds = list(cfg.seeds)
    n_workers = min(_resolve_workers(workers), len(seeds))
    if n_workers <= 1:
        return [_run_seed(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        # map preserves seed order, so the reduction is deterministic
        return list(ex.map(_run_seed, repeat(cfg), seeds))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    runs: list
    pooled: DistanceSeries
    verdict: dict = field(default_factory=dict)


def run_scenario(cfg: ScenarioConfig, workers=None) -> ScenarioResult:
    """Run every seed, pool the series, and evaluate the verdict table."""
    runs = _run_all_seeds(cfg, workers)
    pooled = pool_series(runs, scenario_id=cfg.scenario_id)
    verdict = evaluate_verdict(cfg, pooled, runs)
    return ScenarioResult(config=cfg, runs=runs, pooled=pooled,
                          verdict=verdict)


def evaluate_verdict(cfg: ScenarioConfig, pooled: DistanceSeries,
                     runs=()) -> dict:
    """Apply the configured checks to the pooled series."""
    opts = cfg.verdict
    out = {"scenario_id": cfg.scenario_id, "kind": cfg.kind,
           "n_runs": len(cfg.seeds)}
    checks = {}

    if "budget" in opts:
        budget = opts["budget"]
        if budget == "2stderr":
            if pooled.stderr is None:
                raise ConfigError(
                    "budget '2stderr' needs runs that carry error bands"
                )
            budget = 2.0 * pooled.stderr
            out["budget"] = [float(b) for b in budget]
        else:
            budget = float(budget)
            out["budget"] = budget
        mono = monotonicity_verdict(pooled, budget)
        out["monotone"] = bool(mono["monotone"])
        out["worst_violation"] = float(mono["worst_violation"])
        checks["monotone"] = out["monotone"]

    if "rate_range" in opts or "expected_rate" in opts:
        fit = fit_decay_rate(pooled, window=opts.get("rate_window"))
        out["fitted_rate"] = float(fit["rate"])
        out["rate_stderr"] = float(fit["stderr"])
        out["r_squared"] = float(fit["r_squared"])
        if "expected_rate" in opts:
            out["expected_rate"] = float(opts["expected_rate"])
        if "rate_range" in opts:
            lo, hi = (float(v) for v in opts["rate_range"])
            out["rate_range"] = [lo, hi]
            checks["rate_in_range"] = bool(lo <= fit["rate"] <= hi)

    if "bound_factor" in opts or "bound_rate" in opts:
        factor = float(opts.get("bound_factor", 1.0))
        rate = float(opts.get("bound_rate", 0.0))
        envelope = factor * np.exp(rate * pooled.times) * pooled.coupled[0]
        out["bound_factor"] = factor
        out["bound_rate"] = rate
        out["bound_excess"] = float(np.max(pooled.coupled - envelope))
        checks["within_bound"] = bool(out["bound_excess"] <= 0.0)

    if "constant_tol" in opts:
        drift = float(np.max(np.abs(pooled.coupled - pooled.coupled[0])))
        out["constant_tol"] = float(opts["constant_tol"])
        out["constant_drift"] = drift
        checks["constant"] = bool(drift <= out["constant_tol"])

    certificates = next((r.meta["certificates"] for r in runs
                         if "certificates" in r.meta), None)
    if certificates is not None:
        worst_gap = max(abs(float(c["duality_gap"])) for c in certificates)
        out["worst_duality_gap"] = worst_gap
        out["certificates"] = certificates
        checks["duality_gap"] = bool(worst_gap <= DUALITY_GAP_TOL)

    out["checks"] = checks
    out["pass"] = all(checks.values()) if checks else True
    return out


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON serialization."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def write_series_csv(path, runs, pooled: DistanceSeries | None = None) -> None:
    """All per-seed series then the pooled series, one checkpoint per row."""
    rows = list(runs)
    if pooled is not None:
        rows.append(pooled)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in rows:
            for k in range(len(s.times)):
                writer.writerow([
                    s.scenario_id, s.seed,
                    _cell(s.times[k]), _cell(s.coupled[k]),
                    _cell(None if s.lp is None else s.lp[k]),
                    _cell(None if s.ci_low is None else s.ci_low[k]),
                    _cell(None if s.ci_high is None else s.ci_high[k]),
                ])


def write_verdict_json(path, verdict: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_plain(verdict), indent=2, sort_keys=True))
        fh.write("\n")


def run_and_write(cfg: ScenarioConfig, out_dir, workers=None) -> dict:
    """Run a scenario and write ``<id>.csv`` and ``<id>.json`` under out_dir.

    Returns ``{"csv": path, "json": path, "result": ScenarioResult}``.
    """
    result = run_scenario(cfg, workers=workers)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{cfg.scenario_id}.csv")
    json_path = os.path.join(out_dir, f"{cfg.scenario_id}.json")
    write_series_csv(csv_path, result.runs, result.pooled)
    write_verdict_json(json_path, result.verdict)
    return {"csv": csv_path, "json": json_path, "result": result}
