"""Declarative experiment configuration: TOML files into validated scenarios.

A configuration file declares one scenario: the model kind, its parameters,
the initial data for both marginals, the seed list, the cost, and the
verdict checks to apply to the resulting distance series.  Model
ingredients that are functions (drifts, diffusion coefficients, jump maps,
angle laws, ...) are referenced by registry name so that a config file
stays plain data and a scenario is fully reproducible from its file.

Unknown keys anywhere in the file are hard errors with the offending
field path; parameter preconditions (stability conditions, admissibility,
exponent orderings) are validated here, before any computation starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import tomli

from .errors import ConfigError

__all__ = [
    "ScenarioConfig",
    "parse_config",
    "parse_config_text",
    "KINDS",
    "DRIFTS",
    "SIGMAS",
    "NLTR_FIELDS",
    "PSI_FUNCTIONS",
    "PHI_INVERSES",
    "NOISE_SAMPLERS",
    "D_FUNCTIONS",
    "ANGLE_SAMPLERS",
]


# ---------------------------------------------------------------------------
# registries of named model ingredients (module-level, so worker processes
# can unpickle them by reference)
# ---------------------------------------------------------------------------

def drift_zero(x, t):
    return np.zeros_like(x)


def drift_ou(x, t):
    return -x


DRIFTS = {"zero": drift_zero, "ou": drift_ou}


def sigma_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def sigma_sin(x):
    return 1.0 + 0.5 * np.sin(np.asarray(x, dtype=float))


SIGMAS = {"one": sigma_one, "sin": sigma_sin}


def nltr_field_linear_sin(x, current):
    return -x + 0.1 * np.sin(current)


# each entry: (field v(x, I), dissipativity alpha, current sensitivity beta)
NLTR_FIELDS = {"linear_sin": (nltr_field_linear_sin, 1.0, 0.1)}

PSI_FUNCTIONS = {"tanh": np.tanh}


def phi_inv_halving_shift(x, h):
    return 0.5 * x + h


# each entry: (map phi_inv(state, h), mean contraction factor L)
PHI_INVERSES = {"halving_shift": (phi_inv_halving_shift, 0.5)}


def noise_standard_normal(size, rng):
    return rng.standard_normal(size)


def noise_uniform01(size, rng):
    return rng.random(size)


def noise_centered_uniform(size, rng):
    return rng.random(size) - 0.5


NOISE_SAMPLERS = {
    "standard_normal": noise_standard_normal,
    "uniform01": noise_uniform01,
    "centered_uniform": noise_centered_uniform,
}


def d_identity(x):
    return np.asarray(x, dtype=float)


D_FUNCTIONS = {"identity": d_identity}


def angle_uniform_pi(size, rng):
    """Angle law with density 1/pi on (0, pi)."""
    return np.pi * rng.random(size)


ANGLE_SAMPLERS = {"uniform_pi": angle_uniform_pi}


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

KINDS = (
    "heat",
    "fokker_planck",
    "varcoef",
    "fractional",
    "nltr",
    "scattering",
    "kinetic_scattering",
    "neuron",
    "kac",
    "discrete_duality",
    "pme",
)

# kinds whose runs are deterministic given the config (no Monte Carlo seeds)
DETERMINISTIC_KINDS = ("discrete_duality", "pme")

_MEASURE_KEYS = {
    "dirac": {"at"},
    "gaussian": {"mean", "var"},
    "uniform": {"low", "high"},
    "barenblatt": {"m", "t0", "center"},
}

_COST_KEYS = {
    "power": {"p"},
    "kinetic_sum": {"a", "position_dim"},
}

_PARAM_KEYS: dict[str, dict[str, set]] = {
    "heat": {
        "required": {"n_pairs", "total_time", "dt", "n_checkpoints"},
        "optional": {"pairing", "lp_points", "n_resamples"},
    },
    "fokker_planck": {
        "required": {"n_pairs", "total_time", "dt", "n_checkpoints", "drift"},
        "optional": {"pairing", "lp_points", "n_resamples"},
    },
    "varcoef": {
        "required": {"n_pairs", "total_time", "dt", "n_checkpoints", "sigma"},
        "optional": {"pairing", "lp_points", "n_resamples"},
    },
    "fractional": {
        "required": {"n_pairs", "total_time", "dt", "n_checkpoints", "sigma",
                     "alpha"},
        "optional": {"pairing", "lp_points", "n_resamples"},
    },
    "nltr": {
        "required": {"n_pairs", "total_time", "dt", "n_checkpoints", "field",
                     "psi", "x0"},
        "optional": set(),
    },
    "scattering": {
        "required": {"n_pairs", "total_time", "n_checkpoints", "phi_inv",
                     "noise", "jump_rate"},
        "optional": {"pairing", "n_resamples", "p"},
    },
    "kinetic_scattering": {
        "required": {"n_pairs", "total_time", "n_checkpoints", "phi_inv",
                     "noise", "jump_rate"},
        "optional": {"n_resamples", "a_weight"},
    },
    "neuron": {
        "required": {"n_pairs", "total_time", "n_checkpoints", "case"},
        "optional": {"d", "p", "alpha", "beta", "birth", "pairing",
                     "n_resamples"},
    },
    "kac": {
        "required": {"n_particles", "total_time", "n_checkpoints", "angle"},
        "optional": set(),
    },
    "discrete_duality": {
        "required": {"total_time", "n_checkpoints", "p", "grid", "atom_mu",
                     "atom_nu"},
        "optional": {"dt"},
    },
    "pme": {
        "required": {"total_time", "n_checkpoints", "m", "grid"},
        "optional": set(),
    },
}

_VERDICT_KEYS = {"budget", "expected_rate", "rate_range", "bound_factor",
                 "bound_rate", "constant_tol", "rate_window"}


@dataclass
class ScenarioConfig:
    """One validated scenario: plain data, ready for the runner."""

    scenario_id: str
    kind: str
    seeds: list
    params: dict
    cost: dict
    initial: dict
    verdict: dict = field(default_factory=dict)
    output_dir: str | None = None


def _reject_unknown(table: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key '{unknown[0]}'")


def _require(table: dict, keys: set, path: str) -> None:
    missing = sorted(keys - set(table))
    if missing:
        raise ConfigError(f"{path}: missing required key '{missing[0]}'")


def _check_registry(name, registry: dict, path: str):
    if name not in registry:
        raise ConfigError(
            f"{path}: unknown name {name!r} (choices: "
            f"{', '.join(sorted(registry))})"
        )
    return registry[name]


def _check_number(table: dict, key: str, path: str, *, positive=False,
                  nonnegative=False, integer=False):
    if key not in table:
        return None
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}: must be positive, got {v!r}")
    if nonnegative and v < 0:
        raise ConfigError(f"{path}.{key}: must be nonnegative, got {v!r}")
    return v


def _validate_measure(spec, path: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a table")
    _require(spec, {"type"}, path)
    kind = spec["type"]
    if kind not in _MEASURE_KEYS:
        raise ConfigError(
            f"{path}.type: unknown family {kind!r} (choices: "
            f"{', '.join(sorted(_MEASURE_KEYS))})"
        )
    _reject_unknown(spec, _MEASURE_KEYS[kind] | {"type"}, path)
    if kind == "gaussian":
        _check_number(spec, "var", path, positive=True)
    if kind == "uniform" and "low" in spec and "high" in spec:
        low, high = spec["low"], spec["high"]
        if np.any(np.asarray(high, dtype=float)
                  <= np.asarray(low, dtype=float)):
            raise ConfigError(f"{path}: requires low < high")
    if kind == "barenblatt":
        m = _check_number(spec, "m", path)
        if m is not None and m <= 1:
            raise ConfigError(f"{path}.m: profile requires m > 1")
        _check_number(spec, "t0", path, positive=True)
    return dict(spec)


def _validate_cost(spec, path: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a table")
    _require(spec, {"type"}, path)
    kind = spec["type"]
    if kind not in _COST_KEYS:
        raise ConfigError(
            f"{path}.type: unknown cost {kind!r} (choices: "
            f"{', '.join(sorted(_COST_KEYS))})"
        )
    _reject_unknown(spec, _COST_KEYS[kind] | {"type"}, path)
    if kind == "power":
        p = _check_number(spec, "p", path, positive=True)
        if p is None:
            raise ConfigError(f"{path}: power cost needs p")
    if kind == "kinetic_sum":
        _check_number(spec, "a", path, nonnegative=True)
        _check_number(spec, "position_dim", path, positive=True, integer=True)
    return dict(spec)


def _validate_grid(spec, path: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a table")
    _require(spec, {"origin", "spacing", "points"}, path)
    _reject_unknown(spec, {"origin", "spacing", "points"}, path)
    _check_number(spec, "spacing", path, positive=True)
    _check_number(spec, "points", path, positive=True, integer=True)
    _check_number(spec, "origin", path)
    return dict(spec)


def _validate_params(kind: str, params: dict, initial: dict) -> dict:
    path = "scenario.params"
    schema = _PARAM_KEYS[kind]
    _reject_unknown(params, schema["required"] | schema["optional"], path)
    _require(params, schema["required"], path)

    for key in ("n_pairs", "n_checkpoints", "n_resamples", "lp_points",
                "n_particles"):
        _check_number(params, key, path, positive=key != "lp_points",
                      nonnegative=True, integer=True)
    for key in ("total_time", "dt", "jump_rate"):
        _check_number(params, key, path, positive=True)

    if "pairing" in params and params["pairing"] not in ("independent",
                                                         "quantile"):
        raise ConfigError(
            f"{path}.pairing: expected 'independent' or 'quantile'"
        )

    if kind == "fokker_planck":
        _check_registry(params["drift"], DRIFTS, f"{path}.drift")
    if kind in ("varcoef", "fractional"):
        _check_registry(params["sigma"], SIGMAS, f"{path}.sigma")
    if kind == "fractional":
        alpha = _check_number(params, "alpha", path, positive=True)
        if not 0.0 < alpha < 2.0:
            raise ConfigError(f"{path}.alpha: stability index needs (0, 2)")
    if kind == "nltr":
        _, alpha, beta = _check_registry(params["field"], NLTR_FIELDS,
                                         f"{path}.field")
        _check_registry(params["psi"], PSI_FUNCTIONS, f"{path}.psi")
        _check_number(params, "x0", path)
        if beta >= alpha:
            raise ConfigError(
                f"{path}.field: current sensitivity {beta} must stay below "
                f"the dissipativity {alpha} for the comparison bound"
            )
    if kind in ("scattering", "kinetic_scattering"):
        _check_number(params, "p", path, positive=True)
        _, lip = _check_registry(params["phi_inv"], PHI_INVERSES,
                                 f"{path}.phi_inv")
        _check_registry(params["noise"], NOISE_SAMPLERS, f"{path}.noise")
        rate = params["jump_rate"]
        if kind == "kinetic_scattering":
            a_weight = params.get("a_weight", 1.0)
            if a_weight == 1.0:
                if rate < rate * lip + 1.0 - 1e-12:
                    raise ConfigError(
                        f"{path}.jump_rate: needs K >= K L + 1 "
                        f"(K={rate}, L={lip})"
                    )
            elif rate <= a_weight + rate * lip:
                raise ConfigError(
                    f"{path}.jump_rate: needs K > a + K L "
                    f"(K={rate}, L={lip}, a={a_weight})"
                )
    if kind == "neuron":
        case = params["case"]
        if case not in ("a", "b"):
            raise ConfigError(f"{path}.case: expected 'a' or 'b'")
        if case == "a":
            _require(params, {"d"}, path)
            _check_registry(params["d"], D_FUNCTIONS, f"{path}.d")
        else:
            _require(params, {"alpha", "beta", "p", "birth"}, path)
            _check_number(params, "alpha", path, positive=True)
            _check_number(params, "beta", path, positive=True)
            _check_number(params, "p", path, positive=True)
            params["birth"] = _validate_measure(params["birth"],
                                                f"{path}.birth")
            if params["birth"]["type"] == "barenblatt":
                raise ConfigError(
                    f"{path}.birth: birth law must be dirac/uniform"
                )
    if kind == "kac":
        _check_registry(params["angle"], ANGLE_SAMPLERS, f"{path}.angle")
        if params["n_particles"] < 2:
            raise ConfigError(f"{path}.n_particles: needs at least 2")
    if kind == "discrete_duality":
        p = _check_number(params, "p", path, positive=True)
        if p < 1:
            raise ConfigError(f"{path}.p: lattice distances need p >= 1")
        params["grid"] = _validate_grid(params["grid"], f"{path}.grid")
        _check_number(params, "atom_mu", path)
        _check_number(params, "atom_nu", path)
        _check_number(params, "dt", path, positive=True)
    if kind == "pme":
        m = _check_number(params, "m", path, positive=True)
        if m < 1:
            raise ConfigError(f"{path}.m: admissible powers need m >= 1")
        params["grid"] = _validate_grid(params["grid"], f"{path}.grid")
        for side in ("mu", "nu"):
            if initial[side]["type"] != "barenblatt":
                raise ConfigError(
                    f"scenario.initial.{side}: porous-media scenarios "
                    "initialize from an analytic compact profile"
                )
            _require(initial[side], {"m", "t0"},
                     f"scenario.initial.{side}")
    return dict(params)


def _validate_verdict(spec, path: str = "verdict") -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a table")
    _reject_unknown(spec, _VERDICT_KEYS, path)
    if "budget" in spec:
        b = spec["budget"]
        ok = b == "2stderr" or (isinstance(b, (int, float))
                                and not isinstance(b, bool) and b >= 0)
        if not ok:
            raise ConfigError(
                f"{path}.budget: expected '2stderr' or a nonnegative number"
            )
    _check_number(spec, "expected_rate", path)
    _check_number(spec, "bound_factor", path, positive=True)
    _check_number(spec, "bound_rate", path)
    _check_number(spec, "constant_tol", path, positive=True)
    for key in ("rate_range", "rate_window"):
        if key in spec:
            v = spec[key]
            if (not isinstance(v, list) or len(v) != 2
                    or not all(isinstance(x, (int, float))
                               and not isinstance(x, bool) for x in v)
                    or not v[0] < v[1]):
                raise ConfigError(
                    f"{path}.{key}: expected [low, high] with low < high"
                )
    return dict(spec)


def parse_config_dict(doc: dict, source: str = "<config>") -> ScenarioConfig:
    """Validate a parsed TOML document into a ScenarioConfig."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a table")
    _reject_unknown(doc, {"scenario", "output", "verdict"}, source)
    _require(doc, {"scenario"}, source)
    sc = doc["scenario"]
    if not isinstance(sc, dict):
        raise ConfigError("scenario: expected a table")
    _reject_unknown(sc, {"id", "kind", "seeds", "params", "cost", "initial"},
                    "scenario")
    _require(sc, {"id", "kind", "params"}, "scenario")
    scenario_id = sc["id"]
    if not isinstance(scenario_id, str) or not scenario_id:
        raise ConfigError("scenario.id: expected a non-empty string")
    kind = sc["kind"]
    if kind not in KINDS:
        raise ConfigError(
            f"scenario.kind: unknown kind {kind!r} (choices: "
            f"{', '.join(KINDS)})"
        )

    seeds = sc.get("seeds")
    if kind in DETERMINISTIC_KINDS:
        if seeds not in (None, [0]):
            raise ConfigError(
                "scenario.seeds: deterministic scenarios take no seed list"
            )
        seeds = [0]
    else:
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("scenario.seeds: expected a non-empty list")
        for s in seeds:
            if isinstance(s, bool) or not isinstance(s, int):
                raise ConfigError(f"scenario.seeds: {s!r} is not an integer")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("scenario.seeds: duplicate seed")

    initial = {}
    needs_initial = kind not in ("discrete_duality",)
    # The relay model compares against the flat state pinned by params.x0,
    # so it takes a single initial law.
    sides = ("mu",) if kind == "nltr" else ("mu", "nu")
    if needs_initial:
        raw_init = sc.get("initial")
        if not isinstance(raw_init, dict):
            raise ConfigError("scenario.initial: expected a table")
        _reject_unknown(raw_init, set(sides), "scenario.initial")
        _require(raw_init, set(sides), "scenario.initial")
        for side in sides:
            initial[side] = _validate_measure(raw_init[side],
                                              f"scenario.initial.{side}")
    elif "initial" in sc:
        raise ConfigError(
            "scenario.initial: lattice scenarios place atoms via params"
        )

    params = sc.get("params")
    if not isinstance(params, dict):
        raise ConfigError("scenario.params: expected a table")
    params = _validate_params(kind, dict(params), initial)

    cost = sc.get("cost")
    needs_cost = kind in ("heat", "fokker_planck", "varcoef", "fractional")
    if cost is not None:
        cost = _validate_cost(cost, "scenario.cost")
    elif needs_cost:
        raise ConfigError("scenario.cost: this scenario kind needs a cost")

    verdict = _validate_verdict(doc.get("verdict", {}))

    output_dir = None
    if "output" in doc:
        out = doc["output"]
        if not isinstance(out, dict):
            raise ConfigError("output: expected a table")
        _reject_unknown(out, {"dir"}, "output")
        if "dir" in out:
            if not isinstance(out["dir"], str) or not out["dir"]:
                raise ConfigError("output.dir: expected a non-empty string")
            output_dir = out["dir"]

    return ScenarioConfig(
        scenario_id=scenario_id,
        kind=kind,
        seeds=list(seeds),
        params=params,
        cost=cost if cost is not None else {},
        initial=initial,
        verdict=verdict,
        output_dir=output_dir,
    )


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return parse_config_dict(doc, source)


def parse_config(path) -> ScenarioConfig:
    """Parse and validate one scenario configuration file."""
    with open(path, "rb") as fh:
        try:
            doc = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config_dict(doc, str(path))
