"""Tests for the declarative configuration layer.

Covers: the shipped configuration files all parse; unknown keys and
malformed values fail with the offending field path; parameter
preconditions (exponent ranges, rate conditions, seed rules) are
enforced before any computation.
"""

from pathlib import Path

import pytest

from couplab import parse_config, parse_config_text
from couplab.config import (
    ANGLE_SAMPLERS,
    D_FUNCTIONS,
    DRIFTS,
    KINDS,
    NLTR_FIELDS,
    NOISE_SAMPLERS,
    PHI_INVERSES,
    PSI_FUNCTIONS,
    SIGMAS,
)
from couplab.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


BASE = """
[scenario]
id = "demo"
kind = "heat"
seeds = [0, 1]

[scenario.params]
n_pairs = 100
total_time = 1.0
dt = 0.01
n_checkpoints = 4

[scenario.cost]
type = "power"
p = 2.0

[scenario.initial.mu]
type = "dirac"
at = 0.0

[scenario.initial.nu]
type = "dirac"
at = 1.0
"""


def _patched(base: str, old: str, new: str) -> str:
    assert old in base
    return base.replace(old, new)


# ---------------------------------------------------------------------------
# the shipped configuration files
# ---------------------------------------------------------------------------

def test_all_shipped_configs_parse():
    files = sorted(CONFIG_DIR.glob("*.toml"))
    assert len(files) >= 16
    seen = set()
    for path in files:
        cfg = parse_config(path)
        assert cfg.kind in KINDS
        assert cfg.scenario_id not in seen
        seen.add(cfg.scenario_id)
        assert cfg.output_dir  # every shipped scenario declares its out dir


def test_registries_cover_shipped_names():
    # every registry the configs can reference is non-empty and callable
    for reg in (DRIFTS, SIGMAS, PSI_FUNCTIONS, NOISE_SAMPLERS, D_FUNCTIONS,
                ANGLE_SAMPLERS):
        assert reg and all(callable(v) for v in reg.values())
    for reg in (NLTR_FIELDS, PHI_INVERSES):
        assert reg and all(callable(v[0]) for v in reg.values())


# ---------------------------------------------------------------------------
# basic shape validation
# ---------------------------------------------------------------------------

def test_base_config_parses():
    cfg = parse_config_text(BASE)
    assert cfg.scenario_id == "demo"
    assert cfg.kind == "heat"
    assert cfg.seeds == [0, 1]
    assert cfg.params["n_pairs"] == 100
    assert cfg.cost == {"type": "power", "p": 2.0}
    assert cfg.initial["mu"] == {"type": "dirac", "at": 0.0}
    assert cfg.verdict == {}
    assert cfg.output_dir is None


def test_unknown_keys_are_rejected_with_path():
    bad = BASE + "\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError, match="unknown key 'extra'"):
        parse_config_text(bad)
    bad = _patched(BASE, "n_pairs = 100", "n_pairs = 100\nwhatever = 3")
    with pytest.raises(ConfigError, match="scenario.params"):
        parse_config_text(bad)
    bad = _patched(BASE, 'at = 1.0', 'at = 1.0\nspread = 2.0')
    with pytest.raises(ConfigError, match="scenario.initial.nu"):
        parse_config_text(bad)


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config_text(_patched(BASE, "dt = 0.01\n", ""))
    with pytest.raises(ConfigError, match="scenario"):
        parse_config_text("[scenario]\nkind = 'heat'\n")


def test_malformed_toml_reports_source():
    with pytest.raises(ConfigError, match="broken.toml"):
        parse_config_text("[scenario\n", source="broken.toml")


def test_kind_must_be_known():
    with pytest.raises(ConfigError, match="unknown kind"):
        parse_config_text(_patched(BASE, 'kind = "heat"', 'kind = "magic"'))


def test_seed_rules():
    with pytest.raises(ConfigError, match="non-empty list"):
        parse_config_text(_patched(BASE, "seeds = [0, 1]", "seeds = []"))
    with pytest.raises(ConfigError, match="not an integer"):
        parse_config_text(_patched(BASE, "seeds = [0, 1]", 'seeds = [0, "a"]'))
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text(_patched(BASE, "seeds = [0, 1]", "seeds = [1, 1]"))
    with pytest.raises(ConfigError, match="not an integer"):
        parse_config_text(_patched(BASE, "seeds = [0, 1]",
                                   "seeds = [true, false]"))


def test_number_validation():
    with pytest.raises(ConfigError, match="must be positive"):
        parse_config_text(_patched(BASE, "total_time = 1.0",
                                   "total_time = -1.0"))
    with pytest.raises(ConfigError, match="expected an integer"):
        parse_config_text(_patched(BASE, "n_pairs = 100", "n_pairs = 99.5"))
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config_text(_patched(BASE, "dt = 0.01", 'dt = "fast"'))


def test_measure_validation():
    with pytest.raises(ConfigError, match="unknown family"):
        parse_config_text(_patched(BASE, 'type = "dirac"\nat = 0.0',
                                   'type = "cauchy"\nat = 0.0'))
    gauss = _patched(BASE, 'type = "dirac"\nat = 0.0',
                     'type = "gaussian"\nmean = 0.0\nvar = 1.0')
    parse_config_text(gauss)
    with pytest.raises(ConfigError, match="must be positive"):
        parse_config_text(_patched(gauss, "var = 1.0", "var = -1.0"))
    uni = _patched(BASE, 'type = "dirac"\nat = 0.0',
                   'type = "uniform"\nlow = 0.0\nhigh = 1.0')
    parse_config_text(uni)
    with pytest.raises(ConfigError, match="low < high"):
        parse_config_text(_patched(uni, "high = 1.0", "high = -2.0"))


def test_cost_validation():
    with pytest.raises(ConfigError, match="unknown cost"):
        parse_config_text(_patched(BASE, 'type = "power"', 'type = "entropy"'))
    with pytest.raises(ConfigError, match="needs a cost"):
        parse_config_text(BASE.replace('[scenario.cost]\ntype = "power"\np = 2.0\n', ""))
    with pytest.raises(ConfigError, match="must be positive"):
        parse_config_text(_patched(BASE, "p = 2.0", "p = -1.0"))


def test_verdict_validation():
    ok = BASE + '\n[verdict]\nbudget = "2stderr"\nrate_range = [-2.1, -1.9]\n'
    cfg = parse_config_text(ok)
    assert cfg.verdict["budget"] == "2stderr"
    with pytest.raises(ConfigError, match="verdict"):
        parse_config_text(BASE + "\n[verdict]\nwishful = 1\n")
    with pytest.raises(ConfigError, match="budget"):
        parse_config_text(BASE + '\n[verdict]\nbudget = "-3"\n')
    with pytest.raises(ConfigError, match="low < high"):
        parse_config_text(BASE + "\n[verdict]\nrate_range = [1.0, -1.0]\n")
    with pytest.raises(ConfigError, match="rate_window"):
        parse_config_text(BASE + "\n[verdict]\nrate_window = [0.5]\n")


def test_output_validation():
    cfg = parse_config_text(BASE + '\n[output]\ndir = "out"\n')
    assert cfg.output_dir == "out"
    with pytest.raises(ConfigError, match="output.dir"):
        parse_config_text(BASE + '\n[output]\ndir = ""\n')
    with pytest.raises(ConfigError, match="output"):
        parse_config_text(BASE + '\n[output]\npath = "x"\n')


# ---------------------------------------------------------------------------
# kind-specific preconditions
# ---------------------------------------------------------------------------

def _kind_config(kind: str, params: str, extra: str = "",
                 initials: str = None) -> str:
    if initials is None:
        initials = ('[scenario.initial.mu]\ntype = "dirac"\nat = 0.0\n\n'
                    '[scenario.initial.nu]\ntype = "dirac"\nat = 1.0\n')
    return f"""
[scenario]
id = "k"
kind = "{kind}"
seeds = [0]

[scenario.params]
{params}

{initials}
{extra}
"""


def test_fokker_planck_needs_known_drift():
    params = ("n_pairs = 10\ntotal_time = 1.0\ndt = 0.1\nn_checkpoints = 3\n"
              'drift = "levitate"')
    cost = '[scenario.cost]\ntype = "power"\np = 2.0\n'
    with pytest.raises(ConfigError, match="unknown name"):
        parse_config_text(_kind_config("fokker_planck", params, cost))


def test_fractional_alpha_range():
    base = ("n_pairs = 10\ntotal_time = 1.0\ndt = 0.1\nn_checkpoints = 3\n"
            'sigma = "sin"\nalpha = {a}')
    cost = '[scenario.cost]\ntype = "power"\np = 0.5\n'
    parse_config_text(_kind_config("fractional", base.format(a=1.5), cost))
    with pytest.raises(ConfigError, match="alpha"):
        parse_config_text(_kind_config("fractional", base.format(a=2.5), cost))


def test_nltr_takes_single_initial_and_checks_rates():
    params = ("n_pairs = 10\ntotal_time = 1.0\ndt = 0.1\nn_checkpoints = 3\n"
              'field = "linear_sin"\npsi = "tanh"\nx0 = 0.0')
    mu_only = '[scenario.initial.mu]\ntype = "gaussian"\nmean = 1.0\nvar = 1.0\n'
    cfg = parse_config_text(_kind_config("nltr", params, initials=mu_only))
    assert set(cfg.initial) == {"mu"}
    both = mu_only + '\n[scenario.initial.nu]\ntype = "dirac"\nat = 0.0\n'
    with pytest.raises(ConfigError, match="unknown key 'nu'"):
        parse_config_text(_kind_config("nltr", params, initials=both))


def test_kinetic_rate_condition_checked_at_parse_time():
    params = ("n_pairs = 10\ntotal_time = 1.0\nn_checkpoints = 3\n"
              'phi_inv = "halving_shift"\nnoise = "standard_normal"\n'
              "jump_rate = {k}")
    parse_config_text(_kind_config("kinetic_scattering", params.format(k=2.0)))
    with pytest.raises(ConfigError, match="K >= K L"):
        parse_config_text(_kind_config("kinetic_scattering",
                                       params.format(k=1.5)))


def test_neuron_case_requirements():
    common = "n_pairs = 10\ntotal_time = 1.0\nn_checkpoints = 3\n"
    with pytest.raises(ConfigError, match="expected 'a' or 'b'"):
        parse_config_text(_kind_config("neuron", common + 'case = "c"'))
    with pytest.raises(ConfigError, match="missing required key 'd'"):
        parse_config_text(_kind_config("neuron", common + 'case = "a"'))
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config_text(_kind_config("neuron", common + 'case = "b"'))
    full_b = (common + 'case = "b"\nalpha = 1.0\nbeta = 1.0\np = 1.0\n'
              '[scenario.params.birth]\ntype = "uniform"\nlow = 0.0\n'
              "high = 1.0")
    parse_config_text(_kind_config("neuron", full_b))
    with pytest.raises(ConfigError, match="birth"):
        parse_config_text(_kind_config(
            "neuron",
            full_b.replace('type = "uniform"\nlow = 0.0\nhigh = 1.0',
                           'type = "barenblatt"\nm = 2.0\nt0 = 1.0')))


def test_kac_needs_particles_and_angle():
    params = 'n_particles = {n}\ntotal_time = 1.0\nn_checkpoints = 3\nangle = "uniform_pi"'
    parse_config_text(_kind_config("kac", params.format(n=8)))
    with pytest.raises(ConfigError, match="at least 2"):
        parse_config_text(_kind_config("kac", params.format(n=1)))


def test_deterministic_kinds_refuse_seed_lists():
    params = ("total_time = 1.0\nn_checkpoints = 3\np = 1.0\natom_mu = 0.0\n"
              "atom_nu = 1.0\n[scenario.params.grid]\norigin = -5.0\n"
              "spacing = 0.1\npoints = 101")
    text = _kind_config("discrete_duality", params, initials="")
    cfg = parse_config_text(text)
    assert cfg.seeds == [0]
    with pytest.raises(ConfigError, match="no seed list"):
        parse_config_text(text.replace("seeds = [0]", "seeds = [0, 1]"))


def test_discrete_duality_rejects_initial_tables():
    params = ("total_time = 1.0\nn_checkpoints = 3\np = 1.0\natom_mu = 0.0\n"
              "atom_nu = 1.0\n[scenario.params.grid]\norigin = -5.0\n"
              "spacing = 0.1\npoints = 101")
    initials = '[scenario.initial.mu]\ntype = "dirac"\nat = 0.0\n'
    with pytest.raises(ConfigError, match="atoms via params"):
        parse_config_text(_kind_config("discrete_duality", params,
                                       initials=initials))


def test_pme_requires_barenblatt_initials():
    params = ("total_time = 0.5\nn_checkpoints = 3\nm = 2.0\n"
              "[scenario.params.grid]\norigin = -4.0\nspacing = 0.1\n"
              "points = 81")
    good = ('[scenario.initial.mu]\ntype = "barenblatt"\nm = 2.0\nt0 = 1.0\n'
            'center = -0.25\n\n'
            '[scenario.initial.nu]\ntype = "barenblatt"\nm = 2.0\nt0 = 1.0\n'
            'center = 0.25\n')
    parse_config_text(_kind_config("pme", params, initials=good))
    bad = good.replace('type = "barenblatt"\nm = 2.0\nt0 = 1.0\ncenter = -0.25',
                       'type = "gaussian"\nmean = 0.0\nvar = 1.0')
    with pytest.raises(ConfigError, match="analytic compact profile"):
        parse_config_text(_kind_config("pme", params, initials=bad))
    # barenblatt initials must pin the profile completely
    incomplete = good.replace("m = 2.0\nt0 = 1.0\ncenter = -0.25",
                              "center = -0.25")
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config_text(_kind_config("pme", params, initials=incomplete))
    with pytest.raises(ConfigError, match="m > 1"):
        parse_config_text(_kind_config(
            "pme", params, initials=good.replace("m = 2.0", "m = 0.5", 1)))
