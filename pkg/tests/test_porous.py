"""Tests for the porous-media solver, rearrangement maps, and dissipation.

Oracles: the closed form B(r) = (m-1) r^m / m for power nonlinearities,
the self-similar profile as an exact reference solution, shift/scaling
identities of the monotone rearrangement, and the quantile-formula
distance as a second route to the map cost.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from couplab import (
    BarenblattProfile,
    GridDensity,
    NonlinearityA,
    brenier_map_1d,
    check_admissible,
    dissipation_terms,
    pme_contraction_experiment,
    power_nonlinearity,
    solve_pme_1d,
    wasserstein_grid_1d,
)
from couplab.errors import (
    ConstraintViolated,
    InvalidParameter,
    NonPositiveValues,
    PositivityViolated,
)


def _gauss(c=0.0, s=1.0, lo=-5.0, hi=5.0, dx=0.02):
    x = np.arange(lo, hi + dx / 2, dx)
    return GridDensity(np.exp(-(x - c) ** 2 / (2 * s * s)), (lo,), dx) \
        .normalize()


def _box(first_center, spacing, n, height):
    return GridDensity(np.full(n, height), (first_center,), spacing)


# ---------------------------------------------------------------------------
# nonlinearities and admissibility
# ---------------------------------------------------------------------------

def test_power_nonlinearity_b_closed_form():
    r = np.linspace(0.0, 3.5, 50)
    # B(r) = int_0^r w (m-1) w^{m-2} dw = (m-1) r^m / m; the cached table
    # is linearly interpolated between ~8k nodes, hence the 1e-7 scale
    a2 = power_nonlinearity(2)
    assert_allclose(a2.b(r), r ** 2 / 2.0, atol=1e-7)
    a3 = power_nonlinearity(3)
    assert_allclose(a3.b(r), 2.0 * r ** 3 / 3.0, rtol=1e-4, atol=1e-6)
    a1 = power_nonlinearity(1)
    assert_allclose(a1.b(r), 0.0, atol=1e-15)
    # B'(r) = r A''(r) has no quadrature in it
    assert_allclose(a3.b_prime(r), 2.0 * r ** 2, rtol=1e-13)


def test_power_nonlinearity_rejects_small_exponent():
    with pytest.raises(InvalidParameter):
        power_nonlinearity(0.5)
    with pytest.raises(InvalidParameter):
        NonlinearityA(lambda u: u, lambda u: np.zeros_like(u), d=0)


def test_check_admissible_power_family():
    for m in (1, 2, 3):
        for d in (1, 2, 3):
            out = check_admissible(power_nonlinearity(m, d=d))
            assert out == {"b_nonneg": True, "monotone": True}


def test_check_admissible_rejects_negative_diffusion():
    # A(u) = -u^2 gives B(r) = -r^2 < 0
    neg = NonlinearityA(lambda u: -np.asarray(u, dtype=float) ** 2,
                        lambda u: -2.0 * np.ones_like(np.asarray(u, float)))
    out = check_admissible(neg)
    assert not out["b_nonneg"]


def test_check_admissible_detects_weighted_decrease():
    # B(r) ~ r^0.3 is nonnegative, but in d = 2 the weighted profile
    # r^{-1/2} B(r) ~ r^{-0.2} decreases
    frac = NonlinearityA(lambda u: np.asarray(u, dtype=float),
                         lambda u: 0.3 * np.asarray(u, dtype=float) ** (-1.7),
                         d=2)
    out = check_admissible(frac)
    assert out["b_nonneg"]
    assert not out["monotone"]


def test_check_admissible_grid_validation():
    a = power_nonlinearity(2)
    with pytest.raises(InvalidParameter):
        check_admissible(a, r_grid=np.array([0.0, 1.0]))
    with pytest.raises(InvalidParameter):
        check_admissible(a, r_grid=np.array([2.0, 1.0]))


# ---------------------------------------------------------------------------
# the solver against the self-similar profile
# ---------------------------------------------------------------------------

def test_solve_pme_matches_self_similar_profile():
    m = 2
    prof = BarenblattProfile(m, center=0.0)
    dx = 0.02
    n = int(round(8.0 / dx)) + 1
    u0 = prof.on_grid(-4.0, dx, n, t=1.0)
    times, states = solve_pme_1d(power_nonlinearity(m), u0, total_time=0.25,
                                 n_checkpoints=3)
    exact = prof.on_grid(-4.0, dx, n, t=1.25)
    l1 = np.sum(np.abs(states[-1].values - exact.values)) * dx
    assert l1 < 5e-3
    # mass is conserved to round-off
    for g in states:
        assert_allclose(g.mass(), u0.mass(), rtol=1e-12)


def test_solve_pme_linear_case_is_lattice_heat():
    # m = 1 means B = 0: the state must not move at all
    u0 = _gauss(dx=0.1)
    _, states = solve_pme_1d(power_nonlinearity(1), u0, total_time=0.5,
                             n_checkpoints=3)
    assert_allclose(states[-1].values, u0.values, atol=1e-15)


def test_solve_pme_input_validation():
    a = power_nonlinearity(2)
    u0 = _gauss(dx=0.1)
    with pytest.raises(InvalidParameter):
        solve_pme_1d(a, u0, total_time=0.1, dx=0.2)
    with pytest.raises(InvalidParameter):
        solve_pme_1d(a, u0, total_time=-1.0)
    bad = GridDensity(np.array([1.0, -0.5, 1.0]), (0.0,), 0.1,
                      allow_negative=True)
    with pytest.raises(NonPositiveValues):
        solve_pme_1d(a, bad, total_time=0.1)


# ---------------------------------------------------------------------------
# monotone rearrangement
# ---------------------------------------------------------------------------

def test_brenier_map_identity_and_shift():
    g = _gauss(dx=0.05)
    tmap = brenier_map_1d(g, g)
    x = np.linspace(-4.0, 4.0, 41)
    assert_allclose(tmap(x), x, atol=1e-12)
    shifted = GridDensity(g.values, (-5.0 + 0.75,), g.spacing)
    tmap = brenier_map_1d(g, shifted)
    assert_allclose(tmap(x), x + 0.75, atol=1e-10)
    assert_allclose(tmap.derivative(x), 1.0, atol=1e-10)


def test_brenier_map_scaling():
    # uniform [0,1] onto uniform [0,2]: T(x) = 2x with slope 2
    u1 = _box(0.05, 0.1, 10, 1.0)
    u2 = _box(0.1, 0.2, 10, 0.5)
    tmap = brenier_map_1d(u1, u2)
    x = np.linspace(0.05, 0.95, 19)
    assert_allclose(tmap(x), 2.0 * x, atol=1e-12)
    assert_allclose(tmap.derivative(x), 2.0, atol=1e-12)


def test_brenier_map_cost_agrees_with_quantile_distance():
    u1 = _gauss(c=-0.4, s=0.8, dx=0.05)
    u2 = _gauss(c=0.7, s=1.2, dx=0.05)
    tmap = brenier_map_1d(u1, u2)
    for p in (1.0, 2.0):
        assert_allclose(tmap.map_cost(p), wasserstein_grid_1d(u1, u2, p),
                        rtol=1e-10)


def test_brenier_map_pushforward():
    u1 = _gauss(c=-0.4, s=0.8, dx=0.05)
    u2 = _gauss(c=0.7, s=1.2, dx=0.05)
    tmap = brenier_map_1d(u1, u2)
    assert tmap.pushforward_gap(lambda y: y) < 1e-10
    assert tmap.pushforward_gap(lambda y: y ** 2) < 1e-10
    assert tmap.pushforward_gap(np.tanh) < 1e-6  # not piecewise-polynomial


# ---------------------------------------------------------------------------
# dissipation terms
# ---------------------------------------------------------------------------

def test_dissipation_routes_agree_and_bound_is_nonpositive():
    a = power_nonlinearity(2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        c1, c2 = rng.uniform(-1.0, 1.0, 2)
        s1, s2 = rng.uniform(0.6, 1.4, 2)
        out = dissipation_terms(_gauss(c1, s1), _gauss(c2, s2), a)
        # geometric-slope route vs density-ratio route: same number
        assert abs(out["D1"] + out["D2"] - out["I_prime_bound"]) < 1e-12
        assert out["I_prime_bound"] <= 1e-6


def test_dissipation_vanishes_for_pure_translation():
    a = power_nonlinearity(2)
    out = dissipation_terms(_gauss(-0.5, 1.0), _gauss(0.5, 1.0), a)
    for v in out.values():
        assert abs(v) < 1e-6


def test_dissipation_input_validation():
    g = _gauss(dx=0.1)
    with pytest.raises(InvalidParameter):
        dissipation_terms(g, g, power_nonlinearity(2, d=2))
    bad = GridDensity(np.array([1.0, -0.2, 1.0]), (0.0,), 0.1,
                      allow_negative=True)
    with pytest.raises(PositivityViolated):
        dissipation_terms(bad, g, power_nonlinearity(2))


# ---------------------------------------------------------------------------
# contraction experiment
# ---------------------------------------------------------------------------

def test_pme_contraction_translated_profiles_constant_distance():
    m = 2
    prof1 = BarenblattProfile(m, center=-0.25)
    prof2 = BarenblattProfile(m, center=0.25)
    dx = 0.05
    n = int(round(8.0 / dx)) + 1
    u1 = prof1.on_grid(-4.0, dx, n, t=1.0)
    u2 = prof2.on_grid(-4.0, dx, n, t=1.0)
    series = pme_contraction_experiment(power_nonlinearity(m), u1, u2,
                                        total_time=0.25, n_checkpoints=4)
    # translates evolve in lockstep: d_2 = (0.5)^2/2 at every checkpoint
    assert_allclose(series.coupled, 0.125, rtol=0.01)
    drift = np.max(np.abs(series.coupled - series.coupled[0]))
    assert drift < 0.01 * series.coupled[0]
    assert series.meta["mass_drift"] < 1e-10


def test_pme_contraction_rejects_inadmissible_nonlinearity():
    neg = NonlinearityA(lambda u: -np.asarray(u, dtype=float) ** 2,
                        lambda u: -2.0 * np.ones_like(np.asarray(u, float)))
    g = _gauss(dx=0.1)
    with pytest.raises(ConstraintViolated):
        pme_contraction_experiment(neg, g, g, total_time=0.1)
