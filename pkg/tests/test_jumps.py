"""Tests for the event-exact jump couplings.

Oracles used here: closed-form event statistics of the halving map
(gap halves exactly per shared-noise jump), the explicit survival law of a
linear-rate firing particle, momentum/energy conservation of the shared
collision frame, and uncoupled single-marginal reruns.
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from couplab import (
    BoltzmannKac,
    EmpiricalMeasure,
    KineticScattering,
    NeuronIIE,
    Scattering,
    kac_run,
    kinetic_run,
    neuron_run,
    scattering_run,
    tanaka_collision,
)
from couplab.errors import ConstraintViolated, InvalidParameter
from couplab.jumps import (
    birth_sample,
    neuron_single_run,
    scattering_single_run,
    write_event_log,
)


def halving_shift(x, h):
    return x / 2.0 + h


def std_normal(size, rng):
    return rng.standard_normal(size)


def _dirac(v):
    return EmpiricalMeasure(np.array([v]))


# ---------------------------------------------------------------------------
# simple scattering
# ---------------------------------------------------------------------------

def test_scattering_validate_contraction_factor():
    s = Scattering(halving_shift, std_normal, jump_rate=1.0, lipschitz=0.5)
    s.validate(np.random.default_rng(0))
    bad = Scattering(halving_shift, std_normal, jump_rate=1.0, lipschitz=0.3)
    with pytest.raises(ConstraintViolated):
        bad.validate(np.random.default_rng(0))


def test_scattering_run_halving_map_closed_form():
    # from diracs at 0 and 1 the gap after j shared jumps is exactly 2^-j,
    # so the mean cost is E 2^-N(t) = exp(-K t / 2) for N Poisson(K t)
    s = Scattering(halving_shift, std_normal, jump_rate=1.0, lipschitz=0.5,
                   p=1.0)
    series = scattering_run(s, _dirac(0.0), _dirac(1.0), total_time=2.0,
                            n_pairs=20_000, n_checkpoints=5, seed=0)
    assert_allclose(series.coupled, np.exp(-series.times / 2.0), atol=0.012)
    from couplab import fit_decay_rate
    rate = fit_decay_rate(series)["rate"]
    assert abs(rate + 0.5) < 0.1


def test_scattering_run_reproducible_and_pairing_checked():
    s = Scattering(halving_shift, std_normal, jump_rate=1.0, lipschitz=0.5)
    kw = dict(total_time=1.0, n_pairs=500, n_checkpoints=3, seed=4)
    a = scattering_run(s, _dirac(0.0), _dirac(1.0), **kw)
    b = scattering_run(s, _dirac(0.0), _dirac(1.0), **kw)
    assert_array_equal(a.coupled, b.coupled)
    with pytest.raises(InvalidParameter):
        scattering_run(s, _dirac(0.0), _dirac(1.0), pairing="bogus", **kw)


def test_scattering_single_run_matches_stationary_moments():
    # halving map with standard normal shifts: from delta_0, the state after
    # N jumps has variance (4/3)(1 - 4^-N); averaging over N Poisson(K t)
    # gives (4/3)(1 - exp(-3 K t / 4))
    s = Scattering(halving_shift, std_normal, jump_rate=1.0, lipschitz=0.5)
    times, states = scattering_single_run(s, _dirac(0.0), total_time=1.0,
                                          n=40_000, n_checkpoints=3, seed=1)
    target = (4.0 / 3.0) * (1.0 - np.exp(-0.75 * times[-1]))
    assert abs(states[-1].mean()) < 0.02
    assert_allclose(states[-1].var(), target, rtol=0.05)


# ---------------------------------------------------------------------------
# kinetic scattering
# ---------------------------------------------------------------------------

def test_kinetic_rate_condition():
    KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                      lipschitz=0.5).validate()
    with pytest.raises(ConstraintViolated):
        KineticScattering(halving_shift, std_normal, jump_rate=1.9,
                          lipschitz=0.5).validate()
    KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                      lipschitz=0.5, a_weight=0.5).validate()
    with pytest.raises(ConstraintViolated):
        KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                          lipschitz=0.5, a_weight=2.0).validate()


def test_kinetic_run_event_log_halves_velocity_gap():
    s = KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                          lipschitz=0.5)
    gauss = lambda n, rng: rng.normal(1.0, 0.5, size=(n, 2))
    series = kinetic_run(s, _dirac([0.0, 0.0]), gauss, total_time=1.0,
                         n_pairs=50, n_checkpoints=3, seed=2, log_pairs=5)
    events = series.meta["events"]
    assert len(events) > 0
    for ev in events:
        # shared h cancels: |v' - w'| = |v - w| / 2 exactly at every jump
        assert_allclose(ev["vel_gap_after"], ev["vel_gap_before"] / 2.0,
                        rtol=1e-12)
    # initial cost from the two dirac-vs-mean-1 clouds, and eventual decay
    assert series.coupled[-1] < series.coupled[0]


def test_kinetic_run_initial_cost_hand_value():
    s = KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                          lipschitz=0.5)
    series = kinetic_run(s, _dirac([0.0, 0.0]), _dirac([1.0, 1.0]),
                         total_time=0.5, n_pairs=32, n_checkpoints=2, seed=0)
    # cost = a|x - y| + |v - w| = 1 * 1 + 1 = 2 for every pair at t = 0
    assert_allclose(series.coupled[0], 2.0, atol=1e-14)


def test_kinetic_run_rejects_odd_state_dimension():
    s = KineticScattering(halving_shift, std_normal, jump_rate=2.0,
                          lipschitz=0.5)
    odd = lambda n, rng: rng.normal(size=(n, 3))
    with pytest.raises(InvalidParameter):
        kinetic_run(s, odd, odd, total_time=0.5, n_pairs=8,
                    n_checkpoints=2, seed=0)


# ---------------------------------------------------------------------------
# integrate-and-fire
# ---------------------------------------------------------------------------

def test_neuron_case_a_validation():
    NeuronIIE.case_a(lambda x: np.asarray(x, dtype=float)).validate()
    with pytest.raises(ConstraintViolated):
        NeuronIIE.case_a(lambda x: np.asarray(x) + 1.0).validate()
    with pytest.raises(ConstraintViolated):
        NeuronIIE.case_a(lambda x: -np.asarray(x, dtype=float)).validate()
    bad_birth = NeuronIIE(d_fn=lambda x: np.asarray(x, dtype=float),
                          birth={"family": "dirac", "at": 1.0}, case="a")
    with pytest.raises(ConstraintViolated):
        bad_birth.validate()


def test_neuron_case_b_moment_condition():
    NeuronIIE.case_b(1.0, 1.0, 1.0,
                     {"family": "uniform", "low": 0.0, "high": 1.0}).validate()
    # E z = 1/2 under uniform(0,1), so beta = 0.3 < alpha/2 fails
    with pytest.raises(ConstraintViolated):
        NeuronIIE.case_b(1.0, 0.3, 1.0,
                         {"family": "uniform", "low": 0.0,
                          "high": 1.0}).validate()
    with pytest.raises(InvalidParameter):
        NeuronIIE(d_fn=abs, birth={"family": "dirac", "at": 0.0},
                  case="c").validate()


def test_neuron_run_case_a_decays_and_merges():
    s = NeuronIIE.case_a(lambda x: np.asarray(x, dtype=float))
    u1 = lambda n, rng: rng.uniform(0.0, 1.0, size=n)
    u2 = lambda n, rng: rng.uniform(0.5, 2.0, size=n)
    series = neuron_run(s, u1, u2, total_time=3.0, n_pairs=2000,
                        n_checkpoints=4, seed=0)
    assert series.coupled[-1] < 0.2 * series.coupled[0]
    assert series.meta["merged_fraction"] > 0.5


def test_neuron_run_reproducible():
    s = NeuronIIE.case_b(1.0, 1.0, 1.0,
                         {"family": "uniform", "low": 0.0, "high": 1.0})
    u1 = lambda n, rng: rng.uniform(0.0, 1.0, size=n)
    u2 = lambda n, rng: rng.uniform(0.5, 2.0, size=n)
    kw = dict(total_time=1.0, n_pairs=300, n_checkpoints=3, seed=9)
    a = neuron_run(s, u1, u2, **kw)
    b = neuron_run(s, u1, u2, **kw)
    assert_array_equal(a.coupled, b.coupled)


def test_neuron_single_run_linear_rate_survival_law():
    # d(x) = x with rebirth at 0: a particle started at 1 either has not
    # fired (probability e^{-t}) and still sits at 1, or sits at 0 forever,
    # so the mean state at time t is exactly e^{-t}
    s = NeuronIIE.case_a(lambda x: np.asarray(x, dtype=float))
    times, states = neuron_single_run(s, _dirac(1.0), total_time=1.0,
                                      n=40_000, n_checkpoints=3, seed=3)
    for t, row in zip(times[1:], states[1:]):
        assert_allclose(row.mean(), np.exp(-t), atol=0.012)


def test_neuron_rejects_negative_rates():
    s = NeuronIIE(d_fn=lambda x: np.asarray(x, dtype=float) - 5.0,
                  birth={"family": "dirac", "at": 0.0}, case="a")
    u = lambda n, rng: rng.uniform(0.0, 1.0, size=n)
    with pytest.raises(ConstraintViolated):
        neuron_run(s, u, u, total_time=0.5, n_pairs=50, n_checkpoints=2,
                   seed=0, validate=False)


# ---------------------------------------------------------------------------
# Tanaka collisions and the Kac system
# ---------------------------------------------------------------------------

def test_tanaka_collision_conserves_momentum_and_energy():
    rng = np.random.default_rng(7)
    v, vs, w, ws = rng.normal(size=(4, 500, 3))
    theta = rng.uniform(0.0, np.pi, 500)
    phi = rng.uniform(0.0, 2 * np.pi, 500)
    v2, vs2, w2, ws2 = tanaka_collision(v, vs, w, ws, theta, phi)
    assert_allclose(v2 + vs2, v + vs, atol=1e-12)
    assert_allclose(w2 + ws2, w + ws, atol=1e-12)
    assert_allclose(np.sum(v2**2 + vs2**2, axis=1),
                    np.sum(v**2 + vs**2, axis=1), rtol=1e-12)
    assert_allclose(np.sum(w2**2 + ws2**2, axis=1),
                    np.sum(w**2 + ws**2, axis=1), rtol=1e-12)
    # the relative speed of each pair is preserved
    assert_allclose(np.linalg.norm(v2 - vs2, axis=1),
                    np.linalg.norm(v - vs, axis=1), rtol=1e-12)


def test_tanaka_collision_single_matches_batch():
    rng = np.random.default_rng(8)
    v, vs, w, ws = rng.normal(size=(4, 3, 3))
    theta, phi = 0.8, 2.1
    batch = tanaka_collision(v, vs, w, ws, theta, phi)
    single = tanaka_collision(v[0], vs[0], w[0], ws[0], theta, phi)
    for s_arr, b_arr in zip(single, batch):
        assert s_arr.shape == (3,)
        assert_allclose(s_arr, b_arr[0], rtol=1e-14)


def test_tanaka_collision_degenerate_geometry():
    # parallel relative velocities (cross product vanishes) and a zero
    # relative velocity must both stay finite and conserve invariants
    v = np.array([[1.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    vs = np.array([[-1.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    w = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ws = np.array([[0.5, 0.0, 0.0], [0.0, -1.0, 0.0]])
    out = tanaka_collision(v, vs, w, ws, 1.1, 0.3)
    for arr in out:
        assert np.all(np.isfinite(arr))
    v2, vs2, w2, ws2 = out
    assert_allclose(v2 + vs2, v + vs, atol=1e-12)
    # the zero-relative-velocity pair is left unchanged
    assert_allclose(v2[1], v[1], atol=1e-12)
    assert_allclose(vs2[1], vs[1], atol=1e-12)


def test_kac_validate_angle_support():
    ok = BoltzmannKac(lambda size, rng: rng.uniform(0.0, np.pi, size)
                      * 0.999 + 1e-6, n_pairs=8)
    ok.validate(np.random.default_rng(0))
    bad = BoltzmannKac(lambda size, rng: np.full(size, np.pi), n_pairs=8)
    with pytest.raises(ConstraintViolated):
        bad.validate(np.random.default_rng(0))


def test_kac_run_conserves_and_reproduces():
    angle = lambda size, rng: rng.uniform(1e-9, np.pi - 1e-9, size)
    s = BoltzmannKac(angle, n_pairs=16)
    f1 = lambda n, rng: rng.normal(0.0, 1.0, size=(n, 3))
    f2 = lambda n, rng: rng.normal(1.0, 0.5, size=(n, 3))
    a = kac_run(s, f1, f2, total_time=1.0, n_checkpoints=4, seed=5)
    b = kac_run(s, f1, f2, total_time=1.0, n_checkpoints=4, seed=5)
    assert_array_equal(a.coupled, b.coupled)
    assert a.meta["momentum_drift"] < 1e-12
    assert a.meta["energy_drift"] < 1e-12
    assert a.stderr is None  # single interacting system: no bootstrap band


def test_kac_run_input_validation():
    angle = lambda size, rng: rng.uniform(1e-9, np.pi - 1e-9, size)
    f2d = lambda n, rng: rng.normal(size=(n, 2))
    f3d = lambda n, rng: rng.normal(size=(n, 3))
    with pytest.raises(InvalidParameter):
        kac_run(BoltzmannKac(angle, n_pairs=1), f3d, f3d, total_time=1.0,
                n_checkpoints=3, seed=0)
    with pytest.raises(InvalidParameter):
        kac_run(BoltzmannKac(angle, n_pairs=8), f2d, f2d, total_time=1.0,
                n_checkpoints=3, seed=0)


# ---------------------------------------------------------------------------
# birth laws and the event log
# ---------------------------------------------------------------------------

def test_birth_sample_families():
    rng = np.random.default_rng(12)
    assert_array_equal(birth_sample({"family": "dirac", "at": 2.5}, 4, rng),
                       np.full(4, 2.5))
    u = birth_sample({"family": "uniform", "low": 1.0, "high": 3.0},
                     50_000, rng)
    assert np.all((u >= 1.0) & (u <= 3.0))
    assert_allclose(u.mean(), 2.0, atol=0.02)
    # triangular density 2z on [0,1] has mean 2/3
    d = birth_sample({"family": "density", "fn": lambda z: 2.0 * z,
                      "low": 0.0, "high": 1.0}, 50_000, rng)
    assert_allclose(d.mean(), 2.0 / 3.0, atol=0.01)
    with pytest.raises(InvalidParameter):
        birth_sample({"family": "poisson"}, 3, rng)


def test_write_event_log_roundtrip(tmp_path):
    path = tmp_path / "events.jsonl"
    events = [{"t": 0.5, "pair": 0}, {"t": 1.25, "pair": 3, "gap": 0.125}]
    write_event_log(path, events)
    lines = path.read_text().strip().split("\n")
    assert [json.loads(ln) for ln in lines] == events
