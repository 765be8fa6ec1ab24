"""Event-exact jump-process couplings: shared clocks, shared jump draws.

Four families live here.  Simple scattering resamples the state through a
map with a common noise parameter; kinetic scattering adds ballistic
transport between velocity jumps; the integrate-and-fire (neuron) model
couples two state-dependent firing processes through a three-channel rate
splitting; and the Kac system couples two interacting velocity ensembles
collision-by-collision through a shared collision frame.

All simulations are event-exact: checkpoint states are exact functionals
of the event draws, with no time-discretization error.  Vectorized "round"
loops process, per interval, one event per still-active pair at a time;
exponential memorylessness makes stopping at checkpoint boundaries exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .costs import DFunctionCost, KineticSumCost, PowerCost, _birth_quadrature
from .errors import ConstraintViolated, InvalidParameter
from .measures import EmpiricalMeasure
from .series import DistanceSeries, bootstrap_series

__all__ = [
    "Scattering",
    "KineticScattering",
    "NeuronIIE",
    "BoltzmannKac",
    "scattering_run",
    "scattering_single_run",
    "kinetic_run",
    "neuron_run",
    "neuron_single_run",
    "tanaka_collision",
    "kac_run",
    "birth_sample",
    "write_event_log",
]


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass
class Scattering:
    """Pure-jump resampling x <- phi_inv(x, h) at rate ``jump_rate``.

    ``phi_inv`` must broadcast over numpy arrays in both arguments;
    ``noise_sampler(size, rng)`` draws the jump parameter h from the
    normalized jump law.  ``lipschitz`` is the declared mean contraction
    factor of the map in the p-cost; it is a hypothesis, spot-checked, not
    fitted.
    """

    phi_inv: object
    noise_sampler: object
    jump_rate: float
    lipschitz: float
    p: float = 1.0

    def validate(self, rng: np.random.Generator, n_pairs: int = 1000,
                 n_noise: int = 200, box: float = 3.0) -> None:
        """Spot-check the mean contraction bound on random state pairs."""
        x = rng.uniform(-box, box, (n_pairs, 1))
        y = rng.uniform(-box, box, (n_pairs, 1))
        h = np.asarray(self.noise_sampler(n_noise, rng), dtype=float)
        gaps = np.abs(np.asarray(self.phi_inv(x, h)) -
                      np.asarray(self.phi_inv(y, h))) ** self.p
        mean = gaps.mean(axis=1)
        se = gaps.std(axis=1, ddof=1) / np.sqrt(n_noise)
        bound = self.lipschitz * np.abs(x[:, 0] - y[:, 0]) ** self.p
        if np.any(mean > bound + 3.0 * se + 1e-12):
            worst = float(np.max(mean - bound))
            raise ConstraintViolated(
                f"declared contraction factor {self.lipschitz} fails the "
                f"spot check (worst excess {worst:.3e})")


@dataclass
class KineticScattering:
    """Velocity jumps v <- phi_inv(v, h) at rate K, ballistic x between.

    The decay condition for the weighted cost a|x-y| + |v-w| is
    K >= K L + 1 when a = 1 (boundary admissible) and K > a + K L
    otherwise.
    """

    phi_inv: object
    noise_sampler: object
    jump_rate: float
    lipschitz: float
    a_weight: float = 1.0

    def validate(self) -> None:
        k, ell, a = self.jump_rate, self.lipschitz, self.a_weight
        if a == 1.0:
            if k < k * ell + 1.0 - 1e-12:
                raise ConstraintViolated(
                    f"rate condition K >= K L + 1 fails: {k} < {k * ell + 1}")
        elif k <= a + k * ell:
            raise ConstraintViolated(
                f"rate condition K > a + K L fails: {k} <= {a + k * ell}")


@dataclass
class NeuronIIE:
    """State-dependent firing: x fires at rate d(x) and is reborn z ~ b.

    ``birth`` uses the same declarative form as the dominance checker:
    ``{"family": "dirac", "at": c}``, ``{"family": "uniform", "low": .,
    "high": .}``, or ``{"family": "density", "fn": ., "low": ., "high": .}``.
    Case "a" requires d(0) = 0, d increasing, and birth at zero; case "b"
    is d(x) = alpha x^p + beta with beta >= alpha * int z^p b(dz).
    """

    d_fn: object
    birth: dict
    case: str
    p: float = 1.0
    alpha: float | None = None
    beta: float | None = None

    @classmethod
    def case_a(cls, d_fn, p: float = 1.0) -> "NeuronIIE":
        return cls(d_fn=d_fn, birth={"family": "dirac", "at": 0.0},
                   case="a", p=p)

    @classmethod
    def case_b(cls, alpha: float, beta: float, p: float, birth: dict) -> "NeuronIIE":
        def d_fn(x, _a=alpha, _b=beta, _p=p):
            return _a * np.asarray(x, dtype=float) ** _p + _b
        return cls(d_fn=d_fn, birth=birth, case="b", p=p,
                   alpha=alpha, beta=beta)

    def cost(self):
        if self.case == "a":
            return DFunctionCost(self.d_fn, self.p)
        return DFunctionCost(lambda x: np.asarray(x, dtype=float), self.p)

    def validate(self, grid_high: float = 5.0, grid_points: int = 201) -> None:
        if self.case not in ("a", "b"):
            raise InvalidParameter("case must be 'a' or 'b'")
        if self.case == "a":
            grid = np.linspace(0.0, grid_high, grid_points)
            vals = np.asarray(self.d_fn(grid), dtype=float)
            if abs(vals[0]) > 1e-12:
                raise ConstraintViolated("case (a) requires d(0) = 0")
            if np.any(np.diff(vals) < -1e-12):
                raise ConstraintViolated("case (a) requires d increasing")
            if self.birth.get("family") != "dirac" \
                    or abs(float(self.birth.get("at", 0.0))) > 0:
                raise ConstraintViolated("case (a) requires rebirth at zero")
        else:
            if self.alpha is None or self.beta is None:
                raise InvalidParameter("case (b) requires alpha and beta")
            z, m = _birth_quadrature(self.birth, 256)
            moment = float(m @ np.abs(z) ** self.p)
            if self.beta < self.alpha * moment - 1e-12:
                raise ConstraintViolated(
                    f"case (b) moment condition fails: beta {self.beta} < "
                    f"alpha * E z^p = {self.alpha * moment:.6f}")


@dataclass
class BoltzmannKac:
    """Kac velocity ensemble with angle law B on (0, pi).

    ``angle_sampler(size, rng)`` draws the polar collision angle; the
    azimuth is uniform.  Each unordered particle pair collides at rate
    2/N (one normalization choice; monotonicity claims are clock-free).
    """

    angle_sampler: object
    n_pairs: int = 64

    def validate(self, rng: np.random.Generator, n_draws: int = 1000) -> None:
        th = np.asarray(self.angle_sampler(n_draws, rng), dtype=float)
        if np.any(th <= 0.0) or np.any(th >= np.pi):
            raise ConstraintViolated("angle draws must lie in (0, pi)")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _draw_cloud(source, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(source, EmpiricalMeasure):
        idx = rng.choice(source.size, size=n, p=source.weights)
        out = source.points[idx].copy()
    else:
        out = np.asarray(source(n, rng), dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    return out


def _interval_grid(total_time: float, n_checkpoints: int) -> np.ndarray:
    if total_time <= 0:
        raise InvalidParameter("total_time must be positive")
    if n_checkpoints < 2:
        raise InvalidParameter("need at least 2 checkpoints")
    return np.linspace(0.0, total_time, n_checkpoints)


def _series(scenario_id, seed, times, pair_costs, boot_rng, n_resamples,
            cost_label, meta) -> DistanceSeries:
    mean, lo, hi, se = bootstrap_series(pair_costs, boot_rng, n_resamples)
    return DistanceSeries(scenario_id=scenario_id, seed=seed, times=times,
                          coupled=mean, ci_low=lo, ci_high=hi, stderr=se,
                          cost_label=cost_label, meta=meta)


def birth_sample(birth: dict, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from a declarative birth law (dirac / uniform / density)."""
    family = birth.get("family")
    if family == "dirac":
        return np.full(size, float(birth.get("at", 0.0)))
    if family == "uniform":
        return rng.uniform(float(birth["low"]), float(birth["high"]), size)
    if family == "density":
        low, high = float(birth["low"]), float(birth["high"])
        grid = np.linspace(low, high, 4097)
        dens = np.asarray(birth["fn"](grid), dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2.0
                                               * np.diff(grid))])
        cdf /= cdf[-1]
        return np.interp(rng.random(size), cdf, grid)
    raise InvalidParameter(f"unknown birth family {family!r}")


def write_event_log(path, events: list[dict]) -> None:
    """Write one JSON record per line (the pathwise-replay format)."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev) + "\n")


# ---------------------------------------------------------------------------
# simple scattering
# ---------------------------------------------------------------------------

def _scatter_interval(s: Scattering, x, y, delta, rng):
    """Advance all pairs by one interval: Poisson counts, common h per jump."""
    counts = rng.poisson(s.jump_rate * delta, x.shape[0])
    left = counts.copy()
    while True:
        mask = left > 0
        if not mask.any():
            break
        h = np.asarray(s.noise_sampler(int(mask.sum()), rng), dtype=float)
        x[mask] = np.asarray(s.phi_inv(x[mask], h), dtype=float)
        y[mask] = np.asarray(s.phi_inv(y[mask], h), dtype=float)
        left[mask] -= 1
    return x, y


def scattering_run(s: Scattering, u1_0, u2_0, total_time: float, n_pairs: int,
                   n_checkpoints: int, seed: int, scenario_id: str = "scattering",
                   pairing: str = "independent", n_resamples: int = 200,
                   validate: bool = True) -> DistanceSeries:
    """Couple two scattering processes through a shared clock and shared h."""
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng, boot_rng, check_rng = map(np.random.default_rng, ss.spawn(4))
    if validate:
        s.validate(check_rng)
    x = _draw_cloud(u1_0, n_pairs, init_rng)[:, 0]
    y = _draw_cloud(u2_0, n_pairs, init_rng)[:, 0]
    if pairing == "quantile":
        x, y = np.sort(x), np.sort(y)
    elif pairing != "independent":
        raise InvalidParameter(f"unknown pairing {pairing!r}")

    times = _interval_grid(total_time, n_checkpoints)
    cost = PowerCost(s.p)
    pair_costs = np.empty((n_checkpoints, n_pairs))
    pair_costs[0] = cost.pairwise(x, y)
    for k in range(1, n_checkpoints):
        x, y = _scatter_interval(s, x, y, times[k] - times[k - 1], path_rng)
        pair_costs[k] = cost.pairwise(x, y)
    return _series(scenario_id, seed, times, pair_costs, boot_rng, n_resamples,
                   f"mean |x-y|^{s.p}/{s.p}",
                   {"n_pairs": n_pairs, "jump_rate": s.jump_rate,
                    "lipschitz": s.lipschitz, "pairing": pairing})


def scattering_single_run(s: Scattering, u0, total_time: float, n: int,
                          n_checkpoints: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uncoupled single-marginal simulation; returns (times, states (K, n)).

    Used as the oracle that the coupled run's marginals follow the same
    law as the plain process.
    """
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng = map(np.random.default_rng, ss.spawn(2))
    x = _draw_cloud(u0, n, init_rng)[:, 0]
    times = _interval_grid(total_time, n_checkpoints)
    states = np.empty((n_checkpoints, n))
    states[0] = x
    for k in range(1, n_checkpoints):
        counts = path_rng.poisson(s.jump_rate * (times[k] - times[k - 1]), n)
        left = counts.copy()
        while True:
            mask = left > 0
            if not mask.any():
                break
            h = np.asarray(s.noise_sampler(int(mask.sum()), path_rng), dtype=float)
            x[mask] = np.asarray(s.phi_inv(x[mask], h), dtype=float)
            left[mask] -= 1
        states[k] = x
    return times, states


# ---------------------------------------------------------------------------
# kinetic scattering
# ---------------------------------------------------------------------------

def kinetic_run(s: KineticScattering, f1_0, f2_0, total_time: float,
                n_pairs: int, n_checkpoints: int, seed: int,
                scenario_id: str = "kinetic", n_resamples: int = 200,
                log_pairs: int = 0) -> DistanceSeries:
    """Couple two kinetic scattering flows: shared jump times and shared h.

    States are stacked rows (position, velocity) of equal dimension.
    Within each checkpoint interval, per-pair jump times are the order
    statistics of uniforms given a Poisson count; every pair advances
    ballistically between its own jumps.  The first ``log_pairs`` pairs
    emit one event record per velocity jump (time, position and velocity
    gaps before/after) for pathwise replay.
    """
    s.validate()
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng, boot_rng = map(np.random.default_rng, ss.spawn(3))
    z1 = _draw_cloud(f1_0, n_pairs, init_rng)
    z2 = _draw_cloud(f2_0, n_pairs, init_rng)
    if z1.shape[1] % 2:
        raise InvalidParameter("kinetic states must stack (position, velocity)")
    dp = z1.shape[1] // 2
    x, v = z1[:, :dp].copy(), z1[:, dp:].copy()
    y, w = z2[:, :dp].copy(), z2[:, dp:].copy()

    cost = KineticSumCost(s.a_weight, dp)
    times = _interval_grid(total_time, n_checkpoints)
    pair_costs = np.empty((n_checkpoints, n_pairs))
    pair_costs[0] = cost.pairwise(np.hstack([x, v]), np.hstack([y, w]))
    events: list[dict] = []

    def log_event(t_abs, idx):
        if idx >= log_pairs:
            return None
        return {"t": float(t_abs), "pair": int(idx),
                "pos_gap": float(np.linalg.norm(x[idx] - y[idx])),
                "vel_gap_before": float(np.linalg.norm(v[idx] - w[idx]))}

    for k in range(1, n_checkpoints):
        delta = times[k] - times[k - 1]
        counts = path_rng.poisson(s.jump_rate * delta, n_pairs)
        max_n = int(counts.max())
        if max_n > 0:
            u = path_rng.random((n_pairs, max_n))
            u[np.arange(max_n)[None, :] >= counts[:, None]] = 1.0
            u.sort(axis=1)
            jump_t = np.hstack([u * delta, np.full((n_pairs, 1), delta)])
        else:
            jump_t = np.full((n_pairs, 1), delta)
        durations = np.diff(jump_t, prepend=0.0, axis=1)
        for r in range(durations.shape[1]):
            tau = durations[:, r][:, None]
            x += v * tau
            y += w * tau
            if r < max_n:
                mask = counts > r
                if not mask.any():
                    continue
                pending = None
                if log_pairs:
                    pending = [log_event(times[k - 1] + jump_t[i, r], i)
                               for i in np.nonzero(mask[:log_pairs])[0]]
                h = np.asarray(s.noise_sampler(int(mask.sum()), path_rng),
                               dtype=float)
                if h.ndim == 1 and dp == 1:
                    h = h[:, None]
                v[mask] = np.asarray(s.phi_inv(v[mask], h), dtype=float)
                w[mask] = np.asarray(s.phi_inv(w[mask], h), dtype=float)
                if pending:
                    for rec in pending:
                        if rec is not None:
                            i = rec["pair"]
                            rec["vel_gap_after"] = float(
                                np.linalg.norm(v[i] - w[i]))
                            events.append(rec)
        pair_costs[k] = cost.pairwise(np.hstack([x, v]), np.hstack([y, w]))

    meta = {"n_pairs": n_pairs, "jump_rate": s.jump_rate,
            "lipschitz": s.lipschitz, "a_weight": s.a_weight}
    if log_pairs:
        meta["events"] = events
    return _series(scenario_id, seed, times, pair_costs, boot_rng, n_resamples,
                   f"mean {s.a_weight}|x-y| + |v-w|", meta)


# ---------------------------------------------------------------------------
# integrate-and-fire coupling
# ---------------------------------------------------------------------------

def _neuron_interval(s: NeuronIIE, x, y, delta, rng):
    """Race the three-channel clocks of every pair across one interval."""
    n = x.shape[0]
    t_rem = np.full(n, delta)
    active = np.ones(n, dtype=bool)
    while active.any():
        idx = np.nonzero(active)[0]
        dx = np.asarray(s.d_fn(x[idx]), dtype=float)
        dy = np.asarray(s.d_fn(y[idx]), dtype=float)
        if np.any(dx < -1e-12) or np.any(dy < -1e-12):
            raise ConstraintViolated("firing rates must be nonnegative")
        rate_min = np.minimum(dx, dy)
        rate_x = np.maximum(dx - dy, 0.0)
        rate_y = np.maximum(dy - dx, 0.0)
        total = np.maximum(dx, dy)
        if np.any(np.abs(rate_min + rate_x + rate_y - total)
                  > 1e-12 * np.maximum(1.0, total)):
            raise ConstraintViolated("channel rates do not sum to the max rate")
        silent = total <= 0.0
        if silent.any():
            active[idx[silent]] = False
            keep = ~silent
            idx = idx[keep]
            if idx.size == 0:
                break
            rate_min, rate_x, total = rate_min[keep], rate_x[keep], total[keep]
        tau = rng.standard_exponential(idx.size) / total
        done = tau >= t_rem[idx]
        if done.any():
            active[idx[done]] = False
        fire = ~done
        idx = idx[fire]
        if idx.size == 0:
            continue
        t_rem[idx] -= tau[fire]
        u = rng.random(idx.size) * total[fire]
        common = u < rate_min[fire]
        xonly = (~common) & (u < rate_min[fire] + rate_x[fire])
        yonly = ~(common | xonly)
        if common.any():
            z = birth_sample(s.birth, int(common.sum()), rng)
            x[idx[common]] = z
            y[idx[common]] = z
        if xonly.any():
            x[idx[xonly]] = birth_sample(s.birth, int(xonly.sum()), rng)
        if yonly.any():
            y[idx[yonly]] = birth_sample(s.birth, int(yonly.sum()), rng)
    return x, y


def neuron_run(s: NeuronIIE, u1_0, u2_0, total_time: float, n_pairs: int,
               n_checkpoints: int, seed: int, scenario_id: str = "neuron",
               pairing: str = "independent", n_resamples: int = 200,
               validate: bool = True) -> DistanceSeries:
    """Three-channel coupling of two firing ensembles.

    The common channel (rate min(d(x), d(y))) moves both members to the
    same birth draw — after it fires, a pair has merged and never
    separates; the two one-sided channels carry the rate excess.
    """
    if validate:
        s.validate()
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng, boot_rng = map(np.random.default_rng, ss.spawn(3))
    x = _draw_cloud(u1_0, n_pairs, init_rng)[:, 0]
    y = _draw_cloud(u2_0, n_pairs, init_rng)[:, 0]
    if pairing == "quantile":
        x, y = np.sort(x), np.sort(y)
    elif pairing != "independent":
        raise InvalidParameter(f"unknown pairing {pairing!r}")

    cost = s.cost()
    times = _interval_grid(total_time, n_checkpoints)
    pair_costs = np.empty((n_checkpoints, n_pairs))
    pair_costs[0] = cost.pairwise(x, y)
    for k in range(1, n_checkpoints):
        x, y = _neuron_interval(s, x, y, times[k] - times[k - 1], path_rng)
        pair_costs[k] = cost.pairwise(x, y)
    return _series(scenario_id, seed, times, pair_costs, boot_rng, n_resamples,
                   f"mean |d-cost| case ({s.case})",
                   {"n_pairs": n_pairs, "case": s.case, "pairing": pairing,
                    "merged_fraction": float(np.mean(x == y))})


def neuron_single_run(s: NeuronIIE, u0, total_time: float, n: int,
                      n_checkpoints: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uncoupled firing ensemble; returns (times, states (K, n)) as oracle."""
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng = map(np.random.default_rng, ss.spawn(2))
    x = _draw_cloud(u0, n, init_rng)[:, 0]
    times = _interval_grid(total_time, n_checkpoints)
    states = np.empty((n_checkpoints, n))
    states[0] = x
    for k in range(1, n_checkpoints):
        delta = times[k] - times[k - 1]
        t_rem = np.full(n, delta)
        active = np.ones(n, dtype=bool)
        while active.any():
            idx = np.nonzero(active)[0]
            rate = np.asarray(s.d_fn(x[idx]), dtype=float)
            silent = rate <= 0.0
            if silent.any():
                active[idx[silent]] = False
                idx = idx[~silent]
                if idx.size == 0:
                    break
                rate = rate[~silent]
            tau = path_rng.standard_exponential(idx.size) / rate
            done = tau >= t_rem[idx]
            if done.any():
                active[idx[done]] = False
            idx = idx[~done]
            if idx.size == 0:
                continue
            t_rem[idx] -= tau[~done]
            x[idx] = birth_sample(s.birth, idx.size, path_rng)
        states[k] = x
    return times, states


# ---------------------------------------------------------------------------
# Tanaka collision geometry and the Kac system
# ---------------------------------------------------------------------------

def _fallback_perp(e: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to each row of e.

    Projects out the smallest-index coordinate axis that is not nearly
    parallel to e; rows of zero vectors get the first axis's fallback.
    """
    c0 = np.zeros_like(e)
    c0[:, 0] = 1.0
    c0 -= e[:, 0:1] * e
    n0 = np.linalg.norm(c0, axis=1)
    c1 = np.zeros_like(e)
    c1[:, 1] = 1.0
    c1 -= e[:, 1:2] * e
    n1 = np.linalg.norm(c1, axis=1)
    use0 = n0 > 1e-6
    out = np.where(use0[:, None], c0 / np.where(use0, n0, 1.0)[:, None],
                   c1 / np.maximum(n1, 1e-300)[:, None])
    return out


def tanaka_collision(v, v_star, w, w_star, theta, phi):
    """Coupled elastic collision of two pairs through a shared frame.

    The scattered directions are

        sigma = cos(theta) e_v + sin(theta) (I cos(phi) + I1 sin(phi)),
        omega = cos(theta) e_w + sin(theta) (I cos(phi) + I2 sin(phi)),

    where e_v, e_w are the unit relative velocities, I is the normalized
    common cross product e_v x e_w, and I1 = e_v x I, I2 = e_w x I
    complete the two direct orthonormal frames.  Post-collision states are
    v' = (v+v*)/2 + |v-v*| sigma / 2 (and the star/primed partners), which
    conserve momentum and kinetic energy of each pair exactly.

    Degenerate geometry never aborts: parallel relative velocities use a
    deterministic fallback axis for I; a zero relative velocity leaves its
    own pair unchanged while the other side keeps a valid frame.

    Inputs may be single 3-vectors or (B, 3) batches with scalar or (B,)
    angles.
    """
    single = np.asarray(v, dtype=float).ndim == 1
    v = np.atleast_2d(np.asarray(v, dtype=float))
    v_star = np.atleast_2d(np.asarray(v_star, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    w_star = np.atleast_2d(np.asarray(w_star, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    b = v.shape[0]
    if theta.shape[0] == 1 and b > 1:
        theta = np.repeat(theta, b)
    if phi.shape[0] == 1 and b > 1:
        phi = np.repeat(phi, b)

    rel_v = v - v_star
    rel_w = w - w_star
    rv = np.linalg.norm(rel_v, axis=1)
    rw = np.linalg.norm(rel_w, axis=1)
    ev = rel_v / np.maximum(rv, 1e-300)[:, None]
    ew = rel_w / np.maximum(rw, 1e-300)[:, None]

    cross = np.cross(ev, ew)
    nc = np.linalg.norm(cross, axis=1)
    regular = (nc > 1e-12) & (rv > 0) & (rw > 0)
    base = np.where((rv > 0)[:, None], ev, ew)
    i_vec = np.where(regular[:, None],
                     cross / np.maximum(nc, 1e-300)[:, None],
                     _fallback_perp(base))
    i1 = np.cross(ev, i_vec)
    i2 = np.cross(ew, i_vec)

    ct, st = np.cos(theta)[:, None], np.sin(theta)[:, None]
    cp, sp = np.cos(phi)[:, None], np.sin(phi)[:, None]
    sigma = ct * ev + st * (i_vec * cp + i1 * sp)
    omega = ct * ew + st * (i_vec * cp + i2 * sp)

    center_v = (v + v_star) / 2.0
    center_w = (w + w_star) / 2.0
    half_v = rv[:, None] * sigma / 2.0
    half_w = rw[:, None] * omega / 2.0
    out = (center_v + half_v, center_v - half_v,
           center_w + half_w, center_w - half_w)
    if single and b == 1:
        return tuple(o[0] for o in out)
    return out


def kac_run(s: BoltzmannKac, f1_0, f2_0, total_time: float, n_checkpoints: int,
            seed: int, scenario_id: str = "kac",
            validate: bool = True) -> DistanceSeries:
    """Couple two Kac velocity ensembles collision-by-collision.

    Both systems share the event times, the colliding index pair, and the
    angles (theta, phi); the collision itself runs through the shared
    Tanaka frame.  The series value is the squared-gap cost
    sum |v_i - w_i|^2 / (2N).  A single interacting system has no
    independent pairs to resample, so no bootstrap band is attached;
    pooling across replicas supplies the error bar.
    """
    ss = np.random.SeedSequence(seed)
    init_rng, path_rng, check_rng = map(np.random.default_rng, ss.spawn(3))
    if validate:
        s.validate(check_rng)
    n = s.n_pairs
    if n < 2:
        raise InvalidParameter("need at least two particles")
    v = _draw_cloud(f1_0, n, init_rng)
    w = _draw_cloud(f2_0, n, init_rng)
    if v.shape[1] != 3:
        raise InvalidParameter("Kac velocities are 3-vectors")

    times = _interval_grid(total_time, n_checkpoints)
    vals = np.empty(n_checkpoints)
    mom_drift = np.zeros(n_checkpoints)
    en_drift = np.zeros(n_checkpoints)
    mom0_v, en0_v = v.sum(axis=0), float(np.sum(v * v))
    mom0_w, en0_w = w.sum(axis=0), float(np.sum(w * w))

    def cost_now():
        return float(np.sum((v - w) ** 2) / (2.0 * n))

    def drift_now():
        dm = max(np.max(np.abs(v.sum(axis=0) - mom0_v)),
                 np.max(np.abs(w.sum(axis=0) - mom0_w)))
        de = max(abs(float(np.sum(v * v)) - en0_v),
                 abs(float(np.sum(w * w)) - en0_w))
        return dm, de

    vals[0] = cost_now()
    total_rate = n - 1.0
    t = 0.0
    slot = 1
    while slot < n_checkpoints:
        t += path_rng.exponential(1.0 / total_rate)
        while slot < n_checkpoints and times[slot] <= t:
            vals[slot] = cost_now()
            mom_drift[slot], en_drift[slot] = drift_now()
            slot += 1
        if slot >= n_checkpoints:
            break
        i, j = path_rng.choice(n, size=2, replace=False)
        theta = float(np.asarray(s.angle_sampler(1, path_rng))[0])
        phi = path_rng.uniform(0.0, 2.0 * np.pi)
        vi, vj, wi, wj = tanaka_collision(v[i], v[j], w[i], w[j], theta, phi)
        v[i], v[j], w[i], w[j] = vi, vj, wi, wj

    return DistanceSeries(
        scenario_id=scenario_id, seed=seed, times=times, coupled=vals,
        cost_label="sum |v-w|^2 / 2N",
        meta={"n_particles": n, "momentum_drift": float(mom_drift.max()),
              "energy_drift": float(en_drift.max())},
    )
