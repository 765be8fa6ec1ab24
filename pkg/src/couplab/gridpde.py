"""Finite-difference solvers for doubled-variable coupling equations.

A coupling density v(x, y, t) carries a pair of 1D evolutions in its two
marginals.  The degenerate diffusion operator of the synchronous coupling,
Dxx + Dyy + 2 Dxy, only diffuses along the diagonal x + y: the production
scheme discretizes it as a flux form on diagonals, which conserves mass by
telescoping and preserves nonnegativity under the CFL bound.  Variable
coefficients add the mixed term 2 DxDy[s(x)s(y)v]; its stencil is chosen
so that s = 1 collapses, term by term, to the constant-coefficient
diagonal stencil.

Also here: the lattice heat equation du/dt = [u(x+h)+u(x-h)-2u]/h^2 with
its transport-duality experiment, and Crank-Nicolson reference solvers
used as independent oracles for marginal checks.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .costs import PowerCost, omega_eps
from .errors import CFLViolation, InvalidParameter
from .measures import EmpiricalMeasure, GridDensity
from .series import DistanceSeries
from .transport import potential_feasibility_gap, wasserstein_lp

__all__ = [
    "CouplingGridRun",
    "solve_coupling_heat",
    "solve_coupling_fp",
    "solve_coupling_varcoef",
    "solve_discrete_heat",
    "discrete_duality_experiment",
    "reference_heat_cn",
    "reference_fp_cn",
    "save_grid_snapshot",
    "load_grid_snapshot",
]


@dataclass
class CouplingGridRun:
    """A finished 2D coupling solve with its checkpoint monitors.

    ``monitors`` maps names to checkpoint-indexed arrays: "times", "mass",
    "min_v", "cost_integral", "marginal_gap_l1" (L1 distance between the
    marginals of v and the companion 1D solves), and for variable
    coefficients "omega_integral" (the regularized-cost integral whose
    growth the theory bounds).
    """

    v: GridDensity
    u1: GridDensity
    u2: GridDensity
    time: float
    dx: float
    dt: float
    monitors: dict = field(default_factory=dict)


def _grid_2d(v0: GridDensity):
    if v0.values.ndim != 2:
        raise InvalidParameter("coupling solvers need a 2D density")
    nx, ny = v0.values.shape
    x = v0.origin[0] + v0.spacing * np.arange(nx)
    y = v0.origin[1] + v0.spacing * np.arange(ny)
    return x, y


def _marginals(values: np.ndarray, dx: float):
    return values.sum(axis=1) * dx, values.sum(axis=0) * dx


def _checkpoints(total_time: float, dt: float, n_checkpoints: int):
    if total_time <= 0 or dt <= 0:
        raise InvalidParameter("total_time and dt must be positive")
    n_steps = max(1, int(round(total_time / dt)))
    dt_eff = total_time / n_steps
    idx = np.unique(np.round(np.linspace(0, n_steps, n_checkpoints)).astype(int))
    return n_steps, dt_eff, idx


def _diag_flux_increment(v: np.ndarray) -> np.ndarray:
    """Divergence of diagonal fluxes F_ij = v[i+1,j+1] - v[i,j].

    Each flux enters one cell and leaves its diagonal neighbor, so the
    total increment sums to zero exactly and the stencil at interior
    cells is the second difference along the main diagonal direction.
    """
    f = v[1:, 1:] - v[:-1, :-1]
    div = np.zeros_like(v)
    div[:-1, :-1] += f
    div[1:, 1:] -= f
    return div


def _diag_reference_increment(v: np.ndarray) -> np.ndarray:
    """Same operator assembled diagonal-by-diagonal (cross-check path)."""
    nx, ny = v.shape
    div = np.zeros_like(v)
    for off in range(-(nx - 1), ny):
        d = np.diagonal(v, offset=off)
        if d.size < 2:
            continue
        f = np.diff(d)
        inc = np.zeros(d.size)
        inc[:-1] += f
        inc[1:] -= f
        if off >= 0:
            i = np.arange(d.size)
            div[i, i + off] += inc
        else:
            i = np.arange(d.size)
            div[i - off, i] += inc
    return div


def _heat_1d_increment(u: np.ndarray) -> np.ndarray:
    """Zero-flux second difference on a 1D array (mass-exact)."""
    f = np.diff(u)
    div = np.zeros_like(u)
    div[:-1] += f
    div[1:] -= f
    return div


def _run_coupling(v0: GridDensity, total_time: float, dt: float,
                  n_checkpoints: int, cost, increment_2d, increment_1d,
                  extra_monitors=None, allow_negative: bool = False) -> CouplingGridRun:
    """Shared stepping / monitoring loop of the three coupling solvers."""
    x, y = _grid_2d(v0)
    dx = v0.spacing
    v = v0.values.astype(float).copy()
    u1, u2 = _marginals(v, dx)
    cost_grid = cost.cross(x, y)

    n_steps, dt_eff, ck_idx = _checkpoints(total_time, dt, n_checkpoints)
    mon = {name: [] for name in
           ("times", "mass", "min_v", "cost_integral", "marginal_gap_l1")}
    extra_names = tuple(extra_monitors or ())
    for name in extra_names:
        mon[name] = []

    def record(t):
        m1, m2 = _marginals(v, dx)
        mon["times"].append(t)
        mon["mass"].append(v.sum() * dx * dx)
        mon["min_v"].append(float(v.min()))
        mon["cost_integral"].append(float(np.sum(cost_grid * v)) * dx * dx)
        mon["marginal_gap_l1"].append(
            float(np.sum(np.abs(m1 - u1)) * dx + np.sum(np.abs(m2 - u2)) * dx))
        for name, fn in (extra_monitors or {}).items():
            mon[name].append(fn(v))

    slot = 0
    if ck_idx[0] == 0:
        record(0.0)
        slot = 1
    for k in range(1, n_steps + 1):
        v += increment_2d(v) * dt_eff
        u1 += increment_1d(u1, 0) * dt_eff
        u2 += increment_1d(u2, 1) * dt_eff
        if slot < len(ck_idx) and ck_idx[slot] == k:
            record(k * dt_eff)
            slot += 1

    mon = {k2: np.asarray(arr) for k2, arr in mon.items()}
    return CouplingGridRun(
        v=GridDensity(v, v0.origin, dx, allow_negative=allow_negative),
        u1=GridDensity(np.maximum(u1, 0.0) if not allow_negative else u1,
                       (v0.origin[0],), dx, allow_negative=allow_negative),
        u2=GridDensity(np.maximum(u2, 0.0) if not allow_negative else u2,
                       (v0.origin[1],), dx, allow_negative=allow_negative),
        time=total_time, dx=dx, dt=dt_eff, monitors=mon)


def solve_coupling_heat(v0: GridDensity, total_time: float, dt: float | None = None,
                        n_checkpoints: int = 6, cost=None,
                        scheme: str = "flux") -> CouplingGridRun:
    """Explicit solve of dv/dt = Dxx v + Dyy v + 2 Dxy v (diagonal diffusion).

    ``scheme`` selects the production flux form or the per-diagonal
    reference assembly; both discretize the identical operator and agree
    to round-off.  Requires dt <= dx^2/8.
    """
    dx = v0.spacing
    if dt is None:
        dt = dx * dx / 8.0
    if dt > dx * dx / 8.0 * (1.0 + 1e-12):
        raise CFLViolation(f"dt = {dt} exceeds dx^2/8 = {dx * dx / 8.0}")
    if scheme not in ("flux", "diagonal"):
        raise InvalidParameter("scheme must be 'flux' or 'diagonal'")
    inc2 = _diag_flux_increment if scheme == "flux" else _diag_reference_increment
    lam = 1.0 / (dx * dx)

    def increment_2d(v):
        return inc2(v) * lam

    def increment_1d(u, _side):
        return _heat_1d_increment(u) * lam

    return _run_coupling(v0, total_time, dt, n_checkpoints,
                         cost or PowerCost(2), increment_2d, increment_1d)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0,
                    np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _upwind_div(u: np.ndarray, speed: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """Upwind divergence increment for du/dt = -d(speed*u)/dx along one axis.

    Second-order MUSCL reconstruction with the minmod limiter on top of
    donor-cell upwinding; ``speed`` holds interface values (length n-1
    along the axis).  Boundary fluxes vanish, so the increment telescopes
    to zero and total mass is conserved to round-off.
    """
    u = np.moveaxis(u, axis, 0)
    slope = np.zeros_like(u)
    slope[1:-1] = _minmod(u[1:-1] - u[:-2], u[2:] - u[1:-1])
    left = u[:-1] + 0.5 * slope[:-1]
    right = u[1:] - 0.5 * slope[1:]
    shape = (u.shape[0] - 1,) + (1,) * (u.ndim - 1)
    pos = np.maximum(speed, 0.0).reshape(shape)
    neg = np.minimum(speed, 0.0).reshape(shape)
    f = pos * left + neg * right
    div = np.zeros_like(u)
    div[:-1] -= f
    div[1:] += f
    return np.moveaxis(div, 0, axis) / dx


def solve_coupling_fp(v0: GridDensity, drift, total_time: float,
                      dt: float | None = None, n_checkpoints: int = 6,
                      cost=None) -> CouplingGridRun:
    """Coupled drift-diffusion: heat part plus div_x(V(x)v) + div_y(V(y)v).

    The sign convention matches the process dX = V(X) dt + sqrt(2) dB,
    whose density solves du/dt = u'' - (V u)'; the advection flux V v is
    upwinded donor-cell at interfaces.  V = 0 reproduces the heat solver's
    arithmetic exactly.  CFL: dt <= dx^2/8 and dt max|V| <= dx/8.
    """
    x, y = _grid_2d(v0)
    dx = v0.spacing
    vx = np.asarray(drift(x), dtype=float)
    vy = np.asarray(drift(y), dtype=float)
    vmax = max(float(np.max(np.abs(vx))), float(np.max(np.abs(vy))), 1e-300)
    if dt is None:
        dt = min(dx * dx / 8.0, dx / (8.0 * vmax))
    if dt > dx * dx / 8.0 * (1.0 + 1e-12) or dt * vmax > dx / 8.0 * (1.0 + 1e-12):
        raise CFLViolation("dt violates the advection-diffusion CFL bound")
    lam = 1.0 / (dx * dx)
    sx = 0.5 * (vx[1:] + vx[:-1])
    sy = 0.5 * (vy[1:] + vy[:-1])

    def increment_2d(v):
        out = _diag_flux_increment(v) * lam
        if vmax > 1e-250:
            out = out + _upwind_div(v, sx, dx, axis=0) \
                      + _upwind_div(v, sy, dx, axis=1)
        return out

    def increment_1d(u, side):
        out = _heat_1d_increment(u) * lam
        if vmax > 1e-250:
            out = out + _upwind_div(u, sx if side == 0 else sy, dx, axis=0)
        return out

    return _run_coupling(v0, total_time, dt, n_checkpoints,
                         cost or PowerCost(2), increment_2d, increment_1d)


def solve_coupling_varcoef(v0: GridDensity, sigma, total_time: float,
                           dt: float | None = None, n_checkpoints: int = 6,
                           cost=None, omega_epsilon: float = 0.1) -> CouplingGridRun:
    """Coupled variable-coefficient diffusion.

        dv/dt = Dxx[a(x)v] + Dyy[a(y)v] + 2 DxDy[s(x)s(y)v],  a = s^2.

    The mixed term is assembled as a difference of flux-form operators,

        2 DxDy m  ~  Diag(m) - Dxx(m) - Dyy(m),   m = s(x) s(y) v,

    with Diag the diagonal second difference and Dxx, Dyy the axis second
    differences, all with zero-flux closures.  At interior cells this is
    the second-order cross stencil m(i+1,j+1) + m(i-1,j-1) + 2m
    - m(i+1,j) - m(i-1,j) - m(i,j+1) - m(i,j-1); written this way every
    piece telescopes (mass is conserved to round-off) and s = 1 cancels
    the axis terms of m against those of a*v exactly, collapsing the whole
    operator to the heat solver's arithmetic bit for bit.  Nonnegativity
    is not guaranteed (monitored, not enforced).  Requires
    dt <= dx^2 / (8 max a).
    """
    x, y = _grid_2d(v0)
    dx = v0.spacing
    sig_x = np.asarray(sigma(x), dtype=float)
    sig_y = np.asarray(sigma(y), dtype=float)
    a_x, a_y = sig_x**2, sig_y**2
    amax = max(float(a_x.max()), float(a_y.max()))
    if dt is None:
        dt = dx * dx / (8.0 * amax)
    if dt > dx * dx / (8.0 * amax) * (1.0 + 1e-12):
        raise CFLViolation("dt exceeds dx^2 / (8 max sigma^2)")
    lam = 1.0 / (dx * dx)

    def _axis_flux(arr, axis):
        f = np.diff(arr, axis=axis)
        div = np.zeros_like(arr)
        sl_lo = [slice(None)] * 2
        sl_hi = [slice(None)] * 2
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        div[tuple(sl_lo)] += f
        div[tuple(sl_hi)] -= f
        return div

    def increment_2d(v):
        ax_v = a_x[:, None] * v
        ay_v = a_y[None, :] * v
        m = sig_x[:, None] * sig_y[None, :] * v
        out = _diag_flux_increment(m)
        out += _axis_flux(ax_v, 0) - _axis_flux(m, 0)
        out += _axis_flux(ay_v, 1) - _axis_flux(m, 1)
        return out * lam

    def increment_1d(u, side):
        au = (a_x if side == 0 else a_y) * u
        return _heat_1d_increment(au) * lam

    xg, yg = np.meshgrid(x, y, indexing="ij")
    omega_grid = omega_eps(np.abs(xg - yg), omega_epsilon)[0]

    def omega_monitor(v):
        return float(np.sum(omega_grid * v)) * dx * dx

    return _run_coupling(v0, total_time, dt, n_checkpoints,
                         cost or PowerCost(2), increment_2d, increment_1d,
                         extra_monitors={"omega_integral": omega_monitor},
                         allow_negative=True)


# ---------------------------------------------------------------------------
# lattice heat equation and duality experiment
# ---------------------------------------------------------------------------

def _lattice_rhs(u: np.ndarray, h: float) -> np.ndarray:
    return _heat_1d_increment(u) / (h * h)


def solve_discrete_heat(u0: GridDensity, total_time: float,
                        n_checkpoints: int = 6,
                        dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """RK4 integration of du/dt = [u(x+h) + u(x-h) - 2u(x)] / h^2.

    Reflecting (zero-flux) ends conserve mass exactly.  Returns
    (checkpoint times, states with shape (checkpoints, sites)).
    Requires dt <= h^2/4.
    """
    if u0.values.ndim != 1:
        raise InvalidParameter("lattice solver needs a 1D density")
    h = u0.spacing
    if dt is None:
        dt = h * h / 4.0
    if dt > h * h / 4.0 * (1.0 + 1e-12):
        raise CFLViolation(f"dt = {dt} exceeds h^2/4 = {h * h / 4.0}")
    u = u0.values.astype(float).copy()
    n_steps, dt_eff, ck_idx = _checkpoints(total_time, dt, n_checkpoints)
    times = ck_idx * dt_eff
    states = np.empty((len(ck_idx), u.size))
    slot = 0
    if ck_idx[0] == 0:
        states[0] = u
        slot = 1
    for k in range(1, n_steps + 1):
        k1 = _lattice_rhs(u, h)
        k2 = _lattice_rhs(u + 0.5 * dt_eff * k1, h)
        k3 = _lattice_rhs(u + 0.5 * dt_eff * k2, h)
        k4 = _lattice_rhs(u + dt_eff * k3, h)
        u = u + dt_eff / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if slot < len(ck_idx) and ck_idx[slot] == k:
            states[slot] = u
            slot += 1
    return times, states


def discrete_duality_experiment(u1_0: GridDensity, u2_0: GridDensity, p: float,
                                total_time: float, n_checkpoints: int = 6,
                                scenario_id: str = "discrete-duality",
                                dt: float | None = None):
    """Exact transport distances along two lattice heat flows, with duals.

    At each checkpoint the two lattice states become weighted atom clouds
    and d_p is solved exactly by LP.  The certificate at a checkpoint
    records the duality gap, the feasibility gap of the (un-normalized)
    potentials p*phi, p*psi against |x-y|^p, and the feasibility of the
    potentials shifted by one lattice cell each way — the discrete
    translation-invariance that drives the non-expansiveness argument.
    Returns (DistanceSeries, certificates).

    The semi-discrete lattice flow keeps d_p non-increasing exactly (the
    cumulative difference of the two states itself solves the lattice heat
    equation with absorbing ends, which contracts its l1 norm), so the
    series is monotone up to time integration (dt^4) and the LP weight
    snap (~1e-10).  ``dt`` defaults to the stability limit h^2/4.
    """
    if u1_0.spacing != u2_0.spacing or u1_0.values.shape != u2_0.values.shape:
        raise InvalidParameter("lattice states must share their grid")
    if u1_0.origin != u2_0.origin:
        raise InvalidParameter("lattice states must share their origin")
    h = u1_0.spacing
    sites = u1_0.axis_points(0)
    times, s1 = solve_discrete_heat(u1_0, total_time, n_checkpoints, dt=dt)
    _, s2 = solve_discrete_heat(u2_0, total_time, n_checkpoints, dt=dt)

    cost = PowerCost(p)
    vals = np.empty(len(times))
    certificates = []
    for k in range(len(times)):
        w1 = np.maximum(s1[k], 0.0) * h
        w2 = np.maximum(s2[k], 0.0) * h
        clipped = max(float(-np.minimum(s1[k], 0.0).sum() * h),
                      float(-np.minimum(s2[k], 0.0).sum() * h))
        mu = EmpiricalMeasure(sites, w1).prune()
        nu = EmpiricalMeasure(sites, w2).prune()
        # the certificate below reports the measured gaps; the validator's
        # blanket marginal bound is tuned for much smaller instances
        plan = wasserstein_lp(mu, nu, cost, validate=False)
        vals[k] = plan.value
        phi = p * plan.potential_source
        psi = p * plan.potential_target
        xs = mu.points[:, 0]
        ys = nu.points[:, 0]
        feas = potential_feasibility_gap(phi, psi, xs, ys, p)
        # shifting a potential by one cell preserves feasibility because
        # the cost depends only on x - y; check it on the realized duals
        feas_plus = potential_feasibility_gap(phi, psi, xs + h, ys + h, p)
        feas_minus = potential_feasibility_gap(phi, psi, xs - h, ys - h, p)
        certificates.append({
            "t": float(times[k]),
            "duality_gap": plan.duality_gap(),
            "feasibility_gap": feas,
            "shift_plus_gap": feas_plus,
            "shift_minus_gap": feas_minus,
            "clipped_mass": clipped,
        })
    series = DistanceSeries(scenario_id=scenario_id, seed="deterministic",
                            times=times, coupled=vals,
                            cost_label=f"d_{p} (exact LP)",
                            meta={"h": h, "p": p})
    return series, certificates


# ---------------------------------------------------------------------------
# Crank-Nicolson reference solvers (marginal oracles)
# ---------------------------------------------------------------------------

def _cn_solve(u0: np.ndarray, build_rhs_mat, total_time: float, dt: float):
    n = u0.size
    n_steps = max(1, int(round(total_time / dt)))
    dt_eff = total_time / n_steps
    lower, diag, upper = build_rhs_mat()
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5 * dt_eff * upper[:-1]
    ab[1, :] = 1.0 - 0.5 * dt_eff * diag
    ab[2, :-1] = -0.5 * dt_eff * lower[1:]
    u = u0.astype(float).copy()
    for _ in range(n_steps):
        rhs = u + 0.5 * dt_eff * (diag * u)
        rhs[:-1] += 0.5 * dt_eff * upper[:-1] * u[1:]
        rhs[1:] += 0.5 * dt_eff * lower[1:] * u[:-1]
        u = solve_banded((1, 1), ab, rhs)
    return u


def reference_heat_cn(u0: GridDensity, total_time: float,
                      dt: float | None = None) -> GridDensity:
    """Crank-Nicolson 1D heat solve (zero-flux ends): independent oracle."""
    if u0.values.ndim != 1:
        raise InvalidParameter("reference solver needs a 1D density")
    dx = u0.spacing
    if dt is None:
        dt = dx * dx / 2.0
    n = u0.values.size

    def build():
        diag = np.full(n, -2.0) / (dx * dx)
        diag[0] = diag[-1] = -1.0 / (dx * dx)
        upper = np.full(n, 1.0) / (dx * dx)
        lower = np.full(n, 1.0) / (dx * dx)
        return lower, diag, upper

    out = _cn_solve(u0.values, build, total_time, dt)
    return GridDensity(out, u0.origin, dx, allow_negative=True)


def reference_fp_cn(u0: GridDensity, drift, total_time: float,
                    dt: float | None = None) -> GridDensity:
    """Crank-Nicolson drift-diffusion du/dt = u'' - (V u)' with centered V."""
    if u0.values.ndim != 1:
        raise InvalidParameter("reference solver needs a 1D density")
    dx = u0.spacing
    if dt is None:
        dt = dx / 2.0
    n = u0.values.size
    x = u0.axis_points(0)
    vx = np.asarray(drift(x), dtype=float)

    def build():
        diag = np.full(n, -2.0) / (dx * dx)
        diag[0] = diag[-1] = -1.0 / (dx * dx)
        upper = np.full(n, 1.0) / (dx * dx)
        lower = np.full(n, 1.0) / (dx * dx)
        upper = upper - np.roll(vx, -1) / (2.0 * dx)
        lower = lower + np.roll(vx, 1) / (2.0 * dx)
        return lower, diag, upper

    out = _cn_solve(u0.values, build, total_time, dt)
    return GridDensity(out, u0.origin, dx, allow_negative=True)


# ---------------------------------------------------------------------------
# snapshots: flat binary array + text sidecar
# ---------------------------------------------------------------------------

def save_grid_snapshot(g: GridDensity, path_base: str) -> None:
    """Write values to <base>.npy and geometry to <base>.json."""
    np.save(path_base + ".npy", g.values)
    with open(path_base + ".json", "w") as fh:
        json.dump({"origin": list(g.origin), "spacing": g.spacing,
                   "shape": list(g.values.shape)}, fh, indent=2)
        fh.write("\n")


def load_grid_snapshot(path_base: str) -> GridDensity:
    values = np.load(path_base + ".npy")
    with open(path_base + ".json") as fh:
        meta = json.load(fh)
    if list(values.shape) != meta["shape"]:
        raise InvalidParameter("snapshot sidecar does not match the array")
    return GridDensity(values, tuple(meta["origin"]), float(meta["spacing"]),
                       allow_negative=True)
