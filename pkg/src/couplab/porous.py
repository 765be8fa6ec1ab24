"""One-dimensional generalized porous-media flows and their transport maps.

The equation is du/dt = div(u grad A'(u)) for a C^2 nonlinearity A on the
nonnegative reals.  In one dimension the chain rule gives
u d/dx[A'(u)] = d/dx[B(u)] with B(r) = int_0^r w A''(w) dw, so the solver
integrates the equivalent conservative form du/dt = (B(u))_xx.  The same
B carries the admissibility conditions (B >= 0 and r^(1/d-1) B(r)
non-decreasing) under which the quadratic transport distance between two
solutions never increases; ``dissipation_terms`` evaluates the discrete
version of the one-dimensional dissipation inequality through the
monotone-rearrangement map.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (
    CFLViolation,
    ConstraintViolated,
    InvalidParameter,
    NonPositiveValues,
    PositivityViolated,
    QuadratureFailure,
)
from .measures import GridDensity
from .series import DistanceSeries
from .transport import _grid_cdf, wasserstein_grid_1d

__all__ = [
    "NonlinearityA",
    "power_nonlinearity",
    "check_admissible",
    "solve_pme_1d",
    "BrenierMap1D",
    "brenier_map_1d",
    "dissipation_terms",
    "pme_contraction_experiment",
]


class NonlinearityA:
    """A C^2 nonlinearity with its induced diffusion potential B.

    Holds callables for A and A'' and lazily caches B(r) = int_0^r w A''(w) dw
    on a dense grid (cumulative trapezoid; the grid doubles whenever a larger
    argument is requested).  ``d`` is the space dimension used by the
    admissibility test r -> r^(1/d-1) B(r).
    """

    def __init__(self, a, a2, d: int = 1, name: str = "",
                 r_max: float = 4.0, cache_nodes: int = 8193):
        if d < 1 or int(d) != d:
            raise InvalidParameter("dimension d must be a positive integer")
        if r_max <= 0:
            raise InvalidParameter("cache range r_max must be positive")
        self.a = a
        self.a2 = a2
        self.d = int(d)
        self.name = name or getattr(a, "__name__", "custom")
        self._r_max = float(r_max)
        self._nodes = int(cache_nodes)
        self._r_cache: np.ndarray | None = None
        self._b_cache: np.ndarray | None = None

    def _integrand(self, r: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            raw = np.asarray(r * np.asarray(self.a2(r), dtype=float),
                             dtype=float)
        # w * A''(w) must vanish at w = 0 for the integral to exist even
        # when A'' itself blows up there
        vals = np.where(r > 0, raw, 0.0)
        if not np.all(np.isfinite(vals)):
            raise QuadratureFailure(
                "w * A''(w) is not finite on the requested range"
            )
        return vals

    def _ensure(self, r_needed: float) -> None:
        while self._r_cache is None or r_needed > self._r_max:
            if self._r_cache is not None:
                self._r_max *= 2.0
            r = np.linspace(0.0, self._r_max, self._nodes)
            b = cumulative_trapezoid(self._integrand(r), r, initial=0.0)
            self._r_cache, self._b_cache = r, b

    def b(self, r) -> np.ndarray:
        """B(r) = int_0^r w A''(w) dw, interpolated from the cache."""
        r = np.asarray(r, dtype=float)
        if r.size and float(np.min(r)) < -1e-12:
            raise InvalidParameter("B is defined for nonnegative arguments")
        r = np.maximum(r, 0.0)
        self._ensure(float(np.max(r)) if r.size else 0.0)
        return np.interp(r, self._r_cache, self._b_cache)

    def b_prime(self, r) -> np.ndarray:
        """B'(r) = r A''(r), the diffusivity of the conservative form."""
        r = np.asarray(r, dtype=float)
        return self._integrand(np.maximum(r, 0.0))


def power_nonlinearity(m: float, d: int = 1) -> NonlinearityA:
    """A(u) = u^m / m; admissible in any dimension for m >= 1."""
    if m < 1:
        raise InvalidParameter("power nonlinearity requires m >= 1")
    m = float(m)

    def a(u):
        return np.asarray(u, dtype=float) ** m / m

    def a2(u):
        u = np.asarray(u, dtype=float)
        if m == 1:
            return np.zeros_like(u)
        with np.errstate(all="ignore"):
            return (m - 1.0) * u ** (m - 2.0)

    return NonlinearityA(a, a2, d=d, name=f"power-{m:g}")


def check_admissible(a: NonlinearityA, r_grid=None,
                     tol: float = 1e-10) -> dict:
    """Evaluate the two admissibility conditions on a positive grid.

    Returns {"b_nonneg": bool, "monotone": bool}: B(r) >= 0 and
    r^(1/d-1) B(r) non-decreasing, both up to ``tol``.
    """
    if r_grid is None:
        r_grid = np.linspace(0.0, 3.0, 601)[1:]
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size < 2:
        raise InvalidParameter("r_grid must be a 1D grid with >= 2 points")
    if np.min(r_grid) <= 0 or np.any(np.diff(r_grid) <= 0):
        raise InvalidParameter("r_grid must be positive and increasing")
    b_vals = a.b(r_grid)
    weighted = r_grid ** (1.0 / a.d - 1.0) * b_vals
    return {
        "b_nonneg": bool(np.min(b_vals) >= -tol),
        "monotone": bool(np.all(np.diff(weighted) >= -tol)),
    }


def solve_pme_1d(a: NonlinearityA, u0: GridDensity, total_time: float,
                 dx: float | None = None, dt: float | None = None,
                 n_checkpoints: int = 6):
    """Explicit conservative solve of du/dt = (B(u))_xx with zero-flux ends.

    The step size adapts each step to the stability limit
    dt <= dx^2 / (2 max B'(u)); an optional ``dt`` caps the step from
    above.  Checkpoints are hit exactly.  Mass is conserved to round-off
    and the scheme is monotone (preserves nonnegativity) whenever B is
    non-decreasing.  Returns (times, [GridDensity at each checkpoint]).
    """
    if u0.values.ndim != 1:
        raise InvalidParameter("porous-media solver needs a 1D density")
    if total_time < 0:
        raise InvalidParameter("total_time must be nonnegative")
    if dx is None:
        dx = u0.spacing
    elif abs(dx - u0.spacing) > 1e-12 * max(1.0, abs(dx)):
        raise InvalidParameter(
            f"dx = {dx} disagrees with the grid spacing {u0.spacing}"
        )
    if dt is not None and dt <= 0:
        raise InvalidParameter("dt cap must be positive")
    u = np.asarray(u0.values, dtype=float).copy()
    if u.size and float(np.min(u)) < -1e-12:
        raise NonPositiveValues("initial density has negative values")
    u = np.maximum(u, 0.0)

    times = np.linspace(0.0, total_time, n_checkpoints)
    states = [GridDensity(u.copy(), u0.origin, u0.spacing)]
    t = 0.0
    min_step = max(total_time, 1.0) * 1e-12
    for target in times[1:]:
        while t < target - 1e-15 * max(1.0, target):
            diffusivity = float(np.max(a.b_prime(u))) if u.size else 0.0
            if diffusivity > 0.0:
                step = dx * dx / (2.0 * diffusivity)
                if step < min_step:
                    raise CFLViolation(
                        f"stability limit {step:.3e} is impractically small"
                    )
            else:
                step = target - t
            if dt is not None:
                step = min(step, dt)
            step = min(step, target - t)
            bv = a.b(u)
            lam = step / (dx * dx)
            inc = np.empty_like(u)
            inc[1:-1] = bv[2:] - 2.0 * bv[1:-1] + bv[:-2]
            inc[0] = bv[1] - bv[0]
            inc[-1] = bv[-2] - bv[-1]
            u = u + lam * inc
            t += step
        t = float(target)
        states.append(GridDensity(u.copy(), u0.origin, u0.spacing))
    return times, states


class BrenierMap1D:
    """Monotone rearrangement map T = F2^{-1} o F1 between 1D grid densities.

    The map is the piecewise-linear interpolation through the paired
    quantiles of the two (cell-uniform) densities at their merged CDF
    levels.  Construction asserts monotonicity.
    """

    def __init__(self, u1: GridDensity, u2: GridDensity):
        self.u1 = u1
        self.u2 = u2
        edges1, cdf1 = _grid_cdf(u1)
        edges2, cdf2 = _grid_cdf(u2)
        q = np.unique(np.concatenate([cdf1, cdf2]))
        x_nodes = np.interp(q, cdf1, edges1)
        t_nodes = np.interp(q, cdf2, edges2)
        # CDF plateaus (empty cells) can duplicate x values; keep one node
        # per x with the largest image so the polyline stays a function
        keep = np.concatenate([np.diff(x_nodes) > 1e-14, [True]])
        x_nodes, t_nodes = x_nodes[keep], t_nodes[keep]
        if np.any(np.diff(t_nodes) < -1e-10):
            raise ConstraintViolated(
                "rearrangement map lost monotonicity "
                f"({float(np.min(np.diff(t_nodes))):.3e})"
            )
        self.q_levels = q
        self.x_nodes = x_nodes
        self.t_nodes = np.maximum.accumulate(t_nodes)

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float),
                         self.x_nodes, self.t_nodes)

    def derivative(self, x) -> np.ndarray:
        """Slope of the polyline at x (geometric route, no density ratios)."""
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.t_nodes) / np.diff(self.x_nodes)
        idx = np.clip(np.searchsorted(self.x_nodes, x, side="right") - 1,
                      0, slopes.size - 1)
        return slopes[idx]

    def _partition(self) -> np.ndarray:
        """Breakpoints of u1's cells merged with the map's own nodes."""
        edges1, _ = _grid_cdf(self.u1)
        pts = np.unique(np.concatenate([edges1, self.x_nodes]))
        return pts[(pts >= edges1[0]) & (pts <= edges1[-1])]

    def map_cost(self, p: float = 2.0) -> float:
        """int |x - T(x)|^p / p u1(x) dx via per-piece Gauss quadrature.

        Evaluated in x coordinates (not in quantile coordinates), so the
        agreement with the quantile-formula distance is a genuine
        two-route consistency check.
        """
        from numpy.polynomial.legendre import leggauss

        pts = self._partition()
        xg, wg = leggauss(5)
        left, widths = pts[:-1], np.diff(pts)
        nodes = left[:, None] + (0.5 * (xg + 1.0))[None, :] * widths[:, None]
        dens = self._density_at(self.u1, nodes)
        vals = np.abs(nodes - self(nodes)) ** p / p * dens
        return float((widths * (vals @ wg) * 0.5).sum())

    def pushforward_gap(self, phi) -> float:
        """|int phi(T(x)) u1 dx - int phi(y) u2 dy| by cell-wise quadrature."""
        from numpy.polynomial.legendre import leggauss

        xg, wg = leggauss(5)

        def integral(fvals, widths):
            return float((widths * (fvals @ wg) * 0.5).sum())

        pts = self._partition()
        left, widths = pts[:-1], np.diff(pts)
        nodes = left[:, None] + (0.5 * (xg + 1.0))[None, :] * widths[:, None]
        lhs = integral(np.asarray(phi(self(nodes)))
                       * self._density_at(self.u1, nodes), widths)
        edges2, _ = _grid_cdf(self.u2)
        left2, widths2 = edges2[:-1], np.diff(edges2)
        nodes2 = (left2[:, None]
                  + (0.5 * (xg + 1.0))[None, :] * widths2[:, None])
        rhs = integral(np.asarray(phi(nodes2))
                       * self._density_at(self.u2, nodes2), widths2)
        return abs(lhs - rhs)

    @staticmethod
    def _density_at(g: GridDensity, x: np.ndarray) -> np.ndarray:
        """Cell-uniform normalized density sampled at arbitrary points."""
        edges, _ = _grid_cdf(g)
        vals = np.asarray(g.values, dtype=float) / g.mass()
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1,
                      0, vals.size - 1)
        out = vals[idx]
        out = np.where((x < edges[0]) | (x > edges[-1]), 0.0, out)
        return out


def brenier_map_1d(u1: GridDensity, u2: GridDensity) -> BrenierMap1D:
    """Monotone rearrangement pushing u1 onto u2 (optimal for |x-y|^2/2)."""
    return BrenierMap1D(u1, u2)


def dissipation_terms(u1: GridDensity, u2: GridDensity,
                      a: NonlinearityA, floor: float = 1e-12) -> dict:
    """Discrete dissipation terms of the quadratic-cost coupling, d = 1.

    D1 = int B(u1(x)) (1 - T'(x)) dx and
    D2 = int B(u2(T x)) (T'(x) - 1) dx use the geometric slope of the
    rearrangement map T; their sum is the derivative of the coupled cost at
    time zero.  ``I_prime_bound`` evaluates the closed-form bound
    int u1 (B(u1) - B(u2 o T)) (1/u1 - 1/(u2 o T)) dx, which uses the
    density-ratio (Monge-Ampere) expression of T' instead; for an
    admissible nonlinearity it is nonpositive, and in one dimension the
    two routes agree up to discretization.  Densities are normalized and
    floored at ``floor`` (the comparison targets the smooth positive
    regime).
    """
    if a.d != 1:
        raise InvalidParameter("dissipation terms are implemented for d = 1")
    if u1.values.ndim != 1 or u2.values.ndim != 1:
        raise InvalidParameter("dissipation terms need 1D densities")
    for g in (u1, u2):
        if float(np.min(g.values)) < -1e-12:
            raise PositivityViolated("density has negative values")

    def floored(g: GridDensity) -> GridDensity:
        vals = np.maximum(np.asarray(g.values, dtype=float), 0.0)
        vals = vals / (vals.sum() * g.spacing)
        return GridDensity(np.maximum(vals, floor), g.origin, g.spacing)

    f1, f2 = floored(u1), floored(u2)
    tmap = brenier_map_1d(f1, f2)
    x = f1.axis_points(0)
    dx = f1.spacing
    dens1 = np.asarray(f1.values, dtype=float) / f1.mass()
    y = tmap(x)
    dens2_at_y = np.maximum(tmap._density_at(f2, y), floor)
    slope = tmap.derivative(x)

    b1 = a.b(dens1)
    b2 = a.b(dens2_at_y)
    d1 = float(np.sum(b1 * (1.0 - slope)) * dx)
    d2 = float(np.sum(b2 * (slope - 1.0)) * dx)
    bound = float(np.sum(
        dens1 * (b1 - b2) * (1.0 / dens1 - 1.0 / dens2_at_y)
    ) * dx)
    return {"D1": d1, "D2": d2, "I_prime_bound": bound}


def pme_contraction_experiment(a: NonlinearityA, u1_0: GridDensity,
                               u2_0: GridDensity, total_time: float,
                               n_checkpoints: int = 6,
                               scenario_id: str = "pme") -> DistanceSeries:
    """d_2 between two porous-media flows at evenly spaced checkpoints.

    Admissibility of the nonlinearity is enforced up front; the distance at
    each checkpoint comes from the exact quantile formula on the grids.
    """
    verdict = check_admissible(a)
    if not (verdict["b_nonneg"] and verdict["monotone"]):
        raise ConstraintViolated(
            f"nonlinearity {a.name!r} fails admissibility: {verdict}"
        )
    times, s1 = solve_pme_1d(a, u1_0, total_time, n_checkpoints=n_checkpoints)
    _, s2 = solve_pme_1d(a, u2_0, total_time, n_checkpoints=n_checkpoints)
    vals = np.array([wasserstein_grid_1d(g1, g2, 2.0)
                     for g1, g2 in zip(s1, s2)])
    drift = max(
        abs(g.mass() - s1[0].mass()) for g in s1
    ) + max(abs(g.mass() - s2[0].mass()) for g in s2)
    return DistanceSeries(
        scenario_id=scenario_id,
        seed="deterministic",
        times=times,
        coupled=vals,
        cost_label="d_2 (quantile)",
        meta={"nonlinearity": a.name, "dx": u1_0.spacing,
              "mass_drift": float(drift)},
    )
