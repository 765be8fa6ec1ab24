"""Exact transport distances between small measures.

Three routes, kept deliberately independent so they can cross-check each
other:

* :func:`wasserstein_1d` -- exact quantile formula for point clouds on the
  line: (1/p) int_0^1 |F1^{-1} - F2^{-1}|^p dq evaluated on the merged
  weight partition.  No optimization involved.
* :func:`wasserstein_grid_1d` -- same integral for grid densities, with the
  cell mass spread uniformly over the cell so quantiles are piecewise
  linear; the q-integral is evaluated exactly per merged-CDF interval.
* :func:`wasserstein_lp` -- exact discrete primal-dual solve of the
  transport linear program in any dimension (dual simplex), returning the
  plan and both potentials with feasibility, duality-gap, and complementary
  slackness certificates enforced.

All distances use the cost convention rho_p(x, y) = |x - y|^p / p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.optimize import linprog

from .errors import (
    ConstraintViolated,
    DegenerateCDF,
    DimensionMismatch,
    SizeExceeded,
)
from .measures import EmpiricalMeasure, GridDensity

__all__ = [
    "TransportPlan",
    "wasserstein_1d",
    "wasserstein_grid_1d",
    "wasserstein_lp",
    "coupled_cost",
    "potential_feasibility_gap",
    "rationalize_weights",
]

SIZE_CAP = 10**6          # max N*M for the exact LP solve
# weight-snap granularity: perturbs each atom by <= 5e-13, so LP values
# move by well under 1e-9 even for hundred-atom clouds on a U(10) domain
RATIONAL_DENOMINATOR = 10**12


def coupled_cost(cost, X: np.ndarray, Y: np.ndarray,
                 weights: np.ndarray | None = None) -> float:
    """Mean cost of same-index pairs; an upper bound for the transport cost."""
    vals = cost.pairwise(X, Y)
    if weights is None:
        return float(vals.mean())
    return float(np.asarray(weights) @ vals)


# ---------------------------------------------------------------------------
# quantile routes
# ---------------------------------------------------------------------------

def wasserstein_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                   p: float = 2.0) -> float:
    """Exact (1/p) int |F1^{-1}(q) - F2^{-1}(q)|^p dq for 1D point clouds.

    Both quantile functions are piecewise constant; the integral is a finite
    sum over the merged partition of cumulative weights.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("quantile formula requires 1D clouds")
    x1, w1 = mu.prune().sorted_1d()
    x2, w2 = nu.prune().sorted_1d()
    cum1 = np.cumsum(w1)
    cum2 = np.cumsum(w2)
    qs = np.concatenate([[0.0], np.sort(np.concatenate([cum1[:-1], cum2[:-1]])),
                         [1.0]])
    dq = np.diff(qs)
    left = qs[:-1]
    i1 = np.minimum(np.searchsorted(cum1, left, side="right"), len(x1) - 1)
    i2 = np.minimum(np.searchsorted(cum2, left, side="right"), len(x2) - 1)
    return float(dq @ (np.abs(x1[i1] - x2[i2]) ** p)) / p


def _grid_cdf(g: GridDensity):
    """Cell edges and CDF values at the edges for a 1D grid density."""
    if g.ndim != 1:
        raise DimensionMismatch("grid quantile route requires a 1D density")
    mass = g.mass()
    if mass <= 0:
        raise DegenerateCDF("grid density has no mass")
    u = g.values / mass
    x = g.axis_points(0)
    edges = np.concatenate([[x[0] - 0.5 * g.spacing], x + 0.5 * g.spacing])
    cdf = np.concatenate([[0.0], np.cumsum(u) * g.spacing])
    cdf[-1] = 1.0
    return edges, cdf


def wasserstein_grid_1d(g1: GridDensity, g2: GridDensity,
                        p: float = 2.0) -> float:
    """Quantile-formula distance between two 1D grid densities.

    Cell mass is spread uniformly over the cell, so each CDF is piecewise
    linear and its inverse piecewise linear in q.  On every interval of the
    merged CDF partition both quantiles are linear; a 5-node Gauss rule per
    interval (exact for polynomial integrands up to degree 9) evaluates the
    q-integral.  Nodes are strictly interior, so CDF plateaus from empty
    cells are never sampled.
    """
    edges1, cdf1 = _grid_cdf(g1)
    edges2, cdf2 = _grid_cdf(g2)
    qs = np.unique(np.concatenate([cdf1, cdf2]))
    xg, wg = leggauss(5)
    qa = qs[:-1]
    dq = np.diff(qs)
    keep = dq > 1e-15
    qa, dq = qa[keep], dq[keep]
    nodes = qa[:, None] + (0.5 * (xg + 1.0))[None, :] * dq[:, None]
    quant1 = np.interp(nodes, cdf1, edges1)
    quant2 = np.interp(nodes, cdf2, edges2)
    vals = np.abs(quant1 - quant2) ** p
    return float((dq * (vals @ wg) * 0.5).sum()) / p


# ---------------------------------------------------------------------------
# exact linear-programming route
# ---------------------------------------------------------------------------

def _rational_counts(w: np.ndarray, cap: int) -> tuple[np.ndarray, int]:
    """Integer counts and denominator snapping ``w`` to rationals, sum 1.

    Each weight is replaced by its best rational approximation with
    denominator <= cap; if the least common denominator stays within the
    cap the snap is exact (weights that already are small rationals pass
    through unchanged).  Otherwise the cap itself is used as denominator.
    Rounding drift is pushed onto the largest atom, so the counts always
    total exactly the denominator.
    """
    from fractions import Fraction
    from math import lcm

    w = np.asarray(w, dtype=float)
    fracs = [Fraction(float(x)).limit_denominator(cap) for x in w]
    denom = 1
    for f in fracs:
        denom = lcm(denom, f.denominator)
        if denom > cap:
            break
    if denom <= cap:
        counts = np.array([f.numerator * (denom // f.denominator)
                           for f in fracs], dtype=np.int64)
    else:
        denom = cap
        counts = np.round(w * denom).astype(np.int64)
    counts[np.argmax(counts)] += denom - counts.sum()
    if np.any(counts < 0):
        raise ConstraintViolated("rationalization produced a negative weight")
    return counts, denom


def _common_counts(w1: np.ndarray, w2: np.ndarray,
                   cap: int = RATIONAL_DENOMINATOR):
    """Counts for two weight vectors over one shared denominator.

    Sharing the denominator makes both count vectors total exactly the
    same integer, so the transport LP balance constraint holds exactly in
    floating point (no spurious infeasibility).
    """
    from math import lcm

    c1, d1 = _rational_counts(w1, cap)
    c2, d2 = _rational_counts(w2, cap)
    if d1 != d2:
        common = lcm(d1, d2)
        if common <= cap:
            c1, c2 = c1 * (common // d1), c2 * (common // d2)
            d1 = d2 = common
        else:
            # force the fallback branch for both sides: denominator = cap
            c1 = np.round(np.asarray(w1, dtype=float) * cap).astype(np.int64)
            c1[np.argmax(c1)] += cap - c1.sum()
            c2 = np.round(np.asarray(w2, dtype=float) * cap).astype(np.int64)
            c2[np.argmax(c2)] += cap - c2.sum()
            d1 = d2 = cap
            if np.any(c1 < 0) or np.any(c2 < 0):
                raise ConstraintViolated(
                    "rationalization produced a negative weight"
                )
    return c1, c2, d1


def rationalize_weights(w: np.ndarray,
                        cap: int = RATIONAL_DENOMINATOR) -> np.ndarray:
    """Snap weights to a common denominator <= cap, total exactly 1.

    Small exact rationals pass through unchanged; otherwise each weight
    moves by at most 1/(2 cap).  See :func:`_rational_counts`.
    """
    counts, denom = _rational_counts(w, cap)
    return counts / float(denom)


@dataclass
class TransportPlan:
    """Primal-dual certificate of an exact discrete transport solve.

    ``plan[i, j]`` is mass moved from source atom i to target atom j;
    ``potential_source`` / ``potential_target`` are the dual potentials
    (phi, psi) with phi_i + psi_j <= cost_matrix[i, j].
    """

    plan: np.ndarray
    cost_matrix: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    potential_source: np.ndarray
    potential_target: np.ndarray
    value: float

    def validate(self, marginal_tol: float = 1e-10, value_tol: float = 1e-10,
                 gap_tol: float = 1e-8, feasibility_tol: float = 1e-10,
                 slackness_tol: float = 1e-8) -> None:
        """Enforce the optimality invariants; ConstraintViolated on failure."""
        if np.min(self.plan) < -feasibility_tol:
            raise ConstraintViolated(
                f"plan has negative entry {np.min(self.plan):.3e}"
            )
        row_gap = np.max(np.abs(self.plan.sum(axis=1) - self.source_weights))
        col_gap = np.max(np.abs(self.plan.sum(axis=0) - self.target_weights))
        if max(row_gap, col_gap) > marginal_tol:
            raise ConstraintViolated(
                f"marginal mismatch {max(row_gap, col_gap):.3e}"
            )
        primal = float(np.sum(self.plan * self.cost_matrix))
        if abs(primal - self.value) > value_tol * max(1.0, abs(self.value)):
            raise ConstraintViolated("plan cost disagrees with reported value")
        feas = (self.potential_source[:, None] + self.potential_target[None, :]
                - self.cost_matrix)
        if np.max(feas) > feasibility_tol:
            raise ConstraintViolated(
                f"dual infeasibility {np.max(feas):.3e}"
            )
        dual = float(self.potential_source @ self.source_weights
                     + self.potential_target @ self.target_weights)
        if abs(primal - dual) > gap_tol * max(1.0, abs(primal)):
            raise ConstraintViolated(f"duality gap {primal - dual:.3e}")
        active = self.plan > 1e-12
        if np.any(active) and np.max(np.abs(feas[active])) > slackness_tol:
            raise ConstraintViolated(
                f"complementary slackness violated by "
                f"{np.max(np.abs(feas[active])):.3e}"
            )

    def duality_gap(self) -> float:
        primal = float(np.sum(self.plan * self.cost_matrix))
        dual = float(self.potential_source @ self.source_weights
                     + self.potential_target @ self.target_weights)
        return primal - dual


def wasserstein_lp(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cost,
                   rationalize: bool = True,
                   validate: bool = True) -> TransportPlan:
    """Exact transport LP between two clouds for an arbitrary cost.

    Solves min <plan, cost> over couplings of the two (weight-rationalized)
    clouds with a dual-simplex method and recovers the dual potentials from
    the equality multipliers.  Instances with N * M atoms above 10^6 raise
    :class:`SizeExceeded`.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(
            f"clouds live in dimensions {mu.dim} and {nu.dim}"
        )
    mu = mu.prune()
    nu = nu.prune()
    n, m = mu.size, nu.size
    if n * m > SIZE_CAP:
        raise SizeExceeded(f"{n} x {m} exceeds the exact-solve cap {SIZE_CAP}")
    if rationalize:
        # integer counts over one shared denominator keep both marginal
        # blocks of b_eq in exact balance; dividing by a power of two >=
        # the denominator is exact in binary floating point (counts stay
        # dyadic, partial sums stay exact), so the balance survives while
        # the magnitudes scale to O(1) for the solver
        c1, c2, denom = _common_counts(mu.weights, nu.weights)
        denom = int(denom)
        two_pow = float(1 << (denom - 1).bit_length()) if denom > 1 else 1.0
        b_eq = np.concatenate([c1, c2]) / two_pow
        scale = denom / two_pow
    else:
        b_eq = np.concatenate([mu.weights, nu.weights])
        scale = 1.0

    cost_matrix = cost.cross(mu.points, nu.points)
    c = cost_matrix.ravel()
    # rows: source marginal constraints, then target marginal constraints
    var = np.arange(n * m)
    rows = np.concatenate([var // m, n + var % m])
    cols = np.concatenate([var, var])
    a_eq = sparse.coo_matrix(
        (np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m)
    ).tocsr()
    res = linprog(
        c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-10,
                 # presolve occasionally mis-declares balanced transportation
                 # problems infeasible; the dual simplex needs no presolve on
                 # these dense, well-structured instances
                 "presolve": False},
    )
    if not res.success:
        raise ConstraintViolated(f"transport LP failed: {res.message}")
    # scaling b by the denominator scales the primal solution and value the
    # same way and leaves the dual multipliers untouched
    phi = np.asarray(res.eqlin.marginals[:n], dtype=float)
    psi = np.asarray(res.eqlin.marginals[n:], dtype=float)
    plan = TransportPlan(
        plan=res.x.reshape(n, m) / scale,
        cost_matrix=cost_matrix,
        source_weights=b_eq[:n] / scale,
        target_weights=b_eq[n:] / scale,
        potential_source=phi,
        potential_target=psi,
        value=float(res.fun) / scale,
    )
    if validate:
        plan.validate()
    return plan


def potential_feasibility_gap(phi: np.ndarray, psi: np.ndarray,
                              x: np.ndarray, y: np.ndarray,
                              p: float) -> float:
    """Largest violation of phi(x_i) + psi(y_j) <= |x_i - y_j|^p.

    The comparison uses the un-normalized power (no 1/p): this is the
    admissible class whose supremum over pairs gives p * d_p.  A value <= 0
    certifies membership.
    """
    x = np.ravel(np.asarray(x, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    gap = (np.asarray(phi)[:, None] + np.asarray(psi)[None, :]
           - np.abs(x[:, None] - y[None, :]) ** p)
    return float(np.max(gap))
