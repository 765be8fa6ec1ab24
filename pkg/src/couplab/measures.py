"""Probability measures: weighted point clouds, grid densities, sample families.

Two concrete representations are used throughout the package:

* :class:`EmpiricalMeasure` -- a weighted point cloud in R^d, the output of
  every particle simulation and the input of the exact transport solvers.
* :class:`GridDensity` -- a nonnegative density on a uniform grid (1D or 2D),
  the state of the deterministic PDE solvers.

Sampling from the analytic families (``gaussian``, ``uniform``, ``dirac``,
``barenblatt``) is deterministic given a :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma

from .errors import DimensionMismatch, InvalidParameter, ZeroMass

__all__ = [
    "EmpiricalMeasure",
    "GridDensity",
    "BarenblattProfile",
    "sample_family",
    "load_cloud",
    "save_cloud",
]


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidParameter("points must be a nonempty (N,) or (N, d) array")
    return pts


@dataclass
class EmpiricalMeasure:
    """Weighted point cloud sum_i w_i delta_{x_i} with w_i >= 0, sum w_i = 1.

    ``points`` has shape (N, d); scalars clouds may be passed as shape (N,)
    and are promoted to (N, 1).  Construction normalizes the weights; a zero
    or negative total mass raises :class:`ZeroMass`.
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        n = self.points.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,):
                raise DimensionMismatch(
                    f"weights shape {w.shape} does not match {n} points"
                )
            if np.any(w < 0):
                raise InvalidParameter("weights must be nonnegative")
            total = w.sum()
            if total <= 0:
                raise ZeroMass("total mass must be positive")
            self.weights = w / total

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def prune(self, tol: float = 0.0) -> "EmpiricalMeasure":
        """Drop atoms with weight <= tol and renormalize."""
        keep = self.weights > tol
        if not np.any(keep):
            raise ZeroMass("pruning removed all atoms")
        return EmpiricalMeasure(self.points[keep], self.weights[keep])

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def moment(self, p: float) -> float:
        """p-th absolute moment sum_i w_i |x_i|^p (Euclidean norm)."""
        r = np.linalg.norm(self.points, axis=1)
        return float(self.weights @ r**p)

    def sorted_1d(self) -> tuple[np.ndarray, np.ndarray]:
        """Positions and weights sorted by position (d = 1 only)."""
        if self.dim != 1:
            raise DimensionMismatch("sorted_1d requires a one-dimensional cloud")
        order = np.argsort(self.points[:, 0], kind="stable")
        return self.points[order, 0], self.weights[order]

    def quantile(self, q) -> np.ndarray | float:
        """Generalized inverse CDF, F^{-1}(q) = inf{x : F(x) >= q} (d = 1).

        Left-continuous convention: at an atom boundary the atom itself is
        returned (equal weights at {0, 1} give quantile(0.5) = 0).
        """
        q_arr = np.atleast_1d(np.asarray(q, dtype=float))
        if np.any((q_arr < 0) | (q_arr > 1)):
            raise InvalidParameter("quantile levels must lie in [0, 1]")
        xs, ws = self.sorted_1d()
        cum = np.cumsum(ws)
        idx = np.searchsorted(cum, q_arr, side="left")
        idx = np.minimum(idx, len(xs) - 1)
        out = xs[idx]
        return out if np.ndim(q) else float(out[0])


@dataclass
class GridDensity:
    """Density on a uniform grid: ``values[i]`` at origin + i * spacing.

    For 2D, ``values[i, j]`` sits at (origin[0] + i * spacing,
    origin[1] + j * spacing); cells are square.  The represented measure is
    ``values * spacing**ndim``.  Negative values are rejected at construction
    unless ``allow_negative`` is set (schemes without a positivity guarantee
    monitor the negative part instead of failing).
    """

    values: np.ndarray
    origin: tuple[float, ...]
    spacing: float
    allow_negative: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise InvalidParameter("grid densities are 1D or 2D")
        if self.spacing <= 0:
            raise InvalidParameter("spacing must be positive")
        org = np.atleast_1d(np.asarray(self.origin, dtype=float))
        if org.shape != (self.values.ndim,):
            raise DimensionMismatch(
                f"origin has {org.shape[0]} coordinates for a "
                f"{self.values.ndim}D grid"
            )
        self.origin = tuple(float(v) for v in org)
        if not self.allow_negative and np.any(self.values < 0):
            raise InvalidParameter("negative density; pass allow_negative=True to monitor")

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.values.ndim

    def axis_points(self, axis: int = 0) -> np.ndarray:
        n = self.values.shape[axis]
        return self.origin[axis] + self.spacing * np.arange(n)

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def normalize(self) -> "GridDensity":
        m = self.mass()
        if m <= 0:
            raise ZeroMass("total mass must be positive")
        return GridDensity(self.values / m, self.origin, self.spacing,
                           allow_negative=self.allow_negative)

    def negative_mass(self) -> float:
        """Total mass of the negative part (monitor for unsigned schemes)."""
        return float(-self.values[self.values < 0].sum() * self.cell_volume)

    def boundary_mass(self, width: int = 1) -> float:
        """Mass within ``width`` cells of the grid edge."""
        inner = self.values[width:-width] if self.ndim == 1 else \
            self.values[width:-width, width:-width]
        return float(self.mass() - inner.sum() * self.cell_volume)

    def to_empirical(self, tol: float = 0.0) -> EmpiricalMeasure:
        """One atom per grid cell at the cell coordinate, weight u * h^ndim."""
        if self.ndim == 1:
            pts = self.axis_points(0)[:, None]
            w = self.values * self.spacing
        else:
            x = self.axis_points(0)
            y = self.axis_points(1)
            xx, yy = np.meshgrid(x, y, indexing="ij")
            pts = np.column_stack([xx.ravel(), yy.ravel()])
            w = self.values.ravel() * self.cell_volume
        keep = w > tol
        return EmpiricalMeasure(pts[keep], w[keep])


class BarenblattProfile:
    """Self-similar compactly supported solution of u_t = (B(u))_xx in 1D.

    For the power nonlinearity A(u) = u^m / m (so B(r) = (m-1) r^m / m) the
    profile is

        u(x, t) = t^{-b} (C - b xi^2 / 2)_+^{1/(m-1)},  xi = (x - c) / t^b,

    with b = 1/(m+1) and C fixed by unit mass:

        C = [ sqrt(b/2) / J ]^{ 2(m-1)/(m+1) },
        J = sqrt(pi) Gamma(1/(m-1) + 1) / Gamma(1/(m-1) + 3/2).

    Requires m > 1 (the support is unbounded for m = 1).
    """

    def __init__(self, m: float, center: float = 0.0):
        if m <= 1:
            raise InvalidParameter("profile requires m > 1")
        self.m = float(m)
        self.center = float(center)
        self.beta = 1.0 / (m + 1.0)
        a = 1.0 / (m - 1.0)
        j = np.sqrt(np.pi) * _gamma(a + 1.0) / _gamma(a + 1.5)
        # mass(C) = C^{a + 1/2} * sqrt(2/beta) * J  ==  1
        self.C = float((np.sqrt(self.beta / 2.0) / j) ** (1.0 / (a + 0.5)))

    def support_radius(self, t: float) -> float:
        return float(np.sqrt(2.0 * self.C / self.beta) * t**self.beta)

    def density(self, x, t: float) -> np.ndarray:
        if t <= 0:
            raise InvalidParameter("profile is defined for t > 0")
        xi = (np.asarray(x, dtype=float) - self.center) / t**self.beta
        core = np.maximum(self.C - 0.5 * self.beta * xi**2, 0.0)
        return t**(-self.beta) * core ** (1.0 / (self.m - 1.0))

    def on_grid(self, origin: float, spacing: float, n: int, t: float) -> GridDensity:
        x = origin + spacing * np.arange(n)
        return GridDensity(self.density(x, t), (origin,), spacing)

    def _cdf_table(self, t: float, n: int = 4001) -> tuple[np.ndarray, np.ndarray]:
        s = self.support_radius(t)
        x = np.linspace(self.center - s, self.center + s, n)
        dens = self.density(x, t)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5)])
        cdf *= (x[1] - x[0])
        cdf /= cdf[-1]
        return x, cdf

    def sample(self, n: int, t: float, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling; all samples lie in the compact support."""
        xs, cdf = self._cdf_table(t)
        u = rng.random(n)
        return np.interp(u, cdf, xs)


def _vector_param(value, d: int | None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if d is None:
        return v
    if v.shape == (1,):
        return np.full(d, v[0])
    if v.shape != (d,):
        raise DimensionMismatch(f"parameter of length {v.shape[0]} for dimension {d}")
    return v


def sample_family(family: str, params: dict, n: int, rng: np.random.Generator,
                  d: int | None = None) -> EmpiricalMeasure:
    """Draw n equal-weight samples from a named analytic family.

    Families and parameters:

    * ``gaussian``: ``mean`` (scalar or length-d), ``var`` (scalar > 0)
    * ``uniform``: ``low``, ``high`` (scalar or length-d, low < high)
    * ``dirac``: ``at`` (scalar or length-d)
    * ``barenblatt``: ``m`` (> 1), ``t0`` (> 0), ``center`` (1D only)
    """
    if n <= 0:
        raise InvalidParameter("sample count must be positive")
    if family == "gaussian":
        mean = _vector_param(params.get("mean", 0.0), d)
        var = float(params.get("var", 1.0))
        if var <= 0:
            raise InvalidParameter("gaussian variance must be positive")
        pts = mean + np.sqrt(var) * rng.standard_normal((n, mean.shape[0]))
    elif family == "uniform":
        low = _vector_param(params.get("low", 0.0), d)
        high = _vector_param(params.get("high", 1.0), d)
        if low.shape != high.shape or np.any(high <= low):
            raise InvalidParameter("uniform family requires low < high componentwise")
        pts = low + (high - low) * rng.random((n, low.shape[0]))
    elif family == "dirac":
        at = _vector_param(params.get("at", 0.0), d)
        pts = np.tile(at, (n, 1))
    elif family == "barenblatt":
        if d not in (None, 1):
            raise InvalidParameter("barenblatt family is one-dimensional")
        prof = BarenblattProfile(float(params.get("m", 2.0)),
                                 float(params.get("center", 0.0)))
        pts = prof.sample(n, float(params.get("t0", 1.0)), rng)[:, None]
    else:
        raise InvalidParameter(f"unknown sample family {family!r}")
    return EmpiricalMeasure(pts)


def save_cloud(measure: EmpiricalMeasure, path) -> None:
    """Write a cloud as CSV with header ``weight, x1..xd``."""
    header = ["weight"] + [f"x{k + 1}" for k in range(measure.dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for w, row in zip(measure.weights, measure.points):
            writer.writerow([repr(float(w))] + [repr(float(v)) for v in row])


def load_cloud(path) -> EmpiricalMeasure:
    """Read a cloud CSV written by :func:`save_cloud`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "weight":
            raise InvalidParameter(f"{path}: expected header starting with 'weight'")
        expected = ["weight"] + [f"x{k + 1}" for k in range(len(header) - 1)]
        if [h.strip() for h in header] != expected:
            raise InvalidParameter(f"{path}: malformed cloud header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ZeroMass(f"{path}: empty cloud")
    data = np.asarray(rows, dtype=float)
    return EmpiricalMeasure(data[:, 1:], data[:, 0])
