"""Transport cost functions and the analytic checkers built on them.

A cost is a function rho(x, y) >= 0 on pairs of states.  The concrete
families used by the simulations and solvers:

* :class:`PowerCost`      -- |x - y|^p / p  (the 1/p normalization is used
  everywhere in this package; distances reported for p = 2 are half the
  squared-quantile integral).
* :class:`KineticSumCost` -- a |x - y| + |v - w| on position-velocity pairs.
* :class:`DFunctionCost`  -- |d(x)^p - d(y)^p| for an increasing rate map d.
* :class:`RegularizedAbsCost` -- a C^1 regularization of |x - y| (quadratic
  cap or the log-scaled two-knee profile, see :func:`omega_eps` and
  :func:`yamada`).
* :class:`CustomCost`     -- arbitrary callable, finite-difference Hessians.

The module also hosts three pointwise checkers that the test-suite and the
``residual`` CLI subcommand expose:

* :func:`weight_pde_residual`   -- second-order coupling operator applied to
  a weight function rho at a pair (x, y), for diffusion matrix a = sigma
  sigma^T.  Nonpositivity of this residual is the sufficient condition for
  the coupled diffusion to contract the rho-cost.
* :func:`stable_identity_residual` -- the integral
  int [|1+h|^{a-1} - 1 - (a-1) h] |h|^{-1-a} dh over the real line, which
  vanishes identically for a in (1, 2).  Evaluated by a split quadrature
  with power-law-aware substitutions near 0, -1, and infinity.
* :func:`jump_dominance_check`  -- the dual inequality under which the
  common-jump coupling of two firing processes contracts the cost.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial.distance import cdist
from scipy.special import binom

from .errors import (
    InconsistentCoefficients,
    InvalidParameter,
    QuadratureFailure,
)

__all__ = [
    "PowerCost",
    "KineticSumCost",
    "DFunctionCost",
    "RegularizedAbsCost",
    "CustomCost",
    "omega_eps",
    "yamada",
    "weight_pde_residual",
    "stable_identity_residual",
    "jump_dominance_check",
]


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------

def omega_eps(r, eps: float):
    """Quadratic-cap regularization of r -> r.

    Returns ``(value, first, second)`` evaluated elementwise:

        value  = r^2 / (2 eps)      for r <= eps,   r - eps/2 beyond;
        second = 1/eps on [0, eps), 0 beyond.

    C^1 across r = eps, 0 <= value' <= 1, and 0 <= r - value <= eps/2.
    """
    if eps <= 0:
        raise InvalidParameter("eps must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidParameter("regularizers are defined for r >= 0")
    inside = r < eps
    value = np.where(inside, r**2 / (2.0 * eps), r - eps / 2.0)
    first = np.where(inside, r / eps, 1.0)
    second = np.where(inside, 1.0 / eps, 0.0)
    return value, first, second


def yamada(r, eps: float):
    """Two-knee regularization with second derivative 2 / (r |ln eps|).

    Returns ``(value, first, second)`` elementwise for the profile that is
    identically 0 up to eps^{3/2}, has second derivative 2/(r |ln eps|) on
    [eps^{3/2}, eps], and has slope 1 beyond eps.  The slope reaches exactly
    1 at r = eps because int_{eps^{3/2}}^{eps} 2/(r |ln eps|) dr = 1; the
    value there is eps - 2 (eps - eps^{3/2}) / |ln eps|.

    Requires 0 < eps < 1 (the profile degenerates at eps = 1).
    """
    if not 0 < eps < 1:
        raise InvalidParameter("eps must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidParameter("regularizers are defined for r >= 0")
    a = eps**1.5
    log_scale = abs(np.log(eps))
    r_safe = np.maximum(r, a)       # keep log/div well-defined off the band
    band = (r >= a) & (r <= eps)
    upper = r > eps
    band_value = (2.0 / log_scale) * (r_safe * np.log(r_safe / a) - r_safe + a)
    value_at_eps = eps - 2.0 * (eps - a) / log_scale
    value = np.where(band, band_value,
                     np.where(upper, value_at_eps + (r - eps), 0.0))
    first = np.where(band, 2.0 * np.log(r_safe / a) / log_scale,
                     np.where(upper, 1.0, 0.0))
    second = np.where(band, 2.0 / (r_safe * log_scale), 0.0)
    return value, first, second


# ---------------------------------------------------------------------------
# cost families
# ---------------------------------------------------------------------------

def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


class PowerCost:
    """rho(x, y) = |x - y|^p / p, p > 0.

    Exponents below 1 (concave costs) are valid for evaluation; the exact
    1D quantile solver separately restricts itself to p >= 1, where the
    monotone rearrangement is optimal.
    """

    def __init__(self, p: float):
        if p <= 0:
            raise InvalidParameter("power cost requires p > 0")
        self.p = float(p)

    def __repr__(self):
        return f"PowerCost(p={self.p})"

    def evaluate(self, x, y) -> float:
        z = np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))
        return float(np.linalg.norm(z) ** self.p / self.p)

    def pairwise(self, X, Y) -> np.ndarray:
        """Costs of same-index pairs of two (N, d) arrays."""
        d = _rows(X) - _rows(Y)
        return np.linalg.norm(d, axis=1) ** self.p / self.p

    def cross(self, X, Y) -> np.ndarray:
        """Full (N, M) cost matrix between two clouds."""
        return cdist(_rows(X), _rows(Y)) ** self.p / self.p

    def hessians(self, x, y):
        """Second-derivative blocks (H_xx, H_yy, H_xy) at an off-diagonal pair.

        For rho = |x-y|^p / p with z = x - y, r = |z| > 0:

            H_xx = r^{p-2} I + (p-2) r^{p-4} z z^T,  H_yy = H_xx,
            H_xy = -H_xx.
        """
        z = np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))
        r = float(np.linalg.norm(z))
        if r == 0.0:
            raise InvalidParameter("power-cost Hessian is undefined at x = y")
        d = z.shape[0]
        h = r ** (self.p - 2.0) * np.eye(d) \
            + (self.p - 2.0) * r ** (self.p - 4.0) * np.outer(z, z)
        return h, h.copy(), -h


class KineticSumCost:
    """rho((x, v), (y, w)) = a |x - y| + |v - w| on stacked (position, velocity).

    States are length-2k vectors; the first k entries are position.
    """

    def __init__(self, a: float = 1.0, position_dim: int = 1):
        if a < 0:
            raise InvalidParameter("position weight must be nonnegative")
        if position_dim < 1:
            raise InvalidParameter("position_dim must be >= 1")
        self.a = float(a)
        self.k = int(position_dim)

    def _split(self, X):
        X = _rows(X)
        if X.shape[1] != 2 * self.k:
            raise InvalidParameter(
                f"states must have {2 * self.k} components (position+velocity)"
            )
        return X[:, : self.k], X[:, self.k:]

    def evaluate(self, x, y) -> float:
        return float(self.pairwise(np.atleast_1d(x)[None, :],
                                   np.atleast_1d(y)[None, :])[0])

    def pairwise(self, X, Y) -> np.ndarray:
        x1, v1 = self._split(X)
        x2, v2 = self._split(Y)
        return self.a * np.linalg.norm(x1 - x2, axis=1) \
            + np.linalg.norm(v1 - v2, axis=1)

    def cross(self, X, Y) -> np.ndarray:
        x1, v1 = self._split(X)
        x2, v2 = self._split(Y)
        return self.a * cdist(x1, x2) + cdist(v1, v2)


class DFunctionCost:
    """rho(x, y) = |d(x)^p - d(y)^p| for a nonnegative vectorized map d."""

    def __init__(self, d_fn, p: float = 1.0):
        if p < 1:
            raise InvalidParameter("exponent must satisfy p >= 1")
        self.d_fn = d_fn
        self.p = float(p)

    def _dp(self, x):
        vals = np.asarray(self.d_fn(np.asarray(x, dtype=float)), dtype=float)
        return vals**self.p

    def evaluate(self, x, y) -> float:
        return float(abs(self._dp(x) - self._dp(y)))

    def pairwise(self, X, Y) -> np.ndarray:
        return np.abs(self._dp(np.ravel(X)) - self._dp(np.ravel(Y)))

    def cross(self, X, Y) -> np.ndarray:
        a = self._dp(np.ravel(X))
        b = self._dp(np.ravel(Y))
        return np.abs(a[:, None] - b[None, :])


class RegularizedAbsCost:
    """rho(x, y) = omega(|x - y|) for one of the two C^1 regularizations."""

    def __init__(self, eps: float, kind: str = "quadratic"):
        if kind not in ("quadratic", "two_knee"):
            raise InvalidParameter("kind must be 'quadratic' or 'two_knee'")
        self.eps = float(eps)
        self.kind = kind
        # validate eps eagerly
        self._omega(np.array([0.0]))

    def _omega(self, r):
        fn = omega_eps if self.kind == "quadratic" else yamada
        return fn(r, self.eps)[0]

    def evaluate(self, x, y) -> float:
        z = np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))
        return float(self._omega(np.array([np.linalg.norm(z)]))[0])

    def pairwise(self, X, Y) -> np.ndarray:
        d = np.linalg.norm(_rows(X) - _rows(Y), axis=1)
        return self._omega(d)

    def cross(self, X, Y) -> np.ndarray:
        return self._omega(cdist(_rows(X), _rows(Y)))


class CustomCost:
    """Arbitrary cost rho(x, y); Hessians by central differences if not given.

    ``hessians`` may be a callable with the same return convention as
    :meth:`PowerCost.hessians`; otherwise finite differences with step
    max(1e-5, 1e-5 |x - y|) are used.
    """

    def __init__(self, fn, hessians=None):
        self.fn = fn
        self._hessians = hessians

    def evaluate(self, x, y) -> float:
        return float(self.fn(np.atleast_1d(np.asarray(x, float)),
                             np.atleast_1d(np.asarray(y, float))))

    def pairwise(self, X, Y) -> np.ndarray:
        X, Y = _rows(X), _rows(Y)
        return np.array([self.fn(X[i], Y[i]) for i in range(X.shape[0])])

    def cross(self, X, Y) -> np.ndarray:
        X, Y = _rows(X), _rows(Y)
        return np.array([[self.fn(xi, yj) for yj in Y] for xi in X])

    def hessians(self, x, y):
        if self._hessians is not None:
            return self._hessians(x, y)
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        d = x.shape[0]
        z = np.concatenate([x, y])
        step = max(1e-5, 1e-5 * float(np.linalg.norm(x - y)))

        def f(v):
            return float(self.fn(v[:d], v[d:]))

        full = np.empty((2 * d, 2 * d))
        for i in range(2 * d):
            for j in range(i, 2 * d):
                ei = np.zeros(2 * d)
                ej = np.zeros(2 * d)
                ei[i] = step
                ej[j] = step
                val = (f(z + ei + ej) - f(z + ei - ej)
                       - f(z - ei + ej) + f(z - ei - ej)) / (4.0 * step**2)
                full[i, j] = full[j, i] = val
        return full[:d, :d], full[d:, d:], full[:d, d:]


# ---------------------------------------------------------------------------
# coupling-operator residual for weight functions
# ---------------------------------------------------------------------------

def _matrix_at(field, point, d: int) -> np.ndarray:
    m = np.asarray(field(point), dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m[:, None]
    if m.shape[0] != d:
        raise InvalidParameter(
            f"coefficient field returned {m.shape[0]} rows for dimension {d}"
        )
    return m


def weight_pde_residual(a_field, sigma_field, cost, x, y,
                        consistency_tol: float = 1e-10) -> float:
    """Coupled second-order operator applied to the cost at a pair (x, y).

    Evaluates

        sum_ij a_ij(x) d2rho/dx_i dx_j + sum_ij a_ij(y) d2rho/dy_i dy_j
        + 2 sum_ijk sigma_ik(x) sigma_jk(y) d2rho/dx_i dy_j .

    ``a_field(x)`` must equal ``sigma_field(x) sigma_field(x)^T`` within
    ``consistency_tol`` at both points (:class:`InconsistentCoefficients`
    otherwise); scalars are accepted in one dimension.  A nonpositive value
    certifies that the synchronously coupled diffusion does not expand the
    rho-cost at this pair.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise InvalidParameter("x and y must have the same dimension")
    d = x.shape[0]

    sig_x = _matrix_at(sigma_field, x, d)
    sig_y = _matrix_at(sigma_field, y, d)
    a_x = _matrix_at(a_field, x, d)
    a_y = _matrix_at(a_field, y, d)
    for a_mat, sig, tag in ((a_x, sig_x, "x"), (a_y, sig_y, "y")):
        if a_mat.shape != (d, d):
            raise InvalidParameter(f"a({tag}) must be a {d}x{d} matrix")
        gap = np.max(np.abs(a_mat - sig @ sig.T))
        if gap > consistency_tol:
            raise InconsistentCoefficients(
                f"a({tag}) differs from sigma sigma^T by {gap:.3e}"
            )

    h_xx, h_yy, h_xy = cost.hessians(x, y)
    mixed = sig_x @ sig_y.T
    return float(np.sum(a_x * h_xx) + np.sum(a_y * h_yy)
                 + 2.0 * np.sum(mixed * h_xy))


# ---------------------------------------------------------------------------
# stable-symbol identity
# ---------------------------------------------------------------------------

def _gauss_panels(fn, edges, nodes: int) -> float:
    """Composite Gauss-Legendre quadrature of fn over consecutive edges."""
    xg, wg = leggauss(nodes)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        total += half * float(wg @ fn(mid + half * xg))
    return total


def _geometric_edges(a: float, b: float, ratio: float = 2.0) -> np.ndarray:
    edges = [a]
    while edges[-1] * ratio < b:
        edges.append(edges[-1] * ratio)
    edges.append(b)
    return np.asarray(edges)


def stable_identity_residual(alpha: float, truncation: float = 1e4,
                             nodes: int = 32) -> float:
    """Residual of int_R [|1+h|^{a-1} - 1 - (a-1) h] |h|^{-1-a} dh = 0.

    The identity holds exactly for ``alpha`` in (1, 2); the returned value is
    the quadrature-plan output and measures the plan's accuracy.  The domain
    is split at -1 +/- 1/4, +/- 1/2, and +/- ``truncation``:

    * central band: the odd part integrates to zero over (-r, r) exactly, so
      the even part is integrated on (0, 1/2) with the substitution
      t = h^{2 - alpha}, which absorbs the h^{1 - alpha} endpoint behavior;
      the remaining factor is evaluated by series near 0 to dodge the
      catastrophic cancellation in (1+h)^{a-1} + (1-h)^{a-1} - 2;
    * around -1: the |1+h|^{a-1} factor is integrated with s = |1+h|^alpha
      (constant Jacobian for the singular power), the smooth remainder by
      plain panels;
    * beyond ``truncation``: u = 1/h maps both tails to (0, 1/truncation];
      their sum is (1+u)^{a-1} + (1-u)^{a-1} - 2 u^{a-1}, whose singular
      u^{a-1} piece is integrated in closed form.

    ``nodes`` is the Gauss-Legendre order per panel and is the refinement
    knob: the residual decreases with ``nodes`` until roundoff.
    """
    if not 1.0 < alpha < 2.0:
        raise InvalidParameter("alpha must lie in (1, 2)")
    if truncation < 10.0:
        raise InvalidParameter("truncation must be >= 10")
    if nodes < 2:
        raise InvalidParameter("need at least 2 nodes per panel")
    s = alpha - 1.0
    band = 0.5          # split point near 0
    delta = 0.25        # half-width of the window around -1

    def f(h):
        h = np.asarray(h, dtype=float)
        return (np.abs(1.0 + h) ** s - 1.0 - s * h) * np.abs(h) ** (-1.0 - alpha)

    # central band: even part, substitution t = h^(2 - alpha)
    two_minus = 2.0 - alpha

    def psi(h):
        """[(1+h)^s + (1-h)^s - 2] / h^2, series below h = 0.01."""
        h = np.asarray(h, dtype=float)
        out = np.empty_like(h)
        small = h < 0.01
        hs = h[small]
        out[small] = 2.0 * (binom(s, 2) + binom(s, 4) * hs**2
                            + binom(s, 6) * hs**4 + binom(s, 8) * hs**6)
        hl = h[~small]
        out[~small] = ((1.0 + hl) ** s + (1.0 - hl) ** s - 2.0) / hl**2
        return out

    def central_integrand(t):
        return psi(t ** (1.0 / two_minus)) / two_minus

    total = _gauss_panels(central_integrand,
                          np.linspace(0.0, band**two_minus, 5), nodes)

    # smooth positive side (band, truncation)
    total += _gauss_panels(f, _geometric_edges(band, truncation), nodes)

    # smooth negative pieces (-truncation, -1-delta) and (-1+delta, -band)
    total += _gauss_panels(lambda h: f(-h),
                           _geometric_edges(1.0 + delta, truncation), nodes)
    total += _gauss_panels(lambda h: f(-h), np.linspace(band, 1.0 - delta, 3),
                           nodes)

    # window around -1: split off the |1+h|^s factor
    def phi1(h):      # |h|^{-1-alpha}, smooth near -1
        return np.abs(h) ** (-1.0 - alpha)

    def phi2(h):      # (-1 - s h) |h|^{-1-alpha}, smooth near -1
        return (-1.0 - s * h) * np.abs(h) ** (-1.0 - alpha)

    total += _gauss_panels(phi2, np.linspace(-1.0 - delta, -1.0 + delta, 3),
                           nodes)
    # right of -1: h = -1 + q, q in (0, delta); substitution sb = q^alpha
    total += _gauss_panels(
        lambda sb: phi1(-1.0 + sb ** (1.0 / alpha)) / alpha,
        np.linspace(0.0, delta**alpha, 3), nodes)
    # left of -1: h = -1 - q
    total += _gauss_panels(
        lambda sb: phi1(-1.0 - sb ** (1.0 / alpha)) / alpha,
        np.linspace(0.0, delta**alpha, 3), nodes)

    # tails beyond truncation, mapped by u = 1/h and summed
    eps = 1.0 / truncation
    total += _gauss_panels(
        lambda u: (1.0 + u) ** s + (1.0 - u) ** s,
        np.linspace(0.0, eps, 3), nodes)
    total -= 2.0 * eps**alpha / alpha

    return total


# ---------------------------------------------------------------------------
# jump dual inequality
# ---------------------------------------------------------------------------

def _birth_quadrature(b: dict, nodes: int):
    """Nodes z_k and masses m_k with sum m_k = 1 for a birth distribution."""
    family = b.get("family")
    if family == "dirac":
        return np.array([float(b.get("at", 0.0))]), np.array([1.0])
    if family == "uniform":
        low, high = float(b.get("low", 0.0)), float(b.get("high", 1.0))
        if high <= low:
            raise InvalidParameter("uniform birth law requires low < high")
        xg, wg = leggauss(nodes)
        z = 0.5 * (low + high) + 0.5 * (high - low) * xg
        m = 0.5 * wg        # integrates density 1/(high-low) exactly
        return z, m
    if family == "density":
        low, high = float(b["low"]), float(b["high"])
        fn = b["fn"]
        xg, wg = leggauss(nodes)
        z = 0.5 * (low + high) + 0.5 * (high - low) * xg
        m = 0.5 * (high - low) * wg * np.asarray(fn(z), dtype=float)
        total = m.sum()
        if abs(total - 1.0) > 1e-6:
            raise QuadratureFailure(
                f"birth density integrates to {total:.8f}, not 1"
            )
        return z, m
    raise InvalidParameter(f"unknown birth family {b.get('family')!r}")


def jump_dominance_check(cost, d_fn, b: dict, x: float, y: float,
                         nodes: int = 256) -> dict:
    """Dual inequality for the common-jump coupling of two firing processes.

    Checks, at the pair (x, y),

        rho(x, y) max(d(x), d(y))
            >= int [ rho(z, y) (d(x) - d(y))_+ + rho(x, z) (d(y) - d(x))_+ ]
               b(z) dz ,

    where d is the state-dependent firing rate and b the post-jump law.
    Returns ``{"lhs", "rhs", "margin", "holds"}`` with margin = lhs - rhs;
    a nonnegative margin at all pairs certifies that the coupling contracts
    the expected rho-cost.
    """
    dx = float(np.asarray(d_fn(np.asarray([x], dtype=float)))[0])
    dy = float(np.asarray(d_fn(np.asarray([y], dtype=float)))[0])
    if dx < 0 or dy < 0:
        raise InvalidParameter("firing rates must be nonnegative")
    z, m = _birth_quadrature(b, nodes)
    lhs = cost.evaluate(x, y) * max(dx, dy)
    rho_zy = cost.pairwise(z, np.full_like(z, y))
    rho_xz = cost.pairwise(np.full_like(z, x), z)
    rhs = float(m @ rho_zy) * max(dx - dy, 0.0) \
        + float(m @ rho_xz) * max(dy - dx, 0.0)
    margin = lhs - rhs
    return {"lhs": lhs, "rhs": rhs, "margin": margin, "holds": margin >= -1e-12}
