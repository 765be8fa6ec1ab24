"""Distance time series, bootstrap bands, decay-rate fits, monotonicity.

Every experiment in this package produces a :class:`DistanceSeries`: the
coupled-cost values at checkpoint times, optionally an exact-LP distance on
subsampled marginals, and a bootstrap confidence band.  The two verdict
helpers quantify the two claim shapes the experiments test: exponential
decay at a known rate, and monotone non-increase within a noise budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, NonPositiveValues

__all__ = [
    "DistanceSeries",
    "bootstrap_series",
    "pool_series",
    "fit_decay_rate",
    "monotonicity_verdict",
]


@dataclass
class DistanceSeries:
    """Checkpointed cost series of one run (or a pooled set of runs)."""

    scenario_id: str
    seed: int | str
    times: np.ndarray
    coupled: np.ndarray
    lp: np.ndarray | None = None
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    stderr: np.ndarray | None = None
    cost_label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coupled = np.asarray(self.coupled, dtype=float)
        if self.times.shape != self.coupled.shape:
            raise InvalidParameter("times and values must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameter("times must be strictly increasing")
        for name in ("lp", "ci_low", "ci_high", "stderr"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != self.times.shape:
                    raise InvalidParameter(f"{name} length mismatch")
                setattr(self, name, arr)
        if self.ci_low is not None and self.ci_high is not None:
            ok = (self.ci_low <= self.coupled + 1e-12) \
                & (self.coupled <= self.ci_high + 1e-12)
            if not np.all(ok):
                raise InvalidParameter("confidence band does not bracket values")

    def monotonicity_budget(self, multiplier: float = 2.0) -> np.ndarray | float:
        """Per-checkpoint noise budget: multiplier * bootstrap stderr."""
        if self.stderr is None:
            return 0.0
        return multiplier * self.stderr


def bootstrap_series(pair_costs: np.ndarray, rng: np.random.Generator,
                     n_resamples: int = 200, chunk: int = 50):
    """Percentile bootstrap of per-checkpoint means over pair resampling.

    ``pair_costs`` has shape (checkpoints, pairs).  The same resampled pair
    index sets are reused across checkpoints (paired bootstrap), so the band
    is coherent along the series.  Returns (mean, ci_low, ci_high, stderr).
    """
    pair_costs = np.atleast_2d(np.asarray(pair_costs, dtype=float))
    k, n = pair_costs.shape
    means = pair_costs.mean(axis=1)
    boots = np.empty((n_resamples, k))
    done = 0
    while done < n_resamples:
        b = min(chunk, n_resamples - done)
        idx = rng.integers(0, n, size=(b, n))
        for row in range(b):
            boots[done + row] = pair_costs[:, idx[row]].mean(axis=1)
        done += b
    ci_low = np.percentile(boots, 2.5, axis=0)
    ci_high = np.percentile(boots, 97.5, axis=0)
    stderr = boots.std(axis=0, ddof=1)
    # percentile bands can sit strictly inside the point estimate's rounding
    ci_low = np.minimum(ci_low, means)
    ci_high = np.maximum(ci_high, means)
    return means, ci_low, ci_high, stderr


def pool_series(runs: list[DistanceSeries],
                scenario_id: str | None = None) -> DistanceSeries:
    """Average per-seed series into one pooled series (seed = "pooled").

    Seeds are independent, so the pooled standard error is the root mean
    square of the per-seed bootstrap standard errors divided by the seed
    count; the pooled band is the +/- 1.96 stderr normal approximation.
    """
    if not runs:
        raise InvalidParameter("no series to pool")
    times = runs[0].times
    for r in runs[1:]:
        if not np.array_equal(r.times, times):
            raise InvalidParameter("pooled series require identical times")
    coupled = np.mean([r.coupled for r in runs], axis=0)
    lp = None
    if all(r.lp is not None for r in runs):
        lp = np.mean([r.lp for r in runs], axis=0)
    stderr = None
    ci_low = ci_high = None
    if all(r.stderr is not None for r in runs):
        stderr = np.sqrt(np.mean([r.stderr**2 for r in runs], axis=0)
                         / len(runs))
    elif len(runs) >= 2:
        # runs without their own band (single interacting systems): use the
        # spread across independent replicas
        stderr = np.std([r.coupled for r in runs], axis=0, ddof=1) \
            / np.sqrt(len(runs))
    if stderr is not None:
        ci_low = coupled - 1.96 * stderr
        ci_high = coupled + 1.96 * stderr
    return DistanceSeries(
        scenario_id=scenario_id or runs[0].scenario_id,
        seed="pooled",
        times=times,
        coupled=coupled,
        lp=lp,
        ci_low=ci_low,
        ci_high=ci_high,
        stderr=stderr,
        cost_label=runs[0].cost_label,
        meta={"pooled_from": [r.seed for r in runs]},
    )


def fit_decay_rate(series: DistanceSeries, window: tuple[float, float] | None = None,
                   use_lp: bool = False) -> dict:
    """Least-squares slope of log(value) against t on a time window.

    Returns ``{"rate", "stderr", "r_squared"}``.  All values in the window
    must be strictly positive (:class:`NonPositiveValues` otherwise); at
    least three points are required for the standard error.
    """
    values = series.lp if use_lp else series.coupled
    if values is None:
        raise InvalidParameter("series has no values of the requested kind")
    t = series.times
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, values = t[keep], values[keep]
    if t.size < 3:
        raise InvalidParameter("rate fit needs at least 3 checkpoints")
    if np.any(values <= 0):
        raise NonPositiveValues("log-linear fit requires positive values")
    logv = np.log(values)
    tbar = t.mean()
    sxx = float(np.sum((t - tbar) ** 2))
    slope = float(np.sum((t - tbar) * (logv - logv.mean())) / sxx)
    intercept = float(logv.mean() - slope * tbar)
    resid = logv - (intercept + slope * t)
    ssr = float(resid @ resid)
    sst = float(np.sum((logv - logv.mean()) ** 2))
    sigma2 = ssr / (t.size - 2)
    return {
        "rate": slope,
        "stderr": float(np.sqrt(sigma2 / sxx)),
        "r_squared": 1.0 - ssr / sst if sst > 0 else 1.0,
    }


def monotonicity_verdict(series: DistanceSeries, error_budget=None) -> dict:
    """Check that the series is non-increasing up to a noise budget.

    ``error_budget`` is a scalar, a per-checkpoint array (the allowed
    increase over a step is the larger of its two endpoint budgets), or
    None, which uses the series' own 2-stderr bootstrap budget.  Returns
    ``{"monotone", "worst_violation"}`` where the violation is the largest
    budget exceedance (0 when monotone).
    """
    if error_budget is None:
        error_budget = series.monotonicity_budget()
    budget = np.asarray(error_budget, dtype=float)
    diffs = np.diff(series.coupled)
    if budget.ndim == 0:
        step_budget = np.full_like(diffs, float(budget))
    else:
        if budget.shape != series.times.shape:
            raise InvalidParameter("budget array length mismatch")
        step_budget = np.maximum(budget[:-1], budget[1:])
    excess = diffs - step_budget
    worst = float(np.max(excess)) if excess.size else 0.0
    return {"monotone": worst <= 0.0, "worst_violation": max(worst, 0.0)}
