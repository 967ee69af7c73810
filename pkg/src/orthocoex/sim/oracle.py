"""Brute-force checks for the synchronous stopping rule.

``monte_carlo_lambda`` simulates the renewal process seen by a synchronous LBT
node directly: geometric numbers of MAC slots between LIFS opportunities and a
uniform residual time at each one.  All candidate thresholds are scored on the
same draws.  ``sample_t_res_distribution`` tests residual times recorded by
the event simulator against the uniform law.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import DomainError, InsufficientSamplesError
from ..metrics import RunMetrics

MIN_KS_SAMPLES = 10_000


def threshold_rates(
    p_idle: float,
    t_slot: float,
    t_lbt: float,
    threshold_grid: int = 50,
    draws: int = 1_000_000,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical goodput ratio ΣY / Σ(invested time) for evenly spaced thresholds on T_res."""
    if threshold_grid < 2:
        raise DomainError("threshold_grid must be at least 2")
    if draws < 100_000:
        raise DomainError("need at least 1e5 draws")
    if not 0.0 < p_idle < 1.0:
        raise DomainError(f"P_idle must lie in (0, 1), got {p_idle}")
    rng = np.random.Generator(np.random.PCG64(seed))
    waits = rng.geometric(1.0 - p_idle, size=draws)
    t_res = np.sort(rng.uniform(0.0, t_lbt, size=draws))
    useful = np.concatenate(([0.0], np.cumsum(t_lbt - t_res)))
    waiting = float(waits.sum()) * t_slot

    grid = np.linspace(0.0, t_lbt, threshold_grid)
    takes = np.searchsorted(t_res, grid, side="left")
    rates = useful[takes] / (waiting + t_lbt * takes)
    return grid, rates


def monte_carlo_lambda(
    p_idle: float,
    t_slot: float,
    t_lbt: float,
    threshold_grid: int = 50,
    draws: int = 1_000_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Grid argmax (threshold, rate) of the empirical goodput ratio."""
    grid, rates = threshold_rates(p_idle, t_slot, t_lbt, threshold_grid, draws, seed)
    best = int(np.argmax(rates))
    return float(grid[best]), float(rates[best])


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    n: int

    def rejected(self, alpha: float = 0.01) -> bool:
        return self.pvalue < alpha


def sample_t_res_distribution(
    metrics: RunMetrics, min_samples: int = MIN_KS_SAMPLES
) -> KsResult:
    """Kolmogorov-Smirnov test of recorded residual times against U(0, T_LBT)."""
    samples = np.asarray(metrics.t_res_samples)
    if samples.size < min_samples:
        raise InsufficientSamplesError(
            f"{samples.size} residual-time samples, need at least {min_samples}")
    result = stats.kstest(samples, "uniform", args=(0.0, metrics.t_lbt))
    return KsResult(statistic=float(result.statistic), pvalue=float(result.pvalue),
                    n=int(samples.size))
