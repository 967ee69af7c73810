"""Tests for orthocoex.sim.oracle: Monte Carlo stopping rule and KS uniformity."""

import numpy as np
import pytest

from orthocoex.errors import DomainError, InsufficientSamplesError
from orthocoex.harness import simulate
from orthocoex.metrics import RunMetrics
from orthocoex.policy import solve_lambda_opt
from orthocoex.scenario import build_scenario
from orthocoex.sim.oracle import (
    monte_carlo_lambda,
    sample_t_res_distribution,
    threshold_rates,
)


def _metrics_with(samples, t_lbt=1000.0):
    return RunMetrics(scenario_id="x", seed=0, lbt_mode="olaa", has_lbt=True, t_lbt=t_lbt,
                      window=1.0, idle_time=1.0, t_res_samples=tuple(samples))


@pytest.mark.parametrize("beta", [0.1, 0.5, 1.0, 5.0])
def test_monte_carlo_matches_lambda(beta):
    p_idle, t_lbt = 0.5, 1000.0
    t_slot = beta * (1 - p_idle) * t_lbt
    _, best_rate = monte_carlo_lambda(p_idle, t_slot, t_lbt, seed=3)
    assert best_rate == pytest.approx(solve_lambda_opt(p_idle, t_slot, t_lbt), rel=0.02)


def test_best_threshold_near_optimum():
    p_idle, t_slot, t_lbt = 0.5, 250.0, 1000.0
    threshold, _ = monte_carlo_lambda(p_idle, t_slot, t_lbt, threshold_grid=101, seed=5)
    lam = solve_lambda_opt(p_idle, t_slot, t_lbt)
    assert threshold == pytest.approx(t_lbt * (1 - lam), abs=30.0)


def test_zero_threshold_earns_nothing():
    grid, rates = threshold_rates(0.5, 100.0, 1000.0, threshold_grid=5)
    assert grid[0] == 0.0
    assert rates[0] == 0.0
    assert grid[-1] == 1000.0
    assert np.all(rates[1:] > 0)


def test_threshold_rates_reproducible():
    a = threshold_rates(0.4, 80.0, 1000.0, seed=9)[1]
    b = threshold_rates(0.4, 80.0, 1000.0, seed=9)[1]
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kwargs", [
    {"threshold_grid": 1},
    {"draws": 1000},
    {"p_idle": 1.0},
])
def test_oracle_domain(kwargs):
    args = {"p_idle": 0.5, "t_slot": 100.0, "t_lbt": 1000.0, **kwargs}
    with pytest.raises(DomainError):
        threshold_rates(**args)


def test_ks_requires_samples():
    with pytest.raises(InsufficientSamplesError):
        sample_t_res_distribution(_metrics_with([1.0, 2.0]))


def test_ks_accepts_uniform_samples():
    rng = np.random.default_rng(1)
    result = sample_t_res_distribution(_metrics_with(rng.uniform(0, 1000.0, 20_000)))
    assert result.n == 20_000
    assert not result.rejected(0.01)


def test_ks_rejects_half_frame():
    rng = np.random.default_rng(1)
    result = sample_t_res_distribution(_metrics_with(rng.uniform(0, 500.0, 20_000)))
    assert result.rejected(0.01)


@pytest.mark.slow
def test_simulated_residual_times_are_uniform():
    scenario = build_scenario({
        "wifi.n": 5, "wifi.mpdu_bytes": 1500, "lbt.mode": "olaa",
        "scenario.sim_duration": 40, "scenario.seed": 21,
    })
    metrics = simulate(scenario)
    assert metrics.lbt_opportunities >= 100_000
    assert not sample_t_res_distribution(metrics).rejected(0.01)
