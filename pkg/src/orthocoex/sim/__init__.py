"""Event simulation of the shared channel and its statistical oracles."""

from .engine import ChannelSimulation, check_invariants, run_scenario
from .oracle import KsResult, monte_carlo_lambda, sample_t_res_distribution, threshold_rates

__all__ = [
    "ChannelSimulation",
    "KsResult",
    "check_invariants",
    "monte_carlo_lambda",
    "run_scenario",
    "sample_t_res_distribution",
    "threshold_rates",
]
