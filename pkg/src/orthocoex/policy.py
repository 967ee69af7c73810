"""Transmission policies for an orthogonal LBT node.

ORLA takes each LIFS opportunity with probability π(ρ̄) and holds the channel
for ν bursts; OLAA takes an opportunity only when the residual time to the
next frame boundary is short enough, the threshold coming from an optimal
stopping (rate of return) problem capped by the same fairness budget.

Usage:
    policy = derive_policy(PhyProfile(), [StationProfile()] * 5, 1000.0,
                           newcomer_profile([StationProfile()] * 5, 130.0, None))
    orla_decide(rng.random(), policy.take_prob_pi)
    olaa_decide(t_res, policy.olaa_threshold)
"""

import logging
import math
from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np

from .analytic import (
    slot_stats_heterogeneous,
    slot_stats_homogeneous,
    solve_heterogeneous_attempt_rates,
    solve_saturated_attempt_rate,
    tx_duration,
)
from .errors import DomainError, SolverError
from .schema import DcfParams, PhyProfile, PolicyParams, SlotStats, StationProfile

log = logging.getLogger(__name__)

LAMBDA_TOL = 1e-10
LAMBDA_START = 0.5
LAMBDA_DAMPING = 0.5
LAMBDA_MAX_ITERATIONS = 10_000
QUADRATURE_POINTS = 200

RhoVariant = Literal["tight", "closed_form"]
Density = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Fairness budget ρ̄
# ---------------------------------------------------------------------------

def rho_bar_homogeneous(
    stats_n: SlotStats,
    stats_n1: SlotStats,
    t: float,
    t_lbt: float,
    sigma: float,
    variant: RhoVariant = "tight",
) -> float:
    """Largest ρ for which n WiFi stations plus LBT fare no worse than n + 1 stations.

    With r = p_succ^(n)/p_succ^(n+1), the fairness inequality solved at equality
    gives ((T−σ)/T_LBT)·[(r·P_tx^(n+1) − P_tx^(n))/P_idle^(n) + σ(r−1)/((T−σ)P_idle^(n))].
    ``variant="closed_form"`` drops the σ(r−1) term, which yields a slightly smaller,
    still admissible budget.  Both variants cap the bracket at 1.
    """
    if t <= sigma:
        raise DomainError(f"frame duration T={t} must exceed the idle slot σ={sigma}")
    if t_lbt <= 0:
        raise DomainError(f"T_LBT must be positive, got {t_lbt}")
    if stats_n.p_idle <= 0:
        raise DomainError("no idle slots to claim")
    r = stats_n.p_succ_per_station[0] / stats_n1.p_succ_per_station[0]
    bracket = (r * stats_n1.p_tx - stats_n.p_tx) / stats_n.p_idle
    if variant == "tight":
        bracket += sigma * (r - 1.0) / ((t - sigma) * stats_n.p_idle)
    return max(0.0, (t - sigma) / t_lbt * min(1.0, bracket))


def rho_bar_heterogeneous(
    stats_actual: SlotStats,
    stats_plus_one: SlotStats,
    member_indices: Sequence[int],
    t_lbt: float,
) -> float:
    """Largest ρ keeping the members' airtime at least what a saturated newcomer leaves them.

    Returns ``math.inf`` when there are no members to protect.
    """
    if not member_indices:
        return math.inf
    if stats_actual.p_idle <= 0:
        raise DomainError("no idle slots to claim")
    if t_lbt <= 0:
        raise DomainError(f"T_LBT must be positive, got {t_lbt}")
    busy_actual = sum(stats_actual.p_succ_per_station[i] * stats_actual.t_succ_per_station[i]
                      for i in member_indices)
    busy_plus = sum(stats_plus_one.p_succ_per_station[i] * stats_plus_one.t_succ_per_station[i]
                    for i in member_indices)
    if busy_plus <= 0:
        raise DomainError("members never succeed with the newcomer present")
    rho = (busy_actual / busy_plus * stats_plus_one.t_slot - stats_actual.t_slot) / (
        stats_actual.p_idle * t_lbt
    )
    return max(0.0, rho)


# ---------------------------------------------------------------------------
# ORLA
# ---------------------------------------------------------------------------

def _idle_ratio(rho: float, p_idle: float) -> float:
    if rho < 0:
        raise DomainError(f"rho must be non-negative, got {rho}")
    if not 0.0 < p_idle < 1.0:
        raise DomainError(f"P_idle must lie in (0, 1), got {p_idle}")
    return rho * p_idle / (1.0 - p_idle)


def take_probability(rho: float, p_idle: float) -> float:
    """π(ρ) = min{1, ρ·P_idle/(1 − P_idle)}."""
    return min(1.0, _idle_ratio(rho, p_idle))


def bursts_per_take(rho: float, p_idle: float) -> float:
    """ν = max{1, ρ·P_idle/(1 − P_idle)}; may be fractional."""
    return max(1.0, _idle_ratio(rho, p_idle))


def burst_schedule(nu: float, t_lbt: float) -> list[float]:
    """Burst lengths of one take: ⌊ν⌋ full bursts and a truncated last one."""
    full = math.floor(nu)
    bursts = [t_lbt] * full
    remainder = (nu - full) * t_lbt
    if remainder > 1e-9:
        bursts.append(remainder)
    return bursts


def hold_duration(bursts: Sequence[float], lifs: float) -> float:
    """Channel time of one take, LIFS gaps between bursts included."""
    return sum(bursts) + lifs * max(0, len(bursts) - 1)


def orla_decide(rand_u: float, take_prob_pi: float) -> bool:
    return rand_u < take_prob_pi


# ---------------------------------------------------------------------------
# OLAA
# ---------------------------------------------------------------------------

def _uniform_moments(threshold: float, t_lbt: float) -> tuple[float, float]:
    """E[Y·1{T_res < θ}] and Pr[T_res < θ] for T_res ~ U(0, T_LBT), Y = T_LBT − T_res."""
    return (threshold * t_lbt - threshold**2 / 2.0) / t_lbt, threshold / t_lbt


def _quadrature_moments(threshold: float, t_lbt: float, pdf: Density) -> tuple[float, float]:
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_POINTS)
    x = 0.5 * threshold * (nodes + 1.0)
    w = 0.5 * threshold * weights
    density = pdf(x)
    return float(w @ ((t_lbt - x) * density)), float(w @ density)


def solve_lambda_opt(
    p_idle: float,
    t_slot: float,
    t_lbt: float,
    t_res_pdf: Density | None = None,
) -> float:
    """Optimal long-run goodput ratio λ‡ of the synchronous stopping problem.

    λ‡ solves E[(Y − λT_LBT)⁺] = λ·T_slot/(1 − P_idle).  The solver iterates the
    equivalent rate-of-return map

        λ ← E[Y·1{Y ≥ λT_LBT}] / (T_slot/(1 − P_idle) + T_LBT·Pr[Y ≥ λT_LBT])

    with damping; the map's derivative vanishes at the fixed point, so the
    iteration is stable for every β = T_slot/((1 − P_idle)·T_LBT).  Without
    ``t_res_pdf`` the residual time is uniform on [0, T_LBT].
    """
    if not 0.0 < p_idle < 1.0:
        raise DomainError(f"P_idle must lie in (0, 1), got {p_idle}")
    if t_slot <= 0 or t_lbt <= 0:
        raise DomainError("T_slot and T_LBT must be positive")
    wait = t_slot / (1.0 - p_idle)

    def moments(lam: float) -> tuple[float, float]:
        threshold = t_lbt * (1.0 - lam)
        if t_res_pdf is None:
            return _uniform_moments(threshold, t_lbt)
        return _quadrature_moments(threshold, t_lbt, t_res_pdf)

    lam = LAMBDA_START
    for iteration in range(1, LAMBDA_MAX_ITERATIONS + 1):
        gain, prob = moments(lam)
        target = gain / (wait + t_lbt * prob)
        if abs(target - lam) < LAMBDA_TOL:
            lam = target
            break
        lam = LAMBDA_DAMPING * lam + (1.0 - LAMBDA_DAMPING) * target
    gain, prob = moments(lam)
    residual = abs(gain - lam * t_lbt * prob - lam * wait)
    log.debug("lambda_opt=%.10f after %d iterations (residual %.2e)", lam, iteration, residual)
    if residual > 1e-8 * t_lbt:
        raise SolverError("optimal stopping fixed point", residual, iteration)
    return lam


def olaa_threshold(lambda_opt: float, take_prob_pi: float, t_lbt: float) -> float:
    """Take iff T_res < min(T_LBT·(1 − λ‡), π·T_LBT)."""
    return min(t_lbt * (1.0 - lambda_opt), take_prob_pi * t_lbt)


def olaa_decide(t_res: float, threshold: float) -> bool:
    return t_res < threshold


# ---------------------------------------------------------------------------
# Operating point
# ---------------------------------------------------------------------------

def newcomer_profile(
    stations: Sequence[StationProfile], lbt_rate: float, lbt_dcf: DcfParams | None
) -> StationProfile:
    """The saturated WiFi station that would join instead of the LBT node."""
    base = stations[0] if stations else StationProfile()
    return base.model_copy(update={
        "dcf": lbt_dcf or base.dcf,
        "data_rate_c": lbt_rate,
        "arrival_prob_q": 1.0,
    })


def derive_policy(
    phy: PhyProfile,
    stations: Sequence[StationProfile],
    t_lbt: float,
    newcomer: StationProfile,
    *,
    exact_dcf: bool = True,
    variant: RhoVariant = "tight",
) -> PolicyParams:
    """Compute ρ̄, π, ν, λ‡ and the OLAA threshold for a WiFi population.

    Identical saturated populations whose newcomer is one more of the same use
    the homogeneous model; anything else goes through the renewal model with
    the newcomer appended.  Without WiFi stations the node may take everything.
    """
    if not stations:
        return PolicyParams(rho_bar=math.inf, take_prob_pi=1.0, bursts_per_take_nu=1.0,
                            lambda_opt=1.0, olaa_threshold=t_lbt, t_lbt=t_lbt)
    n = len(stations)
    if all(s == newcomer for s in stations):
        dcf = newcomer.dcf
        stats = slot_stats_homogeneous(
            solve_saturated_attempt_rate(n, dcf, exact_dcf=exact_dcf), phy, newcomer, n)
        stats_n1 = slot_stats_homogeneous(
            solve_saturated_attempt_rate(n + 1, dcf, exact_dcf=exact_dcf), phy, newcomer, n + 1)
        rho = rho_bar_homogeneous(stats, stats_n1, tx_duration(phy, newcomer), t_lbt,
                                  phy.slot_sigma, variant)
    else:
        stats = slot_stats_heterogeneous(
            solve_heterogeneous_attempt_rates(stations, phy, exact_dcf=exact_dcf),
            stations, phy)
        plus_one = [*stations, newcomer]
        stats_n1 = slot_stats_heterogeneous(
            solve_heterogeneous_attempt_rates(plus_one, phy, exact_dcf=exact_dcf),
            plus_one, phy)
        rho = rho_bar_heterogeneous(stats, stats_n1, range(n), t_lbt)
    pi = take_probability(rho, stats.p_idle)
    nu = bursts_per_take(rho, stats.p_idle)
    lam = solve_lambda_opt(stats.p_idle, stats.t_slot, t_lbt)
    log.info("policy: rho_bar=%.5f pi=%.5f nu=%.3f lambda=%.5f", rho, pi, nu, lam)
    return PolicyParams(
        rho_bar=rho,
        take_prob_pi=pi,
        bursts_per_take_nu=nu,
        lambda_opt=lam,
        olaa_threshold=olaa_threshold(lam, pi, t_lbt),
        t_lbt=t_lbt,
    )


# ---------------------------------------------------------------------------
# Predicted LBT goodput
# ---------------------------------------------------------------------------

def lbt_goodput_orla(policy: PolicyParams, stats: SlotStats, lifs: float,
                     lbt_rate: float) -> float:
    """Mb/s of an ORLA node: π·P_tx takes per MAC slot, ν·T_LBT of data each."""
    bursts = burst_schedule(policy.bursts_per_take_nu, policy.t_lbt)
    takes = policy.take_prob_pi * stats.p_tx
    added = takes * hold_duration(bursts, lifs)
    return takes * sum(bursts) * lbt_rate / (stats.t_slot + added)


def lbt_goodput_olaa(policy: PolicyParams, stats: SlotStats, lbt_rate: float) -> float:
    """Mb/s of an OLAA node under uniform residual times.

    A take holds the channel for exactly T_LBT and delivers T_LBT − T_res of data.
    """
    theta = policy.olaa_threshold
    takes = stats.p_tx * theta / policy.t_lbt
    data = policy.t_lbt - theta / 2.0
    return takes * data * lbt_rate / (stats.t_slot + takes * policy.t_lbt)
