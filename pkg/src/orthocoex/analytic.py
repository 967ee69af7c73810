"""Analytical models of the 802.11 DCF channel.

Two attempt-rate models are provided:

* the saturated homogeneous fixed point (one τ shared by n stations), solved
  by bisection on the conditional collision probability p;
* a renewal-reward model for heterogeneous rates and loads, solved by damped
  fixed-point iteration over the per-station τ_i.

Both accept ``exact_dcf``.  The functions default to ``exact_dcf=False``: the
classic infinite-retry chain in which every MAC slot advances every counter,
and a renewal model charging one arrival wait plus the backoff of every stage.
Scenarios default to ``exact_dcf=True`` (see ``Scenario.exact_dcf``), the
process executed by :mod:`orthocoex.sim.engine`:

* a frame is dropped after ``retry_limit`` collisions;
* backoff counters and arrival checks advance on idle slots only and stay
  frozen through busy slots;
* a station therefore lives on its own clock of idle slots and own exchanges,
  where the retry-limited chain gives its attempt rate τ_i.  The channel is a
  regenerative cycle started by each idle slot: every station attempts at the
  next boundary with probability h_i, after which only the stations that just
  transmitted may go again, with the probability g_i of redrawing a zero
  backoff.  Consecutive busy slots are rare under this rule, so P_idle is
  well above the classic (1 − τ)^n.

Usage:
    state = solve_saturated_attempt_rate(5, DcfParams())
    stats = slot_stats_homogeneous(state, PhyProfile(), StationProfile(), 5)
    wifi_throughput_saturated(stats, StationProfile())   # Mb/s
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError, SolverError
from .schema import DcfParams, PhyProfile, SlotStats, StationProfile, SteadyState

log = logging.getLogger(__name__)

HOMOGENEOUS_TOL = 1e-10
HETEROGENEOUS_TOL = 1e-9
MAX_ITERATIONS = 10_000
DAMPING = 0.5
CYCLE_TAIL_TOL = 1e-16


# ---------------------------------------------------------------------------
# Frame durations
# ---------------------------------------------------------------------------

def ack_duration(phy: PhyProfile) -> float:
    """T_ACK = T_PLCP + L_ACK / C_ctrl, in µs."""
    return phy.t_plcp + phy.l_ack / phy.c_ctrl


def payload_duration(phy: PhyProfile, station: StationProfile) -> float:
    """Air time of the aggregated data part of one burst."""
    per_packet = phy.l_del + phy.l_mac_oh + phy.l_pad
    return (station.f_agg * per_packet + station.payload_b) / station.data_rate_c


def tx_duration(phy: PhyProfile, station: StationProfile) -> float:
    """Full successful exchange: preamble, data, SIFS, ACK and DIFS, in µs."""
    return (
        phy.t_plcp
        + payload_duration(phy, station)
        + phy.sifs
        + ack_duration(phy)
        + phy.difs
    )


# ---------------------------------------------------------------------------
# Backoff bookkeeping
# ---------------------------------------------------------------------------

def stage_backoff_means(dcf: DcfParams) -> np.ndarray:
    """b_j = (2^min(j, m̄)·CW_min − 1)/2 for j = 0..M."""
    stages = np.minimum(np.arange(dcf.retry_limit + 1), dcf.max_backoff_stage)
    return (2.0**stages * dcf.cw_min - 1.0) / 2.0


def attempt_rate_given_p(p: float, dcf: DcfParams, exact_dcf: bool = False) -> float:
    """Saturated attempt rate τ as a function of the collision probability p.

    The infinite-retry chain is written as a finite power series so that the
    usual (1 − 2p) factors cancel and p = 1/2 is not a special point.
    """
    w = dcf.cw_min
    if exact_dcf:
        powers = p ** np.arange(dcf.retry_limit + 1)
        return float(powers.sum() / (powers @ (stage_backoff_means(dcf) + 1.0)))
    series = sum((2.0 * p) ** i for i in range(dcf.max_backoff_stage))
    return 2.0 / (1.0 + w + p * w * series)


def _collision_given_tau(tau: float, n: int) -> float:
    return 1.0 - (1.0 - tau) ** (n - 1)


# ---------------------------------------------------------------------------
# Frozen-counter chain (exact_dcf)
# ---------------------------------------------------------------------------

def own_clock_attempt_rate(p: float, station: StationProfile) -> float:
    """Attempts per own slot (idle slots plus the station's own exchanges).

    A frame is waiting right after an exchange with probability q, otherwise one
    arrival check runs per idle slot: the mean wait is 1/q − 1 idle slots.  For
    a saturated station this is ``attempt_rate_given_p(p, dcf, exact_dcf=True)``.
    """
    dcf = station.dcf
    powers = p ** np.arange(dcf.retry_limit + 1)
    wait = 1.0 / station.arrival_prob_q - 1.0
    return float(powers.sum() / (wait + powers @ (stage_backoff_means(dcf) + 1.0)))


def immediate_retry_probabilities(p: float, station: StationProfile) -> tuple[float, float]:
    """(g_s, g_c): probability of transmitting again in the very next slot.

    g_s follows a success (fresh frame, zero backoff at stage 0); g_c follows a
    collision, averaged over the stage the collision happened in.
    """
    dcf = station.dcf
    stages = np.minimum(np.arange(dcf.retry_limit + 1), dcf.max_backoff_stage)
    windows = 2.0**stages * dcf.cw_min
    fresh = station.arrival_prob_q / windows[0]
    # stage j moves to j + 1; a collision at the last stage drops the frame
    after = np.append(1.0 / windows[1:], fresh)
    powers = p ** np.arange(dcf.retry_limit + 1)
    return float(fresh), float(powers @ after / powers.sum())


@dataclass(frozen=True)
class _Cycle:
    """Expected slot counts from one idle slot to the next, that idle slot included."""

    success: np.ndarray
    collision: float
    collision_time: float
    attempts: np.ndarray
    collided: np.ndarray

    @property
    def length(self) -> float:
        return 1.0 + self.collision + float(self.success.sum())


def _frozen_cycle(
    tau: np.ndarray,
    p: np.ndarray,
    stations: Sequence[StationProfile],
    durations: np.ndarray | None = None,
) -> _Cycle:
    """Regenerative cycle of the channel under frozen counters.

    After the idle slot station i transmits with probability h_i.  While two or
    more stations keep colliding each one goes again with g_c,i, so membership
    of step t is Bernoulli(h_i·g_c,i^t).  A station left alone succeeds and
    then repeats with g_s,i.
    """
    retry = np.array([immediate_retry_probabilities(float(p_i), s)
                      for p_i, s in zip(p, stations)])
    g_s, g_c = retry[:, 0], retry[:, 1]
    if np.any(g_s >= 1.0):
        raise DomainError("a saturated station with CW_min = 1 never releases the channel")
    h = np.minimum(1.0, tau * (1.0 - (1.0 - p) * g_s - p * g_c) / (1.0 - tau))

    x = h
    alone = np.zeros_like(h)
    reached = np.zeros_like(h)
    collided = np.zeros_like(h)
    collision = collision_time = 0.0
    for _ in range(MAX_ITERATIONS):
        others_idle = 1.0 - _conditional_collisions(x)
        single = x * others_idle
        collision += max(0.0, 1.0 - float(np.prod(1.0 - x)) - float(single.sum()))
        if durations is not None:
            weights, ordered = _longest_collider_weights(x, durations)
            collision_time += float(weights @ ordered)
        alone += single
        reached += x
        collided += x * (1.0 - others_idle)
        if x.max() < CYCLE_TAIL_TOL:
            break
        x = x * g_c
    success = (1.0 - g_c) * alone / (1.0 - g_s)
    return _Cycle(
        success=success,
        collision=collision,
        collision_time=collision_time,
        attempts=reached - alone + success,
        collided=collided,
    )


def _frozen_collision_map(
    p: np.ndarray, stations: Sequence[StationProfile]
) -> tuple[np.ndarray, np.ndarray]:
    """One pass p → (τ(p), collisions per attempt)."""
    tau = np.array([own_clock_attempt_rate(float(p_i), s) for p_i, s in zip(p, stations)])
    cycle = _frozen_cycle(tau, p, stations)
    return tau, cycle.collided / cycle.attempts


def _frozen_slot_stats(
    state: SteadyState,
    stations: Sequence[StationProfile],
    phy: PhyProfile,
    t_coll_rule: Literal["expected", "max"],
) -> SlotStats:
    t_s = np.array([tx_duration(phy, s) for s in stations])
    cycle = _frozen_cycle(np.asarray(state.tau_per_station),
                          np.asarray(state.p_cond_per_station), stations, t_s)
    length = cycle.length
    p_idle = 1.0 / length
    p_succ = cycle.success / length
    p_coll = cycle.collision / length
    if t_coll_rule == "max" or cycle.collision <= 0.0:
        t_coll = float(t_s.max())
    else:
        t_coll = cycle.collision_time / cycle.collision
    return SlotStats(
        p_idle=p_idle,
        p_succ_total=float(p_succ.sum()),
        p_coll=p_coll,
        p_tx=1.0 - p_idle,
        p_succ_per_station=p_succ.tolist(),
        t_slot=p_idle * phy.slot_sigma + float(p_succ @ t_s) + p_coll * t_coll,
        t_succ_per_station=t_s.tolist(),
        t_coll=t_coll,
    )


# ---------------------------------------------------------------------------
# Homogeneous saturated model
# ---------------------------------------------------------------------------

def solve_saturated_attempt_rate(
    n: int, dcf: DcfParams, *, exact_dcf: bool = False
) -> SteadyState:
    """Solve τ^(n), p^(n) for n identical saturated stations.

    Bisection runs on the scalar residual p ↦ C(τ(p)) − p, positive at p = 0
    and negative as p → 1.  C is 1 − (1 − τ)^(n−1) for the classic chain and
    the collisions per attempt of the frozen-counter cycle with ``exact_dcf``.

    Raises:
        DomainError: if n < 1.
        SolverError: if the returned pair misses the tolerance.
    """
    if n < 1:
        raise DomainError(f"need at least one station, got n={n}")
    if n == 1:
        tau = attempt_rate_given_p(0.0, dcf, exact_dcf)
        return SteadyState(tau_per_station=[tau], p_cond_per_station=[0.0], residual=0.0,
                           exact_dcf=exact_dcf)

    population = [StationProfile(dcf=dcf)] * n

    def residual(p: float) -> float:
        if exact_dcf:
            return float(_frozen_collision_map(np.full(n, p), population)[1][0]) - p
        return _collision_given_tau(attempt_rate_given_p(p, dcf), n) - p

    try:
        p, info = bisect(residual, 0.0, 1.0 - 1e-12, xtol=1e-15, maxiter=500,
                         full_output=True, disp=False)
    except (RuntimeError, ValueError) as exc:
        raise SolverError(f"bisection failed for n={n}: {exc}", math.inf, 0) from exc
    tau = attempt_rate_given_p(p, dcf, exact_dcf)
    res = abs(residual(p))
    log.debug("saturated n=%d: tau=%.9f p=%.9f residual=%.2e (%d it)",
              n, tau, p, res, info.iterations)
    if not info.converged or res > HOMOGENEOUS_TOL:
        raise SolverError(f"saturated fixed point for n={n}", res, info.iterations)
    return SteadyState(
        tau_per_station=[tau] * n,
        p_cond_per_station=[p] * n,
        residual=res,
        iterations=info.iterations,
        exact_dcf=exact_dcf,
    )


def slot_stats_homogeneous(
    state: SteadyState, phy: PhyProfile, station: StationProfile, n: int
) -> SlotStats:
    """Slot probabilities for n identical stations; collisions last T_s."""
    if state.n != n:
        raise DomainError(f"steady state solved for {state.n} stations, not {n}")
    if state.exact_dcf:
        return _frozen_slot_stats(state, [station] * n, phy, "max")
    tau = state.tau_per_station[0]
    p_idle = (1.0 - tau) ** n
    p_succ = tau * (1.0 - tau) ** (n - 1)
    p_succ_total = n * p_succ
    p_coll = max(0.0, 1.0 - p_idle - p_succ_total)
    t_s = tx_duration(phy, station)
    return SlotStats(
        p_idle=p_idle,
        p_succ_total=p_succ_total,
        p_coll=p_coll,
        p_tx=p_coll + p_succ_total,
        p_succ_per_station=[p_succ] * n,
        t_slot=p_idle * phy.slot_sigma + (p_succ_total + p_coll) * t_s,
        t_succ_per_station=[t_s] * n,
        t_coll=t_s,
    )


def wifi_throughput_saturated(stats: SlotStats, station: StationProfile) -> float:
    """s^(n) = p_succ·B / (P_idle·σ + (1 − P_idle)·T), in Mb/s."""
    if not stats.p_succ_per_station:
        return 0.0
    return stats.p_succ_per_station[0] * station.payload_b / stats.t_slot


def lbt_airtime(rho: float, stats: SlotStats, t_lbt: float) -> float:
    """Time the LBT node adds per average MAC slot: ρ·P_idle·T_LBT."""
    if rho < 0 or t_lbt <= 0:
        raise DomainError(f"need rho >= 0 and t_lbt > 0 (got {rho}, {t_lbt})")
    return rho * stats.p_idle * t_lbt


def throughput_with_lbt(
    rho: float, stats: SlotStats, station: StationProfile, t_lbt: float
) -> float:
    """Per-station WiFi throughput when an LBT node claims ρ of the idle slots."""
    p_succ = stats.p_succ_per_station[0]
    return p_succ * station.payload_b / (stats.t_slot + lbt_airtime(rho, stats, t_lbt))


def relative_load_to_q(
    load: float, n: int, dcf: DcfParams, *, exact_dcf: bool = False
) -> float:
    """Convert an offered load relative to saturation into the arrival probability q.

    With Poisson arrivals over one check interval, q = 1 − exp(−λ·interval).
    The saturating rate of one of n stations is p_succ^(n) successes per MAC
    slot.  Classic checks run once per MAC slot, hence q = 1 − exp(−load·p_succ);
    with ``exact_dcf`` they run once per idle slot, hence
    q = 1 − exp(−load·p_succ/P_idle).
    """
    if load <= 0:
        raise DomainError(f"relative load must be positive, got {load}")
    state = solve_saturated_attempt_rate(n, dcf, exact_dcf=exact_dcf)
    if exact_dcf:
        stats = slot_stats_homogeneous(state, PhyProfile(), StationProfile(dcf=dcf), n)
        per_check = stats.p_succ_per_station[0] / stats.p_idle
    else:
        tau = state.tau_per_station[0]
        per_check = tau * (1.0 - tau) ** (n - 1)
    return min(1.0, -math.expm1(-load * per_check))


# ---------------------------------------------------------------------------
# Heterogeneous renewal-reward model
# ---------------------------------------------------------------------------

def _renewal_attempt_rate(p: float, station: StationProfile) -> float:
    dcf = station.dcf
    powers = p ** np.arange(dcf.retry_limit + 1)
    expected_attempts = powers.sum()
    expected_slots = 1.0 / station.arrival_prob_q + powers @ stage_backoff_means(dcf)
    return float(expected_attempts / expected_slots)


def _conditional_collisions(tau: np.ndarray) -> np.ndarray:
    idle = 1.0 - tau
    # product over k != i without dividing by (1 - tau_i)
    prefix = np.concatenate(([1.0], np.cumprod(idle)[:-1]))
    suffix = np.concatenate((np.cumprod(idle[::-1])[:-1][::-1], [1.0]))
    return 1.0 - prefix * suffix


def _damped_fixed_point(
    start: np.ndarray, step_map: Callable[[np.ndarray], np.ndarray], label: str
) -> tuple[np.ndarray, float, int]:
    value = start
    iteration = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        target = step_map(value)
        step = np.max(np.abs(target - value))
        value = DAMPING * value + (1.0 - DAMPING) * target
        if step < 0.1 * HETEROGENEOUS_TOL:
            break
    residual = float(np.max(np.abs(step_map(value) - value)))
    log.debug("%s: %d iterations, residual=%.2e", label, iteration, residual)
    if residual > HETEROGENEOUS_TOL:
        raise SolverError(label, residual, iteration)
    return value, residual, iteration


def solve_heterogeneous_attempt_rates(
    stations: Sequence[StationProfile],
    phy: PhyProfile,
    *,
    exact_dcf: bool = False,
) -> SteadyState:
    """Per-station attempt rates by damped fixed-point iteration.

    The classic model iterates τ_i = E[A]/E[S] with p_i = 1 − Π_{k≠i}(1 − τ_k).
    With ``exact_dcf`` the iteration runs on the p_i of the frozen-counter
    cycle and the τ_i are own-clock rates.

    ``phy`` is accepted for symmetry with the slot-statistics helpers; attempt
    rates depend on contention and load only.
    """
    del phy
    if not stations:
        raise DomainError("need at least one station")
    label = f"heterogeneous fixed point for n={len(stations)}"
    if exact_dcf:
        p, residual, iterations = _damped_fixed_point(
            np.zeros(len(stations)),
            lambda current: _frozen_collision_map(current, stations)[1],
            label,
        )
        tau, _ = _frozen_collision_map(p, stations)
    else:
        def update(current: np.ndarray) -> np.ndarray:
            p = _conditional_collisions(current)
            return np.array([_renewal_attempt_rate(float(p_i), s)
                             for p_i, s in zip(p, stations)])

        tau, residual, iterations = _damped_fixed_point(
            np.array([2.0 / (s.dcf.cw_min + 1.0) for s in stations]), update, label
        )
        p = _conditional_collisions(tau)
    return SteadyState(
        tau_per_station=tau.tolist(),
        p_cond_per_station=p.tolist(),
        residual=residual,
        iterations=iterations,
        exact_dcf=exact_dcf,
    )


def _longest_collider_weights(
    taus: Sequence[float], durations: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """P(station j is the longest of two or more colliders), with durations sorted."""
    tau = np.asarray(taus, dtype=float)
    dur = np.asarray(durations, dtype=float)
    order = np.argsort(dur, kind="stable")
    tau, dur = tau[order], dur[order]
    idle = 1.0 - tau
    shorter_idle = np.concatenate(([1.0], np.cumprod(idle)[:-1]))
    longer_idle = np.concatenate((np.cumprod(idle[::-1])[:-1][::-1], [1.0]))
    return tau * longer_idle * (1.0 - shorter_idle), dur


def expected_collision_duration(taus: Sequence[float], durations: Sequence[float]) -> float:
    """Mean length of a collision slot, set by its longest involved frame.

    Stations are ranked by frame length; station j is the longest collider
    when it transmits, nobody longer does, and somebody shorter does.
    """
    weights, dur = _longest_collider_weights(taus, durations)
    total = weights.sum()
    if total <= 0.0:
        return float(dur.max())
    return float(weights @ dur / total)


def slot_stats_heterogeneous(
    state: SteadyState,
    stations: Sequence[StationProfile],
    phy: PhyProfile,
    *,
    t_coll_rule: Literal["expected", "max"] = "expected",
) -> SlotStats:
    """Slot probabilities and T_slot for per-station τ_i.

    A collision lasts as long as its longest frame.  The default
    ``t_coll_rule="expected"`` weights each station's frame by the chance that
    it is the longest of the colliders; with mixed rates such as
    {156, 130, 78, 39, 13} Mb/s this keeps T_slot within 1 % of the simulated
    channel, where charging every collision with the slowest frame of the
    population (``t_coll_rule="max"``) overstates it.
    """
    if state.n != len(stations):
        raise DomainError(f"steady state solved for {state.n} stations, not {len(stations)}")
    if state.exact_dcf:
        return _frozen_slot_stats(state, stations, phy, t_coll_rule)
    tau = np.asarray(state.tau_per_station)
    idle = 1.0 - tau
    p_idle = float(np.prod(idle))
    p_succ = tau * (1.0 - _conditional_collisions(tau))
    p_succ_total = float(p_succ.sum())
    p_coll = max(0.0, 1.0 - p_idle - p_succ_total)
    t_s = np.array([tx_duration(phy, s) for s in stations])
    if t_coll_rule == "max":
        t_coll = float(t_s.max())
    else:
        t_coll = expected_collision_duration(tau, t_s)
    return SlotStats(
        p_idle=p_idle,
        p_succ_total=p_succ_total,
        p_coll=p_coll,
        p_tx=p_coll + p_succ_total,
        p_succ_per_station=p_succ.tolist(),
        t_slot=p_idle * phy.slot_sigma + float(p_succ @ t_s) + p_coll * t_coll,
        t_succ_per_station=t_s.tolist(),
        t_coll=t_coll,
    )


def aggregate_wifi_airtime(
    stats: SlotStats, member_indices: Sequence[int], extra_time: float = 0.0
) -> float:
    """A = Σ_{i ∈ members} p_succ,i·T_s,i / (T_slot + extra_time)."""
    if not member_indices:
        return 0.0
    busy = sum(stats.p_succ_per_station[i] * stats.t_succ_per_station[i]
               for i in member_indices)
    return busy / (stats.t_slot + extra_time)


def wifi_throughput_heterogeneous(
    stats: SlotStats, index: int, station: StationProfile, extra_time: float = 0.0
) -> float:
    """Mb/s delivered by station ``index``."""
    return stats.p_succ_per_station[index] * station.payload_b / (stats.t_slot + extra_time)


def solve_population(
    stations: Sequence[StationProfile], phy: PhyProfile, *, exact_dcf: bool = False
) -> tuple[SteadyState, SlotStats]:
    """Pick the homogeneous solver when possible, the renewal model otherwise."""
    first = stations[0]
    if all(s == first for s in stations) and first.saturated:
        state = solve_saturated_attempt_rate(len(stations), first.dcf, exact_dcf=exact_dcf)
        return state, slot_stats_homogeneous(state, phy, first, len(stations))
    state = solve_heterogeneous_attempt_rates(stations, phy, exact_dcf=exact_dcf)
    return state, slot_stats_heterogeneous(state, stations, phy)
