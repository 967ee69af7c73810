"""Tests for orthocoex.analytic: DCF attempt rates and slot statistics."""

import math

import pytest

from orthocoex.analytic import (
    aggregate_wifi_airtime,
    attempt_rate_given_p,
    expected_collision_duration,
    immediate_retry_probabilities,
    lbt_airtime,
    own_clock_attempt_rate,
    relative_load_to_q,
    slot_stats_heterogeneous,
    slot_stats_homogeneous,
    solve_heterogeneous_attempt_rates,
    solve_population,
    solve_saturated_attempt_rate,
    stage_backoff_means,
    throughput_with_lbt,
    tx_duration,
    wifi_throughput_heterogeneous,
    wifi_throughput_saturated,
)
from orthocoex.errors import DomainError
from orthocoex.schema import DcfParams, PhyProfile, StationProfile

PHY = PhyProfile()
DCF = DcfParams()
STA = StationProfile()


def _homogeneous(n, station=STA, exact_dcf=False):
    state = solve_saturated_attempt_rate(n, station.dcf, exact_dcf=exact_dcf)
    return state, slot_stats_homogeneous(state, PHY, station, n)


# ---------------------------------------------------------------------------
# Frame durations
# ---------------------------------------------------------------------------

def test_tx_duration_default():
    # 40 + 12320/130 + 16 + (40 + 256/24) + 34
    assert tx_duration(PHY, STA) == pytest.approx(235.4359, abs=1e-4)


def test_tx_duration_aggregated():
    station = StationProfile(f_agg=10, payload_b=120_000)
    # 40 + (10*320 + 120000)/130 + 16 + 50.667 + 34
    assert tx_duration(PHY, station) == pytest.approx(1088.359, abs=1e-3)


def test_stage_backoff_means():
    assert stage_backoff_means(DCF).tolist() == [7.5, 15.5, 31.5, 63.5, 127.5]


# ---------------------------------------------------------------------------
# Homogeneous model
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("exact_dcf", [False, True])
def test_single_station_closed_form(exact_dcf):
    state = solve_saturated_attempt_rate(1, DCF, exact_dcf=exact_dcf)
    assert state.tau_per_station[0] == pytest.approx(2 / 17, abs=1e-12)
    assert state.p_cond_per_station == [0.0]
    assert state.residual <= 1e-10


def test_single_station_throughput():
    _, stats = _homogeneous(1)
    assert stats.p_idle == pytest.approx(15 / 17)
    # (2/17)*12000 / (15/17*9 + 2/17*235.436)
    assert wifi_throughput_saturated(stats, STA) == pytest.approx(39.61, abs=0.01)


def test_series_form_matches_closed_form():
    p, w, m = 0.2, DCF.cw_min, DCF.max_backoff_stage
    closed = 2 * (1 - 2 * p) / ((1 - 2 * p) * (w + 1) + p * w * (1 - (2 * p) ** m))
    assert attempt_rate_given_p(p, DCF) == pytest.approx(closed, rel=1e-12)


def test_series_form_defined_at_half():
    # Σ_{i<4} 1 = 4, so τ = 2/(17 + 0.5*16*4)
    assert attempt_rate_given_p(0.5, DCF) == pytest.approx(2 / 49)


@pytest.mark.parametrize("n, tau, p_idle", [
    (5, 0.077263, 0.668944),
    (10, 0.055459, 0.565205),
])
def test_saturated_fixed_point(n, tau, p_idle):
    state, stats = _homogeneous(n)
    assert state.tau_per_station[0] == pytest.approx(tau, abs=1e-5)
    assert stats.p_idle == pytest.approx(p_idle, abs=1e-5)
    p = state.p_cond_per_station[0]
    assert p == pytest.approx(1 - (1 - state.tau_per_station[0]) ** (n - 1), abs=1e-10)


def test_frozen_counters_single_station():
    state, stats = _homogeneous(1, exact_dcf=True)
    assert state.exact_dcf
    assert stats.p_idle == pytest.approx(15 / 17)
    assert stats.p_coll == pytest.approx(0.0, abs=1e-12)
    assert wifi_throughput_saturated(stats, STA) == pytest.approx(39.61, abs=0.01)


@pytest.mark.parametrize("n", [2, 5, 10, 20])
def test_frozen_counters_leave_more_idle_slots(n):
    _, classic = _homogeneous(n)
    state, frozen = _homogeneous(n, exact_dcf=True)
    assert frozen.p_idle > classic.p_idle
    assert 0 < state.p_cond_per_station[0] < 1
    assert frozen.t_coll == frozen.t_succ_per_station[0]


def test_frozen_retry_probabilities():
    g_s, g_c = immediate_retry_probabilities(0.0, STA)
    assert g_s == pytest.approx(1 / 16)
    assert g_c == pytest.approx(1 / 32)
    # a collision at the last stage drops the frame: next try from stage 0
    last_only = DcfParams(cw_min=16, max_backoff_stage=0)
    _, g_c = immediate_retry_probabilities(0.3, StationProfile(dcf=last_only))
    assert g_c == pytest.approx(1 / 16)
    light = STA.model_copy(update={"arrival_prob_q": 0.25})
    assert immediate_retry_probabilities(0.0, light)[0] == pytest.approx(0.25 / 16)


def test_own_clock_rate_counts_arrival_wait():
    assert own_clock_attempt_rate(0.2, STA) == pytest.approx(
        attempt_rate_given_p(0.2, DCF, exact_dcf=True))
    light = STA.model_copy(update={"arrival_prob_q": 0.1})
    # 9 idle slots of arrival wait plus 8.5 own slots of backoff and exchange
    assert own_clock_attempt_rate(0.0, light) == pytest.approx(1 / 17.5)


@pytest.mark.parametrize("exact_dcf", [False, True])
def test_throughput_decreases_with_population(exact_dcf):
    goodput = []
    for n in range(1, 31):
        _, stats = _homogeneous(n, exact_dcf=exact_dcf)
        goodput.append(wifi_throughput_saturated(stats, STA))
    assert all(later < earlier for earlier, later in zip(goodput, goodput[1:]))


@pytest.mark.parametrize("exact_dcf", [False, True])
@pytest.mark.parametrize("max_stage", range(7))
@pytest.mark.parametrize("cw_min", [8, 16, 32])
def test_slot_probabilities_partition(cw_min, max_stage, exact_dcf):
    station = StationProfile(dcf=DcfParams(cw_min=cw_min, max_backoff_stage=max_stage))
    for n in range(1, 51):
        _, stats = _homogeneous(n, station, exact_dcf=exact_dcf)
        total = stats.p_idle + stats.p_succ_total + stats.p_coll
        assert total == pytest.approx(1.0, abs=1e-9)
        assert min(stats.p_idle, stats.p_coll, *stats.p_succ_per_station) >= 0.0


def test_attempt_rate_decreases_with_population():
    taus = [solve_saturated_attempt_rate(n, DCF).tau_per_station[0] for n in (2, 5, 10, 20)]
    assert taus == sorted(taus, reverse=True)


def test_slot_probabilities_sum_to_one():
    _, stats = _homogeneous(7)
    assert stats.p_idle + stats.p_succ_total + stats.p_coll == pytest.approx(1.0)
    assert stats.t_coll == stats.t_succ_per_station[0]


def test_solver_rejects_empty_population():
    with pytest.raises(DomainError):
        solve_saturated_attempt_rate(0, DCF)


def test_homogeneous_stats_check_size():
    state = solve_saturated_attempt_rate(3, DCF)
    with pytest.raises(DomainError):
        slot_stats_homogeneous(state, PHY, STA, 4)


# ---------------------------------------------------------------------------
# LBT airtime
# ---------------------------------------------------------------------------

def test_throughput_without_lbt_claim():
    _, stats = _homogeneous(5)
    assert throughput_with_lbt(0.0, stats, STA, 1000.0) == pytest.approx(
        wifi_throughput_saturated(stats, STA))


def test_throughput_drops_with_claim():
    _, stats = _homogeneous(5)
    low = throughput_with_lbt(0.05, stats, STA, 1000.0)
    high = throughput_with_lbt(0.2, stats, STA, 1000.0)
    assert high < low < wifi_throughput_saturated(stats, STA)


def test_lbt_airtime_domain():
    _, stats = _homogeneous(2)
    assert lbt_airtime(0.5, stats, 1000.0) == pytest.approx(0.5 * stats.p_idle * 1000.0)
    with pytest.raises(DomainError):
        lbt_airtime(-0.1, stats, 1000.0)


# ---------------------------------------------------------------------------
# Offered load
# ---------------------------------------------------------------------------

def test_relative_load_to_q():
    state = solve_saturated_attempt_rate(5, DCF)
    tau = state.tau_per_station[0]
    p_succ = tau * (1 - tau) ** 4
    q = relative_load_to_q(0.5, 5, DCF)
    assert q == pytest.approx(1 - math.exp(-0.5 * p_succ))
    assert 0 < q < relative_load_to_q(1.0, 5, DCF) < 1


def test_relative_load_to_q_counts_idle_slots():
    _, stats = _homogeneous(5, exact_dcf=True)
    per_check = stats.p_succ_per_station[0] / stats.p_idle
    q = relative_load_to_q(0.5, 5, DCF, exact_dcf=True)
    assert q == pytest.approx(1 - math.exp(-0.5 * per_check))
    assert q > relative_load_to_q(0.5, 5, DCF)


def test_relative_load_rejects_zero():
    with pytest.raises(DomainError):
        relative_load_to_q(0.0, 5, DCF)


# ---------------------------------------------------------------------------
# Heterogeneous model
# ---------------------------------------------------------------------------

def test_renewal_model_matches_homogeneous_exact():
    """Identical saturated stations: both frozen-counter solvers agree."""
    state = solve_heterogeneous_attempt_rates([STA] * 5, PHY, exact_dcf=True)
    reference = solve_saturated_attempt_rate(5, DCF, exact_dcf=True)
    for tau in state.tau_per_station:
        assert tau == pytest.approx(reference.tau_per_station[0], rel=1e-6)
    assert state.residual <= 1e-9


def test_frozen_heterogeneous_stats_match_homogeneous():
    state = solve_heterogeneous_attempt_rates([STA] * 4, PHY, exact_dcf=True)
    assert state.exact_dcf
    heterogeneous = slot_stats_heterogeneous(state, [STA] * 4, PHY)
    _, homogeneous = _homogeneous(4, exact_dcf=True)
    assert heterogeneous.p_idle == pytest.approx(homogeneous.p_idle, rel=1e-6)
    assert heterogeneous.t_slot == pytest.approx(homogeneous.t_slot, rel=1e-6)
    assert heterogeneous.t_coll == pytest.approx(homogeneous.t_coll)


def test_frozen_light_station_attempts_less():
    light = STA.model_copy(update={"arrival_prob_q": 0.05})
    stations = [STA, STA, light]
    state = solve_heterogeneous_attempt_rates(stations, PHY, exact_dcf=True)
    stats = slot_stats_heterogeneous(state, stations, PHY)
    assert stats.p_succ_per_station[2] < stats.p_succ_per_station[0]
    assert stats.p_succ_per_station[0] == pytest.approx(stats.p_succ_per_station[1])


def test_unsaturated_station_attempts_less():
    light = STA.model_copy(update={"arrival_prob_q": 0.01})
    state = solve_heterogeneous_attempt_rates([STA, STA, light], PHY)
    assert state.tau_per_station[2] < state.tau_per_station[0]
    assert state.tau_per_station[0] == pytest.approx(state.tau_per_station[1])


def test_slower_station_occupies_longer_slots():
    slow = STA.model_copy(update={"data_rate_c": 13.0})
    stations = [STA, slow]
    state = solve_heterogeneous_attempt_rates(stations, PHY)
    stats = slot_stats_heterogeneous(state, stations, PHY)
    assert stats.t_succ_per_station[1] > stats.t_succ_per_station[0]
    # same contention parameters, same success probability
    assert stats.p_succ_per_station[0] == pytest.approx(stats.p_succ_per_station[1])
    assert wifi_throughput_heterogeneous(stats, 0, STA) == pytest.approx(
        wifi_throughput_heterogeneous(stats, 1, slow))


def test_expected_collision_duration_weights():
    # weights: 0, 0.1*0.9*0.1 = 0.009, 0.1*(1 - 0.81) = 0.019; P_coll = 0.028
    taus, durations = [0.1, 0.1, 0.1], [100.0, 200.0, 300.0]
    expected = (0.009 * 200 + 0.019 * 300) / 0.028
    assert expected_collision_duration(taus, durations) == pytest.approx(expected)


def test_expected_collision_duration_equal_frames():
    assert expected_collision_duration([0.2, 0.05], [500.0, 500.0]) == pytest.approx(500.0)


def test_max_collision_rule():
    slow = STA.model_copy(update={"data_rate_c": 39.0})
    stations = [STA, STA, slow]
    state = solve_heterogeneous_attempt_rates(stations, PHY)
    expected = slot_stats_heterogeneous(state, stations, PHY)
    worst = slot_stats_heterogeneous(state, stations, PHY, t_coll_rule="max")
    assert worst.t_coll == pytest.approx(tx_duration(PHY, slow))
    assert expected.t_coll < worst.t_coll
    assert expected.t_slot < worst.t_slot


def test_heterogeneous_reduces_to_homogeneous_stats():
    state = solve_saturated_attempt_rate(4, DCF)
    homogeneous = slot_stats_homogeneous(state, PHY, STA, 4)
    heterogeneous = slot_stats_heterogeneous(state, [STA] * 4, PHY)
    assert heterogeneous.t_slot == pytest.approx(homogeneous.t_slot)
    assert heterogeneous.t_coll == pytest.approx(homogeneous.t_coll)


def test_aggregate_airtime():
    _, stats = _homogeneous(3)
    share = stats.p_succ_per_station[0] * stats.t_succ_per_station[0] / stats.t_slot
    assert aggregate_wifi_airtime(stats, [0, 1]) == pytest.approx(2 * share)
    assert aggregate_wifi_airtime(stats, []) == 0.0


def test_solve_population_picks_model():
    state, _ = solve_population([STA] * 3, PHY)
    assert state.residual <= 1e-10
    mixed, _ = solve_population([STA, STA.model_copy(update={"data_rate_c": 78.0})], PHY)
    assert mixed.n == 2


def test_heterogeneous_rejects_empty():
    with pytest.raises(DomainError):
        solve_heterogeneous_attempt_rates([], PHY)
