"""Tests for orthocoex.sim.engine: the event simulator.

Agreement and fairness checks simulate tens of seconds of channel time and are
marked slow; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest

from orthocoex.analytic import (
    slot_stats_heterogeneous,
    slot_stats_homogeneous,
    solve_heterogeneous_attempt_rates,
    solve_saturated_attempt_rate,
    tx_duration,
    wifi_throughput_saturated,
)
from orthocoex.errors import ConfigError, SimulationInvariantError
from orthocoex.harness import run_paired, simulate
from orthocoex.metrics import RunMetrics, fairness_verdict, relative_gain
from orthocoex.scenario import build_scenario, legacy_twin, wifi_only
from orthocoex.schema import DcfParams, LbtMode, Scenario, StationProfile
from orthocoex.sim import engine
from orthocoex.sim.engine import (
    ChannelSimulation,
    DcfContender,
    check_invariants,
    run_scenario,
    station_rng,
)


def _scenario(duration=1.0, **keys):
    base = {"scenario.sim_duration": duration, "scenario.warmup": 0.1,
            "wifi.mpdu_bytes": 1500, "wifi.n": 5}
    return build_scenario({**base, **keys})


# ---------------------------------------------------------------------------
# Contender state machine
# ---------------------------------------------------------------------------

def test_saturated_backoff_window():
    c = DcfContender(DcfParams(), 1.0, 235.0, station_rng(1, 0))
    for _ in range(100):
        c.succeeded()
        assert 0 <= c.remaining <= 15
        assert c.stage == 0
    assert c.successes == 100


def test_collisions_double_window_then_drop():
    c = DcfContender(DcfParams(), 1.0, 235.0, station_rng(2, 0))
    for stage in range(1, 5):
        c.collided()
        assert c.stage == stage
        assert 0 <= c.remaining <= 2**stage * 16 - 1
    c.collided()
    assert c.drops == 1
    assert c.stage == 0


def test_unsaturated_contender_waits_for_arrivals():
    c = DcfContender(DcfParams(), 0.01, 235.0, station_rng(3, 0))
    waits = []
    for _ in range(500):
        c.succeeded()
        waits.append(c.remaining)
    # mean = 1/q - 1 + 7.5 idle slots
    assert 60 < np.mean(waits) < 160


def test_station_streams_are_independent():
    a = station_rng(7, 0).integers(0, 2**32, 5)
    b = station_rng(7, 1).integers(0, 2**32, 5)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, station_rng(7, 0).integers(0, 2**32, 5))


class _ScriptedRng:
    """Backoff draws taken from a list, then a constant."""

    def __init__(self, backoffs, then=15):
        self.backoffs = list(backoffs)
        self.then = then

    def integers(self, low, high):
        value = self.backoffs.pop(0) if self.backoffs else self.then
        assert low <= value < high
        return value

    def geometric(self, q):
        return 1

    def random(self):
        return 0.0


def test_counters_freeze_during_busy_slots(monkeypatch):
    scripts = {0: [0], 1: [1]}
    monkeypatch.setattr(engine, "station_rng",
                        lambda seed, index: _ScriptedRng(scripts[index]))
    scenario = build_scenario({"wifi.n": 2, "wifi.mpdu_bytes": 1500,
                               "scenario.sim_duration": 0.002, "scenario.warmup": 0.0})
    sim = ChannelSimulation(scenario)
    sim.trace = []
    sim.run()
    t_s = tx_duration(scenario.phy, scenario.stations[0])
    assert t_s == pytest.approx(235.4359, abs=1e-4)
    assert sim.trace[0] == (0.0, "success", (0,))
    # station 1 saw no idle slot during station 0's exchange: one σ left
    start, kind, senders = sim.trace[1]
    assert start == pytest.approx(t_s + 9.0)
    assert (kind, senders) == ("success", (1,))
    # station 0 has 14 idle slots left when station 1 redraws 15
    assert sim.trace[2][2] == (0,)
    assert sim.trace[2][0] == pytest.approx(2 * t_s + 9.0 + 14 * 9.0)


def test_simultaneous_zero_counters_collide(monkeypatch):
    monkeypatch.setattr(engine, "station_rng", lambda seed, index: _ScriptedRng([3]))
    scenario = build_scenario({"wifi.n": 2, "wifi.mpdu_bytes": 1500,
                               "scenario.sim_duration": 0.001, "scenario.warmup": 0.0})
    sim = ChannelSimulation(scenario)
    sim.trace = []
    sim.run()
    start, kind, senders = sim.trace[0]
    assert start == pytest.approx(3 * 9.0)
    assert (kind, senders) == ("collision", (0, 1))


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def test_same_seed_same_metrics():
    scenario = _scenario(0.5, **{"lbt.mode": "orla"})
    assert run_scenario(scenario) == run_scenario(scenario)


def test_different_seed_different_metrics():
    a = run_scenario(_scenario(0.5, **{"scenario.seed": 1}))
    b = run_scenario(_scenario(0.5, **{"scenario.seed": 2}))
    assert a.per_station_goodput != b.per_station_goodput


@pytest.mark.parametrize("mode", [m.value for m in LbtMode])
def test_conservation_in_every_mode(mode):
    metrics = simulate(_scenario(0.5, **{"lbt.mode": mode}))
    assert metrics.airtime_total == pytest.approx(1.0, abs=1e-9)
    assert metrics.window > 0.3e6
    assert metrics.has_lbt is (mode != "none")


@pytest.mark.parametrize("mode", ["orla", "olaa"])
def test_orthogonal_node_never_collides(mode):
    metrics = simulate(_scenario(1.0, **{"lbt.mode": mode}))
    assert metrics.lbt_collisions == 0
    assert 0 < metrics.lbt_takes <= metrics.lbt_opportunities
    assert metrics.lbt_goodput > 0


def test_olaa_take_holds_one_frame():
    scenario = build_scenario({"wifi.n": 2, "wifi.mpdu_bytes": 1500,
                               "wifi.relative_load": 0.1, "lbt.mode": "olaa",
                               "scenario.sim_duration": 1.0, "scenario.warmup": 0.1})
    sim = ChannelSimulation(scenario)
    assert sim.hold <= 1000.0
    metrics = sim.run()
    assert metrics.lbt_takes > 0
    assert metrics.lbt_time == pytest.approx(metrics.lbt_takes * scenario.lbt_t_lbt)
    # data excludes the reservation up to the frame boundary
    assert metrics.lbt_goodput * metrics.window < (
        metrics.lbt_takes * scenario.lbt_t_lbt * scenario.lbt_rate)


def test_olaa_hold_ignores_burst_count():
    policy = {"policy.rho_bar": "1.0", "policy.take_prob_pi": "1.0",
              "policy.bursts_per_take_nu": "2.5", "policy.lambda_opt": "0.3",
              "policy.olaa_threshold": "700"}
    olaa = build_scenario({"wifi.n": 2, "lbt.mode": "olaa", **policy})
    orla = build_scenario({"wifi.n": 2, "lbt.mode": "orla", **policy})
    assert ChannelSimulation(olaa).hold == 1000.0
    # 2.5 bursts: 1000 + 1000 + 500 with two LIFS gaps
    assert ChannelSimulation(orla).hold == pytest.approx(2540.0)


def test_contending_node_collides():
    metrics = simulate(_scenario(1.0, **{"lbt.mode": "laa"}))
    assert metrics.lbt_collisions > 0
    assert metrics.lbt_opportunities == 0


def test_no_lbt_node():
    metrics = simulate(_scenario(0.5))
    assert metrics.lbt_airtime == 0.0
    assert metrics.lbt_goodput == 0.0
    assert metrics.n_wifi == 5


def test_orthogonal_node_alone_takes_everything():
    scenario = build_scenario({"scenario.sim_duration": 0.2, "scenario.warmup": 0.01,
                               "lbt.mode": "orla", "lbt.t_lbt": 1000})
    metrics = simulate(scenario)
    assert metrics.n_wifi == 0
    assert metrics.lbt_takes == metrics.lbt_opportunities > 0
    # 1000 µs of data per 1020 µs hold
    assert metrics.lbt_goodput == pytest.approx(130.0 * 1000 / 1020, rel=1e-6)


def test_empty_channel_without_lbt():
    scenario = Scenario(sim_duration=0.1, warmup=0.0)
    metrics = simulate(scenario)
    assert metrics.idle_fraction == pytest.approx(1.0)


def test_nonsaturated_stations_leave_idle_time():
    saturated = simulate(_scenario(0.5))
    light = simulate(_scenario(0.5, **{"wifi.relative_load": 0.2}))
    assert light.p_idle > saturated.p_idle
    assert sum(light.per_station_goodput) < sum(saturated.per_station_goodput)


def test_laa_sync_goodput_below_frame_rate():
    metrics = simulate(_scenario(1.0, **{"lbt.mode": "laa_sync"}))
    laa = simulate(_scenario(1.0, **{"lbt.mode": "laa"}))
    # each reservation wastes T_res of the 1 ms hold
    assert metrics.lbt_goodput < laa.lbt_goodput


def test_run_rejects_missing_policy():
    scenario = Scenario(stations=[StationProfile()], lbt_mode=LbtMode.NONE)
    broken = scenario.model_copy(update={"lbt_mode": LbtMode.ORLA})
    with pytest.raises(ConfigError):
        run_scenario(broken)


def test_check_invariants_flags_broken_conservation():
    bad = RunMetrics(scenario_id="x", seed=1, lbt_mode="none", has_lbt=False, t_lbt=1000.0,
                     window=100.0, idle_time=50.0)
    with pytest.raises(SimulationInvariantError, match="conserved"):
        check_invariants(bad)


def test_check_invariants_flags_orthogonal_collisions():
    bad = RunMetrics(scenario_id="x", seed=1, lbt_mode="orla", has_lbt=True, t_lbt=1000.0,
                     window=100.0, idle_time=100.0, lbt_collisions=1)
    with pytest.raises(SimulationInvariantError, match="orthogonal"):
        check_invariants(bad)


def test_check_invariants_flags_excess_takes():
    bad = RunMetrics(scenario_id="x", seed=1, lbt_mode="orla", has_lbt=True, t_lbt=1000.0,
                     window=100.0, idle_time=100.0, lbt_takes=3, lbt_opportunities=2)
    with pytest.raises(SimulationInvariantError, match="takes"):
        check_invariants(bad)


# ---------------------------------------------------------------------------
# Agreement with the analytic model
# ---------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 5, 10])
def test_simulation_matches_analysis(n):
    scenario = build_scenario({"wifi.n": n, "scenario.sim_duration": 20, "scenario.seed": 11})
    metrics = simulate(scenario)
    station = scenario.stations[0]
    state = solve_saturated_attempt_rate(n, station.dcf, exact_dcf=True)
    stats = slot_stats_homogeneous(state, scenario.phy, station, n)
    assert metrics.p_idle == pytest.approx(stats.p_idle, rel=0.01)
    assert metrics.p_succ == pytest.approx(stats.p_succ_total, rel=0.01)
    assert metrics.mean_wifi_goodput == pytest.approx(
        wifi_throughput_saturated(stats, station), rel=0.01)


@pytest.mark.slow
def test_single_station_goodput_matches_analysis():
    scenario = build_scenario({"wifi.n": 1, "scenario.sim_duration": 20, "scenario.seed": 5})
    metrics = simulate(scenario)
    station = scenario.stations[0]
    state = solve_saturated_attempt_rate(1, station.dcf, exact_dcf=True)
    stats = slot_stats_homogeneous(state, scenario.phy, station, 1)
    assert metrics.per_station_goodput[0] == pytest.approx(
        wifi_throughput_saturated(stats, station), rel=0.005)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 5, 10])
def test_collision_probability_matches_analysis(n):
    scenario = build_scenario({"wifi.n": n, "scenario.sim_duration": 40, "scenario.seed": 23})
    metrics = simulate(scenario)
    station = scenario.stations[0]
    stats = slot_stats_homogeneous(
        solve_saturated_attempt_rate(n, station.dcf, exact_dcf=True), scenario.phy, station, n)
    standard_error = np.sqrt(stats.p_coll * (1 - stats.p_coll) / metrics.mac_slots)
    tolerance = max(0.01 * stats.p_coll, 4 * standard_error)
    assert abs(metrics.p_coll - stats.p_coll) <= tolerance


@pytest.mark.slow
def test_multirate_slot_time_matches_analysis():
    scenario = _scenario(20.0, **{"wifi.rates": [156, 130, 78, 39, 13]})
    metrics = simulate(scenario)
    state = solve_heterogeneous_attempt_rates(scenario.stations, scenario.phy, exact_dcf=True)
    stats = slot_stats_heterogeneous(state, scenario.stations, scenario.phy)
    busy_and_idle = metrics.idle_time + metrics.success_time + metrics.collision_time
    assert busy_and_idle / metrics.mac_slots == pytest.approx(stats.t_slot, rel=0.01)


@pytest.mark.slow
def test_orla_take_rate_matches_policy():
    scenario = _scenario(40.0, **{"lbt.mode": "orla"})
    metrics = simulate(scenario)
    pi = scenario.policy.take_prob_pi
    n = metrics.lbt_opportunities
    sigma = np.sqrt(pi * (1 - pi) / n)
    assert n > 100_000
    assert abs(metrics.take_fraction - pi) <= 3 * sigma


# ---------------------------------------------------------------------------
# Fairness and gains
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_orla_is_fair_and_efficient():
    runs = run_paired(_scenario(20.0, **{"lbt.mode": "orla"}))
    verdict = fairness_verdict(runs.run, runs.twin, runs.baseline)
    assert runs.run.mean_wifi_goodput == pytest.approx(runs.twin.mean_wifi_goodput, rel=0.02)
    assert runs.run.lbt_collisions == 0
    assert verdict.lbt_gain >= 0.8


@pytest.mark.slow
def test_laa_short_frames_hog_airtime():
    metrics = simulate(_scenario(20.0, **{"lbt.mode": "laa", "lbt.t_lbt": 1000}))
    assert metrics.lbt_airtime >= 4 * metrics.mean_wifi_airtime


@pytest.mark.slow
def test_laa_long_frames_starve_wifi():
    runs = run_paired(_scenario(20.0, **{"lbt.mode": "laa", "lbt.t_lbt": 10_000}))
    loss = -relative_gain(runs.run.mean_wifi_goodput, runs.twin.mean_wifi_goodput)
    assert 0.80 <= loss <= 0.97
    assert relative_gain(runs.run.lbt_goodput, runs.twin.lbt_goodput) >= 8.0
    assert not fairness_verdict(runs.run, runs.twin, runs.baseline).passed


@pytest.mark.slow
def test_large_bursts_invert_sync_laa():
    keys = {"wifi.f_agg": 10, "lbt.t_lbt": 1000}
    sync = simulate(_scenario(20.0, **keys, **{"lbt.mode": "laa_sync"}))
    twin = simulate(legacy_twin(_scenario(20.0, **keys, **{"lbt.mode": "laa_sync"})))
    olaa = simulate(_scenario(20.0, **keys, **{"lbt.mode": "olaa"}))
    assert sync.lbt_goodput < twin.lbt_goodput
    assert olaa.lbt_goodput >= 1.5 * sync.lbt_goodput


@pytest.mark.slow
def test_orla_gain_under_partial_load():
    runs = run_paired(_scenario(20.0, **{"lbt.mode": "orla", "wifi.relative_load": 0.5}))
    assert relative_gain(runs.run.lbt_goodput, runs.twin.lbt_goodput) >= 1.0
    assert runs.run.mean_wifi_goodput == pytest.approx(runs.twin.mean_wifi_goodput, rel=0.02)


@pytest.mark.slow
@pytest.mark.parametrize("mode, min_gain", [("orla", 1.5), ("olaa", 1.2)])
def test_multirate_gains(mode, min_gain):
    scenario = _scenario(20.0, **{"wifi.rates": [156, 130, 78, 39, 13], "lbt.mode": mode})
    run = simulate(scenario)
    twin = simulate(legacy_twin(scenario))
    assert relative_gain(run.lbt_goodput, twin.lbt_goodput) >= min_gain
    assert sum(run.per_station_airtime) >= 0.98 * sum(twin.per_station_airtime)


@pytest.mark.slow
def test_wifi_only_baseline_outperforms_both():
    scenario = _scenario(5.0, **{"lbt.mode": "orla"})
    baseline = simulate(wifi_only(scenario))
    run = simulate(scenario)
    assert baseline.mean_wifi_goodput > run.mean_wifi_goodput


@pytest.mark.slow
def test_olaa_is_fair_to_every_station():
    runs = run_paired(_scenario(40.0, **{"lbt.mode": "olaa", "wifi.n": 2}))
    verdict = fairness_verdict(runs.run, runs.twin, runs.baseline)
    for mine, counterpart in zip(runs.run.per_station_goodput, runs.twin.per_station_goodput):
        assert mine >= 0.98 * counterpart
    assert verdict.passed
    assert runs.run.lbt_collisions == 0
