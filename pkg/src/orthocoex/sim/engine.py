"""Discrete-event simulation of one shared unlicensed channel.

The channel is a simpy process that walks through MAC slots.  A MAC slot is
an idle slot (σ), a successful exchange (T_s,i) or a collision (longest
involved frame).  Each DCF contender counts the idle slots left before its
next attempt; the channel skips the shortest count in a single timeout and
subtracts it from everybody.  Busy slots freeze every counter, so only the
stations that just transmitted can start the next busy slot without an idle
slot in between.

Holds of an orthogonal LBT node are inserted between MAC slots: they take
channel time but freeze the counters like any busy period, and they can only
start right after a WiFi busy slot (the LIFS opportunity), so they never
collide.  An ORLA take holds its ν-schedule of bursts; an OLAA take holds
T_LBT, of which the first T_res reserve the channel up to the frame boundary.

Usage:
    metrics = run_scenario(load_scenario("scenarios/orla_1500.scn"))
    check_invariants(metrics, scenario)
"""

import logging
import math
from collections.abc import Generator
from typing import Any

import numpy as np
import simpy

from ..analytic import tx_duration
from ..errors import ConfigError, SimulationInvariantError
from ..metrics import RunMetrics
from ..policy import burst_schedule, hold_duration, newcomer_profile, olaa_decide, orla_decide
from ..schema import DcfParams, LbtMode, Scenario

log = logging.getLogger(__name__)

US_PER_S = 1_000_000.0
LBT_STREAM_JUMP = 1024
CONSERVATION_TOL = 1e-9


def station_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for WiFi station ``index``; adding stations leaves others intact."""
    return np.random.Generator(np.random.PCG64(seed).jumped(index + 1))


def lbt_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed).jumped(LBT_STREAM_JUMP))


class DcfContender:
    """Binary exponential backoff of one contender, counted in idle slots.

    ``remaining`` is the number of idle slots still to see before the next
    attempt: the arrival wait of a fresh frame plus its backoff.  Busy slots
    and LBT holds leave it untouched.
    """

    def __init__(self, dcf: DcfParams, q: float, frame: float, rng: np.random.Generator):
        self.dcf = dcf
        self.q = q
        self.frame = frame
        self.rng = rng
        self.stage = 0
        self.remaining = 0
        self.successes = 0
        self.collisions = 0
        self.drops = 0
        self._fresh()

    def _backoff(self) -> int:
        window = 2 ** min(self.stage, self.dcf.max_backoff_stage) * self.dcf.cw_min
        return int(self.rng.integers(0, window))

    def _fresh(self) -> None:
        # one arrival check per idle slot; a frame is already waiting with probability q
        wait = 0 if self.q >= 1.0 else int(self.rng.geometric(self.q)) - 1
        self.stage = 0
        self.remaining = wait + self._backoff()

    def succeeded(self) -> None:
        self.successes += 1
        self._fresh()

    def collided(self) -> None:
        self.collisions += 1
        self.stage += 1
        if self.stage > self.dcf.retry_limit:
            self.drops += 1
            self._fresh()
        else:
            self.remaining = self._backoff()


class _Ledger:
    """Post-warmup accounting.  An event counts iff it starts at or after warmup."""

    def __init__(self, n: int, warmup: float):
        self.warmup = warmup
        self.first_start: float | None = None
        self.last_end = 0.0
        self.idle_slots = 0
        self.success_slots = 0
        self.collision_slots = 0
        self.idle_time = 0.0
        self.success_time = 0.0
        self.collision_time = 0.0
        self.lbt_time = 0.0
        self.station_time = [0.0] * n
        self.station_bits = [0.0] * n
        self.station_successes = [0] * n
        self.station_collisions = [0] * n
        self.lbt_bits = 0.0
        self.lbt_takes = 0
        self.lbt_opportunities = 0
        self.lbt_collisions = 0
        self.t_res_samples: list[float] = []

    def counts(self, start: float) -> bool:
        return start >= self.warmup

    def _span(self, start: float, end: float) -> None:
        if self.first_start is None:
            self.first_start = start
        self.last_end = end

    def idle_run(self, start: float, slots: int, sigma: float) -> None:
        skipped = 0
        if start < self.warmup:
            skipped = min(slots, math.ceil((self.warmup - start) / sigma))
        recorded = slots - skipped
        if recorded <= 0:
            return
        self._span(start + skipped * sigma, start + slots * sigma)
        self.idle_slots += recorded
        self.idle_time += recorded * sigma

    def busy(self, start: float, duration: float) -> bool:
        if not self.counts(start):
            return False
        self._span(start, start + duration)
        return True


class ChannelSimulation:
    """One seeded run of a Scenario."""

    def __init__(self, scenario: Scenario):
        _check_runnable(scenario)
        self.scenario = scenario
        self.mode = scenario.lbt_mode
        self.sigma = scenario.phy.slot_sigma
        self.t_lbt = scenario.lbt_t_lbt
        self.horizon = scenario.sim_duration * US_PER_S
        self.stations = [
            DcfContender(s.dcf, s.arrival_prob_q, tx_duration(scenario.phy, s),
                         station_rng(scenario.seed, i))
            for i, s in enumerate(scenario.stations)
        ]
        self.rng = lbt_rng(scenario.seed)
        self.lbt_node: DcfContender | None = None
        self.lbt_bits_per_success = 0.0
        if self.mode.contends:
            assert scenario.lbt_dcf is not None
            if self.mode is LbtMode.WIFI_LEGACY:
                newcomer = newcomer_profile(scenario.stations, scenario.lbt_rate, scenario.lbt_dcf)
                frame = tx_duration(scenario.phy, newcomer)
                self.lbt_bits_per_success = float(newcomer.payload_b)
            else:
                frame = self.t_lbt
            self.lbt_node = DcfContender(scenario.lbt_dcf, 1.0, frame, self.rng)
        self.contenders = [*self.stations, *([self.lbt_node] if self.lbt_node else [])]

        self.bursts: list[float] = []
        self.hold = 0.0
        if self.mode.orthogonal:
            assert scenario.policy is not None
            self.bursts = burst_schedule(scenario.policy.bursts_per_take_nu, self.t_lbt)
            if self.mode is LbtMode.ORLA:
                self.hold = hold_duration(self.bursts, scenario.phy.lifs)
            else:
                # CTS-to-self up to the frame boundary, then the rest of one frame
                self.hold = self.t_lbt
        self.ledger = _Ledger(len(self.stations), scenario.warmup * US_PER_S)
        self.events = 0
        self.trace: list[tuple[float, str, tuple[int, ...]]] | None = None

    # -- channel process ----------------------------------------------------

    def _channel(self, env: simpy.Environment) -> Generator[simpy.Event, Any, None]:
        if not self.contenders:
            yield from self._empty_channel(env)
            return
        while env.now < self.horizon:
            wait = min(c.remaining for c in self.contenders)
            if wait > 0:
                self.ledger.idle_run(env.now, wait, self.sigma)
                yield env.timeout(wait * self.sigma)
                self.events += 1
                for c in self.contenders:
                    c.remaining -= wait
                continue
            senders = [c for c in self.contenders if c.remaining == 0]
            start = env.now
            if len(senders) == 1:
                duration = self._success(senders[0], start)
            else:
                duration = self._collision(senders, start)
            if self.trace is not None:
                kind = "success" if len(senders) == 1 else "collision"
                self.trace.append(
                    (start, kind, tuple(self.contenders.index(c) for c in senders)))
            yield env.timeout(duration)
            self.events += 1
            for c in senders:
                if len(senders) == 1:
                    c.succeeded()
                else:
                    c.collided()
            if self.mode.orthogonal:
                yield from self._opportunity(env)

    def _empty_channel(self, env: simpy.Environment) -> Generator[simpy.Event, Any, None]:
        if not self.mode.orthogonal:
            slots = max(1, math.ceil(self.horizon / self.sigma))
            self.ledger.idle_run(env.now, slots, self.sigma)
            yield env.timeout(slots * self.sigma)
            self.events += 1
            return
        # nobody to protect: back-to-back bursts separated by LIFS
        gap = self.scenario.phy.lifs
        while env.now < self.horizon:
            if self.ledger.busy(env.now, self.t_lbt + gap):
                self.ledger.lbt_opportunities += 1
                self.ledger.lbt_takes += 1
                self.ledger.lbt_time += self.t_lbt + gap
                self.ledger.lbt_bits += self.t_lbt * self.scenario.lbt_rate
            yield env.timeout(self.t_lbt + gap)
            self.events += 1

    def _success(self, sender: DcfContender, start: float) -> float:
        led = self.ledger
        if sender is self.lbt_node:
            duration = sender.frame
            if led.busy(start, duration):
                led.success_slots += 1
                led.lbt_time += duration
                if self.mode is LbtMode.WIFI_LEGACY:
                    led.lbt_bits += self.lbt_bits_per_success
                elif self.mode is LbtMode.LAA_SYNC:
                    led.lbt_bits += (self.t_lbt - self._t_res(start)) * self.scenario.lbt_rate
                else:
                    led.lbt_bits += self.t_lbt * self.scenario.lbt_rate
            return duration
        i = self.stations.index(sender)
        duration = sender.frame
        if led.busy(start, duration):
            led.success_slots += 1
            led.success_time += duration
            led.station_time[i] += duration
            led.station_bits[i] += self.scenario.stations[i].payload_b
            led.station_successes[i] += 1
        return duration

    def _collision(self, senders: list[DcfContender], start: float) -> float:
        duration = max(c.frame for c in senders)
        led = self.ledger
        if led.busy(start, duration):
            led.collision_slots += 1
            led.collision_time += duration
            for c in senders:
                if c is self.lbt_node:
                    led.lbt_collisions += 1
                else:
                    led.station_collisions[self.stations.index(c)] += 1
        return duration

    def _t_res(self, now: float) -> float:
        t_res = (-now) % self.t_lbt
        return 0.0 if t_res >= self.t_lbt else t_res

    def _opportunity(self, env: simpy.Environment) -> Generator[simpy.Event, Any, None]:
        policy = self.scenario.policy
        assert policy is not None
        start = env.now
        led = self.ledger
        recorded = led.counts(start)
        if self.mode is LbtMode.ORLA:
            take = orla_decide(float(self.rng.random()), policy.take_prob_pi)
            data = sum(self.bursts)
        else:
            t_res = self._t_res(start)
            if recorded:
                led.t_res_samples.append(t_res)
            take = olaa_decide(t_res, policy.olaa_threshold)
            data = self.t_lbt - t_res
        if recorded:
            led.lbt_opportunities += 1
        if not take:
            return
        if led.busy(start, self.hold):
            led.lbt_takes += 1
            led.lbt_time += self.hold
            led.lbt_bits += data * self.scenario.lbt_rate
        yield env.timeout(self.hold)
        self.events += 1

    # -- results ------------------------------------------------------------

    def run(self) -> RunMetrics:
        env = simpy.Environment()
        proc = env.process(self._channel(env))
        env.run(until=proc)
        return self._metrics()

    def _metrics(self) -> RunMetrics:
        led = self.ledger
        if led.first_start is None:
            raise SimulationInvariantError("no event started after warmup")
        window = led.last_end - led.first_start
        s = self.scenario
        return RunMetrics(
            scenario_id=s.scenario_id,
            seed=s.seed,
            lbt_mode=s.lbt_mode.value,
            has_lbt=s.lbt_mode is not LbtMode.NONE,
            t_lbt=self.t_lbt,
            window=window,
            per_station_goodput=tuple(b / window for b in led.station_bits),
            per_station_airtime=tuple(t / window for t in led.station_time),
            per_station_successes=tuple(led.station_successes),
            per_station_collisions=tuple(led.station_collisions),
            per_station_drops=tuple(c.drops for c in self.stations),
            lbt_goodput=led.lbt_bits / window,
            lbt_airtime=led.lbt_time / window,
            lbt_takes=led.lbt_takes,
            lbt_opportunities=led.lbt_opportunities,
            lbt_collisions=led.lbt_collisions,
            idle_slots=led.idle_slots,
            success_slots=led.success_slots,
            wifi_collision_slots=led.collision_slots,
            busy_slots=led.success_slots + led.collision_slots,
            idle_time=led.idle_time,
            success_time=led.success_time,
            collision_time=led.collision_time,
            lbt_time=led.lbt_time,
            t_res_samples=tuple(led.t_res_samples),
        )


def _check_runnable(scenario: Scenario) -> None:
    if scenario.lbt_mode.orthogonal:
        if scenario.policy is None:
            raise ConfigError(f"mode {scenario.lbt_mode.value} needs a policy")
        if not math.isclose(scenario.policy.t_lbt, scenario.lbt_t_lbt):
            raise ConfigError("policy was derived for a different T_LBT")
    if scenario.lbt_mode.contends and scenario.lbt_dcf is None:
        raise ConfigError(f"mode {scenario.lbt_mode.value} needs lbt_dcf")


def run_scenario(scenario: Scenario) -> RunMetrics:
    """Simulate ``scenario``; identical inputs give identical metrics."""
    sim = ChannelSimulation(scenario)
    log.info("simulating %s: %d WiFi, mode %s, %.2f s, seed %d",
             scenario.scenario_id, scenario.n_wifi, scenario.lbt_mode.value,
             scenario.sim_duration, scenario.seed)
    metrics = sim.run()
    log.info("done %s: %d events, window %.3f s",
             scenario.scenario_id, sim.events, metrics.window / US_PER_S)
    return metrics


def check_invariants(metrics: RunMetrics, scenario: Scenario | None = None) -> None:
    """Raise SimulationInvariantError on broken conservation, orthogonality or counts."""
    accounted = (metrics.idle_time + metrics.success_time + metrics.collision_time
                 + metrics.lbt_time)
    if abs(accounted - metrics.window) > CONSERVATION_TOL * max(metrics.window, 1.0):
        raise SimulationInvariantError(
            f"time not conserved: {accounted:.6f} µs accounted"
            f" in a {metrics.window:.6f} µs window")
    if abs(metrics.airtime_total - 1.0) > CONSERVATION_TOL:
        raise SimulationInvariantError(f"airtime fractions sum to {metrics.airtime_total:.12f}")
    if metrics.lbt_takes > metrics.lbt_opportunities:
        raise SimulationInvariantError("more LBT takes than opportunities")
    mode = scenario.lbt_mode if scenario is not None else LbtMode(metrics.lbt_mode)
    if mode.orthogonal and metrics.lbt_collisions:
        raise SimulationInvariantError(
            f"{metrics.lbt_collisions} collisions involve an orthogonal LBT node")
