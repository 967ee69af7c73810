"""Canonical data model for coexistence scenarios.

All durations are in microseconds, rates in Mb/s and sizes in bits, so that
bits / (Mb/s) gives microseconds directly.  Every model is frozen: values are
built once (by the scenario parser or the analytical solvers) and shared
between the analysis, the simulator and worker processes.
"""

import math
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ---------------------------------------------------------------------------
# PHY and contention parameters
# ---------------------------------------------------------------------------

class PhyProfile(_Frozen):
    """802.11ac timing and overhead constants (5 GHz defaults)."""

    slot_sigma: float = Field(default=9.0, gt=0, description="Idle slot duration σ.")
    difs: float = Field(default=34.0, gt=0)
    sifs: float = Field(default=16.0, gt=0)
    lifs: float = Field(default=20.0, gt=0, description="LBT inter-frame space.")
    t_plcp: float = Field(default=40.0, gt=0, description="PLCP preamble and header.")
    l_del: int = Field(default=32, ge=0, description="MPDU delimiter, bits.")
    l_mac_oh: int = Field(default=288, ge=0, description="MAC header and FCS, bits.")
    l_pad: int = Field(default=0, ge=0)
    l_ack: int = Field(default=256, ge=0)
    c_ctrl: float = Field(default=24.0, gt=0, description="Control frame rate.")

    @model_validator(mode="after")
    def _orthogonal_ifs(self) -> "PhyProfile":
        if not self.sifs < self.lifs < self.difs:
            raise ValueError(
                f"inter-frame spaces must satisfy SIFS < LIFS < DIFS "
                f"(got {self.sifs} / {self.lifs} / {self.difs})"
            )
        return self


class DcfParams(_Frozen):
    """Binary exponential backoff settings.  CW_max = 2^m̄ · CW_min is derived."""

    cw_min: int = Field(default=16, ge=1)
    max_backoff_stage: int = Field(default=4, ge=0)
    retry_limit: int = Field(default=-1, description="Defaults to max_backoff_stage.")

    @model_validator(mode="before")
    @classmethod
    def _default_retry_limit(cls, data: object) -> object:
        if isinstance(data, dict) and data.get("retry_limit", -1) == -1:
            data = {**data, "retry_limit": data.get("max_backoff_stage", 4)}
        return data

    @model_validator(mode="after")
    def _retry_equals_stage(self) -> "DcfParams":
        if self.retry_limit != self.max_backoff_stage:
            raise ValueError(
                f"retry_limit ({self.retry_limit}) must equal "
                f"max_backoff_stage ({self.max_backoff_stage})"
            )
        return self

    @property
    def cw_max(self) -> int:
        return 2**self.max_backoff_stage * self.cw_min


class StationProfile(_Frozen):
    """One WiFi contender: contention, traffic load and rate."""

    dcf: DcfParams = Field(default_factory=DcfParams)
    data_rate_c: float = Field(default=130.0, gt=0)
    f_agg: int = Field(default=1, ge=1, description="Packets aggregated per burst.")
    payload_b: int = Field(default=12000, gt=0, description="Total payload per burst, bits.")
    arrival_prob_q: float = Field(default=1.0, gt=0, le=1, description="1.0 means saturated.")

    @property
    def saturated(self) -> bool:
        return self.arrival_prob_q >= 1.0


# ---------------------------------------------------------------------------
# Analytical results
# ---------------------------------------------------------------------------

class SteadyState(_Frozen):
    """Solved attempt rates τ_i and conditional collision probabilities p_i.

    With ``exact_dcf`` the τ_i are attempts per own slot of the frozen-counter
    chain, not per MAC slot.
    """

    tau_per_station: list[float]
    p_cond_per_station: list[float]
    residual: float = Field(ge=0)
    iterations: int = 0
    exact_dcf: bool = False

    @model_validator(mode="after")
    def _ranges(self) -> "SteadyState":
        if len(self.tau_per_station) != len(self.p_cond_per_station):
            raise ValueError("tau and p lists differ in length")
        if any(not 0.0 < t < 1.0 for t in self.tau_per_station):
            raise ValueError("every attempt rate must lie in (0, 1)")
        if any(not 0.0 <= p < 1.0 for p in self.p_cond_per_station):
            raise ValueError("every collision probability must lie in [0, 1)")
        return self

    @property
    def n(self) -> int:
        return len(self.tau_per_station)


class SlotStats(_Frozen):
    """Steady-state MAC slot probabilities and durations."""

    p_idle: float = Field(ge=0, le=1)
    p_succ_total: float = Field(ge=0, le=1)
    p_coll: float = Field(ge=0, le=1)
    p_tx: float = Field(ge=0, le=1)
    p_succ_per_station: list[float]
    t_slot: float = Field(gt=0)
    t_succ_per_station: list[float]
    t_coll: float = Field(ge=0)

    @model_validator(mode="after")
    def _consistent(self) -> "SlotStats":
        if abs(self.p_idle + self.p_succ_total + self.p_coll - 1.0) > 1e-9:
            raise ValueError("slot probabilities must sum to 1")
        if abs(self.p_tx - (1.0 - self.p_idle)) > 1e-9:
            raise ValueError("p_tx must equal 1 - p_idle")
        return self

    @property
    def n(self) -> int:
        return len(self.p_succ_per_station)


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

class PolicyParams(_Frozen):
    """Operating point of an orthogonal LBT node."""

    rho_bar: float = Field(ge=0, description="Claimable fraction of idle slots (may be inf).")
    take_prob_pi: float = Field(ge=0, le=1)
    bursts_per_take_nu: float = Field(ge=1)
    lambda_opt: float = Field(ge=0, le=1, description="Optimal long-run goodput ratio.")
    olaa_threshold: float = Field(ge=0)
    t_lbt: float = Field(gt=0)

    @model_validator(mode="after")
    def _threshold_in_frame(self) -> "PolicyParams":
        if self.olaa_threshold > self.t_lbt:
            raise ValueError("olaa_threshold cannot exceed t_lbt")
        return self


# ---------------------------------------------------------------------------
# Scenarios and sweeps
# ---------------------------------------------------------------------------

class LbtMode(str, Enum):
    NONE = "none"
    WIFI_LEGACY = "wifi_legacy"
    LAA = "laa"
    LAA_SYNC = "laa_sync"
    ORLA = "orla"
    OLAA = "olaa"

    @property
    def orthogonal(self) -> bool:
        return self in (LbtMode.ORLA, LbtMode.OLAA)

    @property
    def contends(self) -> bool:
        """True when the LBT node runs the DCF state machine."""
        return self in (LbtMode.WIFI_LEGACY, LbtMode.LAA, LbtMode.LAA_SYNC)


class Scenario(_Frozen):
    """A complete simulation input: channel, WiFi population and LBT node."""

    scenario_id: str = "scenario"
    phy: PhyProfile = Field(default_factory=PhyProfile)
    stations: list[StationProfile] = Field(default_factory=list)
    lbt_mode: LbtMode = LbtMode.NONE
    lbt_t_lbt: float = Field(default=1000.0, gt=0)
    lbt_rate: float = Field(default=130.0, gt=0)
    lbt_dcf: DcfParams | None = None
    policy: PolicyParams | None = None
    rho_variant: Literal["tight", "closed_form"] = "tight"
    exact_dcf: bool = Field(
        default=True,
        description="Analyse with the retry-limited slot model the simulator executes.",
    )
    sim_duration: float = Field(default=10.0, gt=0, description="Seconds.")
    warmup: float = Field(default=0.5, ge=0, description="Seconds.")
    seed: int = Field(default=1, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _mode_requirements(self) -> "Scenario":
        if self.lbt_mode.orthogonal and self.policy is None:
            raise ValueError(f"lbt mode {self.lbt_mode.value} requires a policy")
        if self.lbt_mode.contends and self.lbt_dcf is None:
            raise ValueError(f"lbt mode {self.lbt_mode.value} requires lbt_dcf")
        if not self.sim_duration > self.warmup:
            raise ValueError("sim_duration must exceed warmup")
        if self.policy is not None and not math.isclose(self.policy.t_lbt, self.lbt_t_lbt):
            raise ValueError("policy.t_lbt differs from lbt_t_lbt")
        return self

    @property
    def n_wifi(self) -> int:
        return len(self.stations)


class SweepAxis(_Frozen):
    path: str = Field(..., description="Scenario-file key, e.g. 'lbt.t_lbt'.")
    values: list[int | float] = Field(..., min_length=1)


class SweepSpec(_Frozen):
    """A one- or two-axis grid of scenario variants, each run `repetitions` times."""

    base_path: str
    base: Scenario
    base_keys: dict[str, str]
    axis1: SweepAxis
    axis2: SweepAxis | None = None
    repetitions: int = Field(default=10, ge=1)
    outputs: list[str] = Field(default_factory=lambda: ["goodput_mbps", "gain_vs_legacy"])
    compare_legacy: bool = True
