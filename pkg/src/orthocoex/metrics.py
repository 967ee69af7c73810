"""Run metrics, gains and fairness verdicts for coexistence simulations.

A RunMetrics value summarizes one simulated run over its post-warmup window.
Gains compare a run with its paired ``wifi_legacy`` twin (same seed, LBT node
replaced by one more WiFi station).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .errors import SimulationInvariantError

CSV_COLUMNS = [
    "scenario_id", "seed", "node_id", "node_kind", "goodput_mbps", "airtime_frac",
    "takes", "opportunities", "collisions", "gain_vs_legacy",
]
_COUNT_COLUMNS = ["seed", "node_id", "takes", "opportunities", "collisions"]
FLOAT_FORMAT = "%.6f"
FAIRNESS_RATIO = 0.98


@dataclass(frozen=True)
class RunMetrics:
    """Aggregate channel statistics of one run."""

    scenario_id: str
    seed: int
    lbt_mode: str
    has_lbt: bool
    t_lbt: float
    window: float  # µs

    # WiFi stations
    per_station_goodput: tuple[float, ...] = ()
    per_station_airtime: tuple[float, ...] = ()
    per_station_successes: tuple[int, ...] = ()
    per_station_collisions: tuple[int, ...] = ()
    per_station_drops: tuple[int, ...] = ()

    # LBT node
    lbt_goodput: float = 0.0
    lbt_airtime: float = 0.0
    lbt_takes: int = 0
    lbt_opportunities: int = 0
    lbt_collisions: int = 0

    # MAC slots
    idle_slots: int = 0
    success_slots: int = 0
    wifi_collision_slots: int = 0
    busy_slots: int = 0

    # Time buckets, µs
    idle_time: float = 0.0
    success_time: float = 0.0
    collision_time: float = 0.0
    lbt_time: float = 0.0

    t_res_samples: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_wifi(self) -> int:
        return len(self.per_station_goodput)

    @property
    def mac_slots(self) -> int:
        return self.idle_slots + self.busy_slots

    @property
    def p_idle(self) -> float:
        return self.idle_slots / self.mac_slots if self.mac_slots else 1.0

    @property
    def p_succ(self) -> float:
        return self.success_slots / self.mac_slots if self.mac_slots else 0.0

    @property
    def p_coll(self) -> float:
        return self.wifi_collision_slots / self.mac_slots if self.mac_slots else 0.0

    @property
    def idle_fraction(self) -> float:
        return self.idle_time / self.window

    @property
    def collision_fraction(self) -> float:
        return self.collision_time / self.window

    @property
    def take_fraction(self) -> float:
        return self.lbt_takes / self.lbt_opportunities if self.lbt_opportunities else 0.0

    @property
    def mean_wifi_goodput(self) -> float:
        if not self.per_station_goodput:
            return 0.0
        return sum(self.per_station_goodput) / self.n_wifi

    @property
    def mean_wifi_airtime(self) -> float:
        if not self.per_station_airtime:
            return 0.0
        return sum(self.per_station_airtime) / self.n_wifi

    @property
    def airtime_total(self) -> float:
        """Station, LBT, collision and idle fractions; 1 up to rounding."""
        return (sum(self.per_station_airtime) + self.lbt_airtime
                + self.collision_fraction + self.idle_fraction)


# ---------------------------------------------------------------------------
# Gains and fairness
# ---------------------------------------------------------------------------

def relative_gain(value: float, baseline: float) -> float | None:
    """(value − baseline)/baseline, or None when the baseline is zero."""
    if baseline == 0:
        return None
    return (value - baseline) / baseline


@dataclass
class FairnessVerdict:
    scenario_id: str
    seed: int
    wifi_goodput: float
    twin_wifi_goodput: float
    baseline_wifi_goodput: float
    lbt_goodput: float
    twin_lbt_goodput: float
    wifi_gain: float | None
    lbt_gain: float | None
    worst_ratio: float | None
    passed: bool


def fairness_verdict(run: RunMetrics, twin: RunMetrics, baseline: RunMetrics,
                     ratio: float = FAIRNESS_RATIO) -> FairnessVerdict:
    """PASS iff every WiFi station gets at least ``ratio`` × its twin counterpart's goodput.

    Station i of ``run`` is compared with station i of ``twin``; the twin's extra
    WiFi station is its LBT node and is not part of the comparison.
    """
    if len(run.per_station_goodput) != len(twin.per_station_goodput):
        raise SimulationInvariantError(
            f"run has {len(run.per_station_goodput)} WiFi stations,"
            f" twin has {len(twin.per_station_goodput)}")
    ratios = [g / t if t > 0 else math.inf
              for g, t in zip(run.per_station_goodput, twin.per_station_goodput)]
    return FairnessVerdict(
        scenario_id=run.scenario_id,
        seed=run.seed,
        wifi_goodput=run.mean_wifi_goodput,
        twin_wifi_goodput=twin.mean_wifi_goodput,
        baseline_wifi_goodput=baseline.mean_wifi_goodput,
        lbt_goodput=run.lbt_goodput,
        twin_lbt_goodput=twin.lbt_goodput,
        wifi_gain=relative_gain(run.mean_wifi_goodput, twin.mean_wifi_goodput),
        lbt_gain=relative_gain(run.lbt_goodput, twin.lbt_goodput),
        worst_ratio=min(ratios) if ratios else None,
        passed=all(r >= ratio for r in ratios),
    )


# ---------------------------------------------------------------------------
# CSV rows
# ---------------------------------------------------------------------------

def node_rows(m: RunMetrics, twin: RunMetrics | None = None) -> list[dict]:
    """One row per WiFi station plus one LBT row when an LBT node is present."""
    rows = []
    for i in range(m.n_wifi):
        gain = None
        if twin is not None and i < twin.n_wifi:
            gain = relative_gain(m.per_station_goodput[i], twin.per_station_goodput[i])
        rows.append({
            "scenario_id": m.scenario_id, "seed": m.seed, "node_id": i, "node_kind": "wifi",
            "goodput_mbps": m.per_station_goodput[i],
            "airtime_frac": m.per_station_airtime[i],
            "takes": None, "opportunities": None,
            "collisions": m.per_station_collisions[i],
            "gain_vs_legacy": gain,
        })
    if m.has_lbt:
        gain = relative_gain(m.lbt_goodput, twin.lbt_goodput) if twin is not None else None
        orthogonal = m.lbt_mode in ("orla", "olaa")
        rows.append({
            "scenario_id": m.scenario_id, "seed": m.seed, "node_id": m.n_wifi,
            "node_kind": "lbt",
            "goodput_mbps": m.lbt_goodput,
            "airtime_frac": m.lbt_airtime,
            "takes": m.lbt_takes if orthogonal else None,
            "opportunities": m.lbt_opportunities if orthogonal else None,
            "collisions": m.lbt_collisions,
            "gain_vs_legacy": gain,
        })
    return rows


def rows_frame(rows: list[dict]) -> pd.DataFrame:
    """Rows in CSV column order, counts as nullable integers."""
    df = pd.DataFrame(rows, columns=CSV_COLUMNS)
    for col in _COUNT_COLUMNS:
        df[col] = df[col].astype("Int64")
    for col in ("goodput_mbps", "airtime_frac", "gain_vs_legacy"):
        df[col] = df[col].astype("float64")
    return df


def write_csv(df: pd.DataFrame, path: Path) -> None:
    """Write with empty cells for missing values and fixed float formatting."""
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def format_metrics(m: RunMetrics) -> str:
    """Human-readable summary of one run."""
    lines = [
        f"Run {m.scenario_id} (seed {m.seed}, mode {m.lbt_mode})",
        f"  Window:      {m.window / 1e6:.3f} s, {m.mac_slots} MAC slots",
        f"  Slots:       idle {m.p_idle:.4f}  success {m.p_succ:.4f}  collision {m.p_coll:.4f}",
        f"  Airtime:     idle {m.idle_fraction:.4f}  collisions {m.collision_fraction:.4f}"
        f"  LBT {m.lbt_airtime:.4f}",
        "",
        "  WiFi station        goodput   airtime  collisions",
    ]
    for i in range(m.n_wifi):
        lines.append(
            f"    {i:<16d} {m.per_station_goodput[i]:8.3f}  {m.per_station_airtime[i]:8.4f}"
            f"  {m.per_station_collisions[i]:10d}"
        )
    if m.has_lbt:
        lines += [
            "",
            f"  LBT node:    {m.lbt_goodput:.3f} Mb/s, airtime {m.lbt_airtime:.4f}",
            f"    takes {m.lbt_takes} / {m.lbt_opportunities} opportunities"
            f" ({m.take_fraction:.4f}), collisions {m.lbt_collisions}",
        ]
    return "\n".join(lines)


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{x:+.1%}"


def _ratio(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def format_verdict(v: FairnessVerdict) -> str:
    return "\n".join([
        f"Fairness {v.scenario_id} (seed {v.seed})",
        f"  per-WiFi goodput:  {v.wifi_goodput:8.3f} Mb/s   twin {v.twin_wifi_goodput:8.3f}"
        f"   WiFi only {v.baseline_wifi_goodput:8.3f}",
        f"  LBT goodput:       {v.lbt_goodput:8.3f} Mb/s   twin {v.twin_lbt_goodput:8.3f}",
        f"  WiFi gain {_pct(v.wifi_gain)}   LBT gain {_pct(v.lbt_gain)}",
        f"  worst station vs twin: {_ratio(v.worst_ratio)}",
        f"  Verdict: {'PASS' if v.passed else 'FAIL'}",
    ])
