"""Experiment harness: paired runs and parameter sweeps.

Sweep files are YAML, in the same spirit as the scenario presets::

    # LAA gain/loss heatmap over frame length and WiFi aggregation
    base: scenarios/laa_grid.scn
    axis1: {path: lbt.t_lbt, values: [1000, 2000, 5000, 10000]}
    axis2: {path: wifi.f_agg, values: [1, 2, 5, 10]}
    repetitions: 10
    outputs: [goodput_mbps, gain_vs_legacy]

A ``set`` block overrides base scenario keys for every cell, so one preset can
serve several sweeps (``set: {wifi.dcf.cw_min: 32, wifi.dcf.max_backoff_stage: 3}``).

Every (cell, repetition) pair is an independent task and may run in a worker
process; results are collected in (cell, repetition, node) order whatever
the completion order, so the CSV output is reproducible.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import pandas as pd
import yaml
from pydantic import ValidationError

from .errors import ConfigError
from .metrics import CSV_COLUMNS, RunMetrics, node_rows, rows_frame, write_csv
from .scenario import (
    build_scenario,
    is_numeric_path,
    legacy_twin,
    load_scenario_keys,
    wifi_only,
)
from .schema import LbtMode, Scenario, SweepSpec
from .sim.engine import check_invariants, run_scenario

log = logging.getLogger(__name__)

SWEEP_OUTPUTS = {"goodput_mbps", "airtime_frac", "takes", "opportunities", "collisions",
                 "gain_vs_legacy"}
_GAIN_MODES = {LbtMode.LAA, LbtMode.LAA_SYNC, LbtMode.ORLA, LbtMode.OLAA}


# ---------------------------------------------------------------------------
# Paired runs
# ---------------------------------------------------------------------------

def simulate(scenario: Scenario) -> RunMetrics:
    """Run and check one scenario."""
    metrics = run_scenario(scenario)
    check_invariants(metrics, scenario)
    return metrics


@dataclass
class PairedRuns:
    run: RunMetrics
    twin: RunMetrics
    baseline: RunMetrics


def run_paired(scenario: Scenario) -> PairedRuns:
    """Scenario, its wifi_legacy twin and the WiFi-only baseline, all on the same seed."""
    if scenario.lbt_mode not in _GAIN_MODES:
        raise ConfigError(f"nothing to compare in mode {scenario.lbt_mode.value}")
    return PairedRuns(
        run=simulate(scenario),
        twin=simulate(legacy_twin(scenario)),
        baseline=simulate(wifi_only(scenario)),
    )


# ---------------------------------------------------------------------------
# Sweep specification
# ---------------------------------------------------------------------------

def _resolve(path_text: str, sweep_path: Path) -> Path:
    path = Path(path_text)
    if path.is_absolute() or path.exists():
        return path
    return sweep_path.parent / path


def _overrides(raw: Any, sweep_path: Path) -> dict[str, str]:
    """Scenario keys from the sweep's ``set`` block, in scenario-file text form."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{sweep_path}: 'set' must map scenario keys to values")
    keys = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, dict) or value is None:
            raise ConfigError(f"{sweep_path}: set.{key}: expected a value or a list")
        keys[str(key)] = str(value).lower() if isinstance(value, bool) else str(value)
    return keys


def load_sweep(path: str | Path) -> SweepSpec:
    """Parse and validate a sweep YAML file, including every cell scenario."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read sweep {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict) or "base" not in raw:
        raise ConfigError(f"{path}: a sweep needs a 'base' scenario")

    base_path = _resolve(str(raw["base"]), path)
    keys = {**load_scenario_keys(base_path), **_overrides(raw.get("set", {}), path)}
    base = build_scenario(keys, default_id=base_path.stem)
    try:
        spec = SweepSpec.model_validate({
            **{k: v for k, v in raw.items() if k not in ("base", "set")},
            "base_path": str(base_path),
            "base": base,
            "base_keys": keys,
        })
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"])
        raise ConfigError(f"{path}: {where}: {err['msg']}") from exc

    for axis in (spec.axis1, spec.axis2):
        if axis is not None and not is_numeric_path(axis.path):
            raise ConfigError(f"{path}: {axis.path!r} is not a numeric scenario key")
    unknown = sorted(set(spec.outputs) - SWEEP_OUTPUTS)
    if unknown:
        raise ConfigError(f"{path}: unknown output {unknown[0]!r}")
    return spec


@dataclass
class SweepCell:
    index: int
    values: dict[str, int | float]
    scenario: Scenario


def expand_cells(spec: SweepSpec) -> list[SweepCell]:
    """Cartesian product of the axes, axis1 outermost."""
    combos: list[dict[str, int | float]] = [{spec.axis1.path: v} for v in spec.axis1.values]
    if spec.axis2 is not None:
        combos = [{**c, spec.axis2.path: v} for c in combos for v in spec.axis2.values]
    cells = []
    for index, values in enumerate(combos):
        scenario_id = spec.base.scenario_id if len(combos) == 1 else (
            f"{spec.base.scenario_id}-c{index:03d}")
        keys: dict[str, Any] = {**spec.base_keys, **values, "scenario.id": scenario_id}
        cells.append(SweepCell(index, values, build_scenario(keys)))
    return cells


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

_Task = tuple[int, int, Scenario, bool]


def _run_task(task: _Task) -> tuple[int, int, list[dict]]:
    cell, rep, scenario, compare = task
    metrics = simulate(scenario)
    twin = None
    if compare and scenario.lbt_mode in _GAIN_MODES:
        twin = simulate(legacy_twin(scenario))
    return cell, rep, node_rows(metrics, twin)


@dataclass
class SweepResult:
    rows: pd.DataFrame
    cells: pd.DataFrame


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Run every (cell, repetition); seeds are base seed + repetition index."""
    cells = expand_cells(spec)
    tasks: list[_Task] = [
        (cell.index, rep, cell.scenario.model_copy(update={"seed": spec.base.seed + rep}),
         spec.compare_legacy)
        for cell in cells
        for rep in range(spec.repetitions)
    ]
    log.info("sweep %s: %d cells x %d repetitions on %d worker(s)",
             spec.base.scenario_id, len(cells), spec.repetitions, jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    ordered = sorted(results, key=lambda r: (r[0], r[1]))
    rows = [row for _, _, cell_rows in ordered for row in cell_rows]
    cell_of = [cell for cell, _, cell_rows in ordered for _ in cell_rows]
    frame = rows_frame(rows)
    return SweepResult(rows=frame, cells=summarize_cells(frame, cell_of, cells, spec))


def summarize_cells(rows: pd.DataFrame, cell_of: list[int], cells: list[SweepCell],
                    spec: SweepSpec) -> pd.DataFrame:
    """Per-cell means over repetitions (and over WiFi stations) of the requested outputs."""
    tagged = rows.assign(cell_id=cell_of)
    table = pd.DataFrame({
        "cell_id": [c.index for c in cells],
        "scenario_id": [c.scenario.scenario_id for c in cells],
    })
    for axis in (spec.axis1, spec.axis2):
        if axis is not None:
            table[axis.path] = [c.values[axis.path] for c in cells]
    for kind in ("wifi", "lbt"):
        subset = tagged[tagged["node_kind"] == kind]
        for output in spec.outputs:
            means = subset.groupby("cell_id")[output].mean()
            table[f"{kind}_{output}"] = table["cell_id"].map(means).astype("float64")
    return table


def write_sweep(result: SweepResult, out: Path) -> Path:
    """Write node rows to ``out`` and cell means to ``<stem>_cells.csv``; returns the latter."""
    write_csv(result.rows[CSV_COLUMNS], out)
    cells_path = out.with_name(f"{out.stem}_cells.csv")
    write_csv(result.cells, cells_path)
    log.info("Saved %s, %s", out, cells_path)
    return cells_path
