"""Command-line runner for orthocoex.

Usage:
    orthocoex analyze  --scenario <file> [--out <csv>]
    orthocoex simulate --scenario <file> [--seed <n>] [--out <csv>] [--emit-plot]
    orthocoex sweep    --sweep <yaml> [--out <csv>] [--jobs <n>] [--emit-plot]
    orthocoex compare  --scenario <file> [--seed <n>]

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 simulation invariant violation.
"""

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .analytic import solve_population, wifi_throughput_heterogeneous
from .errors import CoexError, ConfigError
from .harness import load_sweep, run_paired, run_sweep, simulate, write_sweep
from .metrics import (
    fairness_verdict,
    format_metrics,
    format_verdict,
    node_rows,
    rows_frame,
    write_csv,
)
from .plotting import bars_script, cells_script, write_script
from .policy import derive_policy, lbt_goodput_olaa, lbt_goodput_orla, newcomer_profile
from .scenario import load_scenario
from .schema import Scenario

log = logging.getLogger(__name__)

ANALYSIS_COLUMNS = [
    "scenario_id", "station", "tau", "p", "p_idle", "p_succ", "p_succ_station", "p_coll",
    "t_slot", "s_mbps", "rho_bar", "pi", "nu", "lambda_opt", "olaa_threshold",
    "lbt_orla_mbps", "lbt_olaa_mbps",
]


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def analyze(scenario: Scenario) -> pd.DataFrame:
    """Analytic operating point of the WiFi population and the policy an LBT node would use.

    One row per WiFi station.  ``scenario.exact_dcf`` picks the frozen-counter
    τ (default) or the classic infinite-retry τ.
    """
    if not scenario.stations:
        raise ConfigError(f"{scenario.scenario_id}: no WiFi stations to analyze")
    phy = scenario.phy
    state, stats = solve_population(scenario.stations, phy, exact_dcf=scenario.exact_dcf)
    policy = scenario.policy if scenario.policy is not None else derive_policy(
        phy, scenario.stations, scenario.lbt_t_lbt,
        newcomer_profile(scenario.stations, scenario.lbt_rate, scenario.lbt_dcf),
        exact_dcf=scenario.exact_dcf, variant=scenario.rho_variant)
    orla = lbt_goodput_orla(policy, stats, phy.lifs, scenario.lbt_rate)
    olaa = lbt_goodput_olaa(policy, stats, scenario.lbt_rate)

    rows = []
    for i, station in enumerate(scenario.stations):
        rows.append({
            "scenario_id": scenario.scenario_id,
            "station": i,
            "tau": state.tau_per_station[i],
            "p": state.p_cond_per_station[i],
            "p_idle": stats.p_idle,
            "p_succ": stats.p_succ_total,
            "p_succ_station": stats.p_succ_per_station[i],
            "p_coll": stats.p_coll,
            "t_slot": stats.t_slot,
            "s_mbps": wifi_throughput_heterogeneous(stats, i, station),
            "rho_bar": policy.rho_bar,
            "pi": policy.take_prob_pi,
            "nu": policy.bursts_per_take_nu,
            "lambda_opt": policy.lambda_opt,
            "olaa_threshold": policy.olaa_threshold,
            "lbt_orla_mbps": orla,
            "lbt_olaa_mbps": olaa,
        })
    return pd.DataFrame(rows, columns=ANALYSIS_COLUMNS)


def format_analysis(df: pd.DataFrame) -> str:
    first = df.iloc[0]
    lines = [
        f"Analysis {first['scenario_id']}",
        f"  Slots:   P_idle {first['p_idle']:.6f}  P_succ {first['p_succ']:.6f}"
        f"  P_coll {first['p_coll']:.6f}  T_slot {first['t_slot']:.3f} µs",
        f"  Policy:  rho_bar {first['rho_bar']:.6f}  pi {first['pi']:.6f}  nu {first['nu']:.3f}"
        f"  lambda {first['lambda_opt']:.6f}  OLAA threshold {first['olaa_threshold']:.1f} µs",
        f"  LBT:     ORLA {first['lbt_orla_mbps']:.3f} Mb/s"
        f"  OLAA {first['lbt_olaa_mbps']:.3f} Mb/s",
        "",
        "  station       tau         p    s (Mb/s)",
    ]
    for _, row in df.iterrows():
        lines.append(
            f"    {row['station']:<6d} {row['tau']:9.6f} {row['p']:9.6f}  {row['s_mbps']:10.3f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_analyze(args: argparse.Namespace) -> None:
    """Solve the analytical model for a scenario."""
    scenario = load_scenario(args.scenario, seed=args.seed)
    df = analyze(scenario)
    print(format_analysis(df))
    if args.out:
        out = Path(args.out)
        write_csv(df, out)
        print(f"\nSaved: {out}")


def cmd_simulate(args: argparse.Namespace) -> None:
    """Simulate one scenario and write one CSV row per node."""
    scenario = load_scenario(args.scenario, seed=args.seed)
    metrics = simulate(scenario)
    print(format_metrics(metrics))
    if args.out:
        out = Path(args.out)
        write_csv(rows_frame(node_rows(metrics)), out)
        print(f"\nSaved: {out}")
        if args.emit_plot:
            write_script(bars_script(out.name, f"{out.stem}.png"), out)


def cmd_sweep(args: argparse.Namespace) -> None:
    """Run every cell of a sweep and write node rows plus per-cell means."""
    spec = load_sweep(args.sweep)
    out = Path(args.out) if args.out else Path("results") / f"{Path(args.sweep).stem}.csv"
    result = run_sweep(spec, jobs=args.jobs)
    cells_path = write_sweep(result, out)
    print(f"{len(result.cells)} cells, {len(result.rows)} rows")
    print(f"Saved: {out}, {cells_path}")
    if args.emit_plot:
        axes = [a.path for a in (spec.axis1, spec.axis2) if a is not None]
        write_script(cells_script(cells_path, result.cells, axes, spec.outputs, out.stem),
                     out, stem=out.stem)


def cmd_compare(args: argparse.Namespace) -> None:
    """Fairness verdict against the wifi_legacy twin and the WiFi-only baseline."""
    scenario = load_scenario(args.scenario, seed=args.seed)
    runs = run_paired(scenario)
    print(format_verdict(fairness_verdict(runs.run, runs.twin, runs.baseline)))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _jobs(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--jobs must be at least 1")
    return value


def main() -> None:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings only")

    parser = argparse.ArgumentParser(
        prog="orthocoex", description="WiFi / LBT coexistence analysis and simulation")
    sub = parser.add_subparsers(dest="command")

    p_an = sub.add_parser(
        "analyze", parents=[common], help="Analytical operating point",
        description="One CSV row per WiFi station.  With the default"
        " scenario.exact_dcf = true, tau is the retry-limited frozen-counter rate"
        " the simulator follows; scenario.exact_dcf = false gives the classic"
        " infinite-retry tau.")
    p_an.add_argument("--scenario", required=True, help="Scenario file")
    p_an.add_argument("--seed", type=_seed, help="Override scenario.seed")
    p_an.add_argument("--out", help="CSV output path")

    p_sim = sub.add_parser("simulate", parents=[common], help="Simulate one scenario")
    p_sim.add_argument("--scenario", required=True, help="Scenario file")
    p_sim.add_argument("--seed", type=_seed, help="Override scenario.seed")
    p_sim.add_argument("--out", help="CSV output path")
    p_sim.add_argument("--emit-plot", action="store_true", help="Also write a gnuplot script")

    p_sw = sub.add_parser("sweep", parents=[common], help="Run a parameter sweep")
    p_sw.add_argument("--sweep", required=True, help="Sweep YAML file")
    p_sw.add_argument("--out", help="CSV output path (default results/<sweep>.csv)")
    p_sw.add_argument("--jobs", type=_jobs, default=1, help="Worker processes")
    p_sw.add_argument("--emit-plot", action="store_true", help="Also write a gnuplot script")

    p_cmp = sub.add_parser("compare", parents=[common], help="Fairness verdict")
    p_cmp.add_argument("--scenario", required=True, help="Scenario file")
    p_cmp.add_argument("--seed", type=_seed, help="Override scenario.seed")

    args = parser.parse_args()
    commands = {
        "analyze": cmd_analyze,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "compare": cmd_compare,
    }
    if args.command not in commands:
        parser.print_help()
        sys.exit(1)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(message)s")
    try:
        commands[args.command](args)
    except CoexError as exc:
        print(f"orthocoex: error: {exc}", file=sys.stderr)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
