"""Gnuplot script emission.

Scripts only reference the CSV written next to them; running ``gnuplot
<stem>.gp`` renders ``<stem>.png``.  Nothing is rendered here.
"""

import logging
from pathlib import Path

import pandas as pd

from .metrics import CSV_COLUMNS

log = logging.getLogger(__name__)

_HEADER = """\
set datafile separator ","
set terminal pngcairo size {width},{height} font ",10"
set output "{png}"
"""


def _col(columns: list[str], name: str) -> int:
    return columns.index(name) + 1


def _label(name: str) -> str:
    return name.replace("_", " ")


def heatmap_script(csv_name: str, png_name: str, cells: pd.DataFrame,
                   axes: tuple[str, str], outputs: list[str]) -> str:
    """One heatmap panel per (node kind, output) over the two sweep axes."""
    columns = list(cells.columns)
    x, y = _col(columns, axes[0]), _col(columns, axes[1])
    panels = [f"{kind}_{o}" for o in outputs for kind in ("wifi", "lbt")]
    lines = [
        _HEADER.format(width=640 * 2, height=480 * len(outputs), png=png_name),
        f"set multiplot layout {len(outputs)},2",
        f'set xlabel "{axes[0]}"',
        f'set ylabel "{axes[1]}"',
        "set view map",
        "set palette defined (-1 'red', 0 'white', 1 'blue')",
    ]
    for panel in panels:
        lines += [
            f'set title "{_label(panel)}"',
            f'plot "{csv_name}" every ::1 using {x}:{y}:{_col(columns, panel)} '
            "with image notitle",
        ]
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def lines_script(csv_name: str, png_name: str, cells: pd.DataFrame, axis: str,
                 outputs: list[str]) -> str:
    """One panel per output, WiFi and LBT curves against the single sweep axis."""
    columns = list(cells.columns)
    x = _col(columns, axis)
    lines = [
        _HEADER.format(width=640, height=400 * len(outputs), png=png_name),
        f"set multiplot layout {len(outputs)},1",
        f'set xlabel "{axis}"',
        "set grid",
    ]
    for output in outputs:
        wifi, lbt = _col(columns, f"wifi_{output}"), _col(columns, f"lbt_{output}")
        lines += [
            f'set ylabel "{_label(output)}"',
            f'plot "{csv_name}" every ::1 using {x}:{wifi} with linespoints title "WiFi", \\',
            f'     "{csv_name}" every ::1 using {x}:{lbt} with linespoints title "LBT"',
        ]
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def bars_script(csv_name: str, png_name: str) -> str:
    """Per-node goodput bars for a single-run CSV."""
    node = _col(CSV_COLUMNS, "node_id")
    kind = _col(CSV_COLUMNS, "node_kind")
    goodput = _col(CSV_COLUMNS, "goodput_mbps")
    return "\n".join([
        _HEADER.format(width=640, height=400, png=png_name),
        "set style fill solid 0.6",
        "set boxwidth 0.7",
        'set ylabel "goodput (Mb/s)"',
        "set yrange [0:*]",
        f'plot "{csv_name}" every ::1 using {node}:{goodput}:xtic(stringcolumn({kind}))'
        " with boxes notitle",
    ]) + "\n"


def cells_script(csv_path: Path, cells: pd.DataFrame, axes: list[str],
                 outputs: list[str], stem: str) -> str:
    """Heatmap for two axes, line plot for one; renders to ``<stem>.png``."""
    png = f"{stem}.png"
    if len(axes) == 2:
        return heatmap_script(csv_path.name, png, cells, (axes[0], axes[1]), outputs)
    return lines_script(csv_path.name, png, cells, axes[0], outputs)


def write_script(text: str, csv_path: Path, stem: str | None = None) -> Path:
    """Write ``<stem>.gp`` next to the CSV it plots."""
    path = csv_path.with_name(f"{stem or csv_path.stem}.gp")
    path.write_text(text, encoding="utf-8")
    log.info("Saved %s", path)
    return path
