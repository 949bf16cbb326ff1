"""Gnuplot scripts for the CSV artifacts.

Scripts reference the CSV next to them by file name, so a directory of
results can be moved and replotted with ``gnuplot <script>``.
"""

from __future__ import annotations

import math
from pathlib import Path

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


def _preamble(output: str, width: float = 8.0) -> list[str]:
    height = width * GOLDEN_RATIO
    return [
        f'set terminal pngcairo size {int(width * 100)},{int(height * 100)} font ",11"',
        f"set output '{output}'",
        'set datafile separator ","',
        'set key top right',
        'set border 3',
        'set tics nomirror',
    ]


def density_script(csv_path: str | Path) -> str:
    """Plot ``density`` against ``x`` from a qsd CSV."""
    name = Path(csv_path).name
    lines = _preamble(Path(name).with_suffix('.png').name)
    lines += [
        "set xlabel 'x'",
        "set ylabel 'density'",
        f"plot '{name}' using 1:2 every ::1 with lines lw 2 title 'quasistationary density'",
    ]
    return '\n'.join(lines) + '\n'


def survivors_script(csv_path: str | Path, bin_edges: list[float]) -> str:
    """Plot the normalized survivor histogram at the last record time and the survival curve."""
    name = Path(csv_path).name
    stem = Path(name).stem
    width = bin_edges[1] - bin_edges[0] if len(bin_edges) > 1 else 1.0
    bins = len(bin_edges) - 1
    lines = _preamble(f'{stem}.png')
    lines += [
        'set multiplot layout 1,2',
        "set xlabel 't'",
        "set ylabel 'survival probability'",
        'set logscale y',
        f"plot '{name}' using 1:3 every ::1 with linespoints title 'P(tau > t)'",
        'unset logscale y',
        "set xlabel 'x'",
        "set ylabel 'conditioned density'",
        '# last row of the CSV, bins in columns 4 onward',
        f"stats '{name}' using 2 every ::1 nooutput",
        'last = STATS_records',
        f'set xrange [{bin_edges[0]!r}:{bin_edges[-1]!r}]',
        f"plot for [k=0:{bins - 1}] '{name}' every ::last::last "
        f'using ({bin_edges[0]!r} + (k + 0.5) * {width!r}):(column(k + 4) / ($2 * {width!r})) '
        'with points pt 7 ps 0.5 lc rgb "black" notitle',
        'unset multiplot',
    ]
    return '\n'.join(lines) + '\n'


def write_script(script: str, csv_path: str | Path) -> Path:
    """Write ``script`` next to the CSV as ``<stem>.gp``."""
    path = Path(csv_path).with_suffix('.gp')
    path.write_text(script)
    return path
