"""Policy tables and the per-disengagement lead summary.

Leads print to 0.1 ft (the grid resolution) and values to four decimals.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import states as st
from .solver import RunnerPolicy

COUNT_LABELS = [f"{b}-{s}" for b, s in st.ALL_COUNTS]


def lead_grid(runner: RunnerPolicy) -> np.ndarray:
    """Leads as an array indexed ``[balls, strikes, d, outs]``."""
    out = np.full((4, 3, 3, 3), np.nan)
    for i, s in enumerate(runner.agency):
        p = st.state_of(int(s))
        out[p.count.balls, p.count.strikes, p.disengagements, p.outs] = runner.leads[runner.lead_idx[i]]
    return out


@dataclass
class TwoFootReport:
    """Leads at d = 0, 1, 2 for every (count, outs) cell and their increments."""

    cells: list  # (count label, outs, lead_d0, lead_d1, lead_d2)
    increments: np.ndarray  # (36, 2): d0->d1 and d1->d2

    @property
    def mean_increments(self):
        return tuple(float(x) for x in self.increments.mean(axis=0))

    @property
    def mean_increment(self) -> float:
        return float(self.increments.mean())

    @property
    def non_decreasing(self) -> bool:
        return bool(np.all(self.increments >= -1e-9))

    def format(self) -> str:
        lines = [f"{'count':>5} {'outs':>4} {'d=0':>6} {'d=1':>6} {'d=2':>6} {'+1st':>6} {'+2nd':>6}"]
        for (c, o, a, b, d), (i1, i2) in zip(self.cells, self.increments):
            lines.append(f"{c:>5} {o:>4} {a:6.1f} {b:6.1f} {d:6.1f} {i1:+6.1f} {i2:+6.1f}")
        m1, m2 = self.mean_increments
        lines.append(f"mean increment after the first disengagement: {m1:+.2f} ft")
        lines.append(f"mean increment after the second disengagement: {m2:+.2f} ft")
        lines.append(f"leads non-decreasing in every cell: {'yes' if self.non_decreasing else 'no'}")
        return "\n".join(lines)


def two_foot_rule_report(runner: RunnerPolicy) -> TwoFootReport:
    g = lead_grid(runner)
    cells, inc = [], []
    for b, s in st.ALL_COUNTS:
        for o in range(3):
            leads = g[b, s, :, o]
            cells.append((f"{b}-{s}", o, *leads))
            inc.append(np.diff(leads))
    return TwoFootReport(cells, np.array(inc))


def table_by_count(runner: RunnerPolicy, outs: int = 0):
    """12 count rows by 3 disengagement columns at a fixed number of outs."""
    g = lead_grid(runner)
    rows = [[label, *g[b, s, :, outs]] for label, (b, s) in zip(COUNT_LABELS, st.ALL_COUNTS)]
    return ["count", "d=0", "d=1", "d=2"], rows


def table_by_outs(runner: RunnerPolicy, count=(0, 0)):
    """3 outs rows by 3 disengagement columns at a fixed count."""
    g = lead_grid(runner)
    rows = [[str(o), *g[count[0], count[1], :, o]] for o in range(3)]
    return ["outs", "d=0", "d=1", "d=2"], rows


def format_table(header, rows, fmt: str = "text", title: str = None) -> str:
    """Aligned text or comma-separated rendering; leads to 0.1 ft."""
    cells = [[r[0]] + [f"{x:.1f}" for x in r[1:]] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if title:
            buf.write(f"# {title}\n")
        w.writerow(header)
        w.writerows(cells)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    widths = [max(len(h), *(len(c[j]) for c in cells)) for j, h in enumerate(header)]
    lines = [title] if title else []
    lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"
