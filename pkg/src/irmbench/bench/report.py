"""Bounds tables, plot-ready series and figures."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..bounds import BoundInputs, BoundReport, bounds_table
from .experiment import SummaryRow, TrialResult, aggregate, write_text

BOUNDS_FIELDS = ("name", "sample_count", "alpha_lo", "alpha_hi", "expression")
SERIES_FIELDS = ("n_samples", "mean", "stderr")


def emit_bounds_table(inp: BoundInputs) -> tuple[str, str]:
    """``(csv_text, markdown_text)`` with one row per bound formula."""
    rows = bounds_table(inp)
    return bounds_csv(rows), bounds_markdown(rows)


def _cells(r: BoundReport) -> list[str]:
    lo, hi = r.interval if r.interval is not None else ("", "")
    return [r.name, repr(r.sample_count), repr(lo) if lo != "" else "", repr(hi) if hi != "" else "", r.expression]


def bounds_csv(rows: Iterable[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUNDS_FIELDS)
    for r in rows:
        w.writerow(_cells(r))
    return buf.getvalue()


def bounds_markdown(rows: Iterable[BoundReport]) -> str:
    lines = ["| " + " | ".join(BOUNDS_FIELDS) + " |", "|" + "---|" * len(BOUNDS_FIELDS)]
    for r in rows:
        c = _cells(r)
        c[-1] = f"`{c[-1]}`"
        lines.append("| " + " | ".join(c) + " |")
    return "\n".join(lines) + "\n"


def parse_bounds_csv(text: str) -> list[BoundReport]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        interval = (float(r["alpha_lo"]), float(r["alpha_hi"])) if r["alpha_lo"] else None
        out.append(BoundReport(r["name"], float(r["sample_count"]), interval, r["expression"]))
    return out


def series(summary: Sequence[SummaryRow]) -> dict[tuple[str, str], list[SummaryRow]]:
    out: dict[tuple[str, str], list[SummaryRow]] = {}
    for s in summary:
        out.setdefault((s.variant, s.method), []).append(s)
    for rows in out.values():
        rows.sort(key=lambda s: s.n_samples)
    return out


def series_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_FIELDS)
    for s in rows:
        w.writerow([s.n_samples, repr(s.mean), repr(s.stderr)])
    return buf.getvalue()


def emit_plot_data(results: Sequence[TrialResult], out_dir, figures: bool = True) -> list[Path]:
    """One series file per (variant, method); optionally a PNG comparison per variant."""
    if not results:
        raise ValueError("no results to plot")
    out_dir = Path(out_dir)
    groups = series(aggregate(results))
    written = []
    for (variant, method), rows in sorted(groups.items()):
        path = out_dir / f"series_{variant}_{method}.csv"
        write_text(path, series_csv(rows))
        written.append(path)
    if figures:
        for variant in sorted({v for v, _ in groups}):
            path = out_dir / f"comparison_{variant}.png"
            plot_comparison({m: r for (v, m), r in groups.items() if v == variant}, variant, path)
            written.append(path)
    return written


def plot_comparison(by_method: dict[str, list[SummaryRow]], variant: str, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=120)
    for method, rows in sorted(by_method.items()):
        n = [r.n_samples for r in rows]
        m = [r.mean for r in rows]
        se = [0.0 if math.isnan(r.stderr) else r.stderr for r in rows]
        ax.errorbar(n, m, yerr=se, marker="o", capsize=3, label=method.upper())
    ax.set_xlabel("number of samples")
    ax.set_ylabel(r"$\|\hat W - W^*\|^2$")
    ax.set_title(f"{variant.upper()}-regression")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
