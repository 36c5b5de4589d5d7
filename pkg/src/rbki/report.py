"""Figures (PNG via matplotlib's Agg backend) and matching gnuplot scripts."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .records import COLUMNS, TIMING_COLUMNS, TrialRecord

LN10 = math.log(10.0)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    # fixed metadata keeps the PNG a function of the plotted data
    fig.savefig(path, dpi=110, metadata={"Software": None})


def _col(name: str, columns: Sequence[str] = COLUMNS) -> int:
    return list(columns).index(name) + 1


def _series_key(rec: TrialRecord) -> int:
    return rec.b if rec.b is not None else 0


def trace_series(trace: Sequence[TrialRecord]) -> dict[int, list[TrialRecord]]:
    """Trace records of the first seed for each block size, ordered by q."""
    first_seed: dict[int, int] = {}
    for r in trace:
        first_seed.setdefault(_series_key(r), r.seed)
        first_seed[_series_key(r)] = min(first_seed[_series_key(r)], r.seed)
    out: dict[int, list[TrialRecord]] = defaultdict(list)
    for r in trace:
        if r.seed == first_seed[_series_key(r)]:
            out[_series_key(r)].append(r)
    return {b: sorted(v, key=lambda r: r.q or 0) for b, v in sorted(out.items())}


def _excess(ratio: float) -> float:
    return max(ratio - 1.0, 1e-16)


def render_bench(trace: Sequence[TrialRecord], out_dir, stem: str = "bench") -> list[Path]:
    """Two panels: excess Frobenius error against matvecs and against seconds.

    Writes ``<stem>.png`` and ``<stem>.gp``. The script reads
    ``<stem>_trace.csv`` (matvec panel) and ``<stem>_timings.csv`` (seconds
    panel), which the caller writes.
    """
    out_dir = Path(out_dir)
    plt = _pyplot()
    series = trace_series(trace)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for b, recs in series.items():
        err = [_excess(r.frobenius_ratio) for r in recs]
        axes[0].semilogy([r.matvec_count for r in recs], err, marker=".", label=f"b={b}")
        secs = [r.wall_time for r in recs]
        if all(math.isfinite(s) for s in secs):
            axes[1].semilogy(secs, err, marker=".", label=f"b={b}")
    axes[0].set_xlabel("matrix-vector products")
    axes[1].set_xlabel("seconds")
    for ax in axes:
        ax.set_ylabel("frobenius ratio - 1")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    _save(fig, png)
    plt.close(fig)

    gp = out_dir / f"{stem}.gp"
    e, m, f = _col("experiment"), _col("matvec_count"), _col("frobenius_ratio")
    te, tw, tf = (_col(c, TIMING_COLUMNS) for c in ("experiment", "wall_time", "frobenius_ratio"))
    lines = [
        "# usage: gnuplot " + gp.name,
        "set datafile separator ','",
        "set terminal pngcairo size 1100,440",
        f"set output '{stem}_gnuplot.png'",
        "set multiplot layout 1,2",
        "set logscale y",
        "set ylabel 'frobenius ratio - 1'",
        "set key top right",
        "set xlabel 'matrix-vector products'",
    ]
    plots = []
    for b in series:
        tag = f"trace/b={b:03d}"
        plots.append(
            f"'{stem}_trace.csv' every ::1 using {m}:(strcol({e}) eq '{tag}' ? "
            f"(column({f}) - 1 > 1e-16 ? column({f}) - 1 : 1e-16) : NaN) with linespoints title 'b={b}'"
        )
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no series")
    lines.append("set xlabel 'seconds'")
    plots = []
    for b in series:
        tag = f"trace/b={b:03d}"
        plots.append(
            f"'{stem}_timings.csv' every ::1 using {tw}:(strcol({te}) eq '{tag}' ? "
            f"(column({tf}) - 1 > 1e-16 ? column({tf}) - 1 : 1e-16) : NaN) with linespoints title 'b={b}'"
        )
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no series")
    lines.append("unset multiplot")
    gp.write_text("\n".join(lines) + "\n")
    return [png, gp]


def render_lab(summary_rows: Sequence[dict], out_dir, stem: str = "lab") -> list[Path]:
    """Median ``log10 sigma_min(K)`` with a 5-95% band against ``t``, next to the log-bound.

    ``summary_rows`` carry ``t``, ``q05``, ``q50``, ``q95`` and
    ``log_bound`` (natural logs). The script reads ``<stem>_summary.csv``.
    """
    out_dir = Path(out_dir)
    plt = _pyplot()
    rows = sorted(summary_rows, key=lambda r: r["t"])
    t = np.array([r["t"] for r in rows], dtype=np.float64)
    q05 = np.array([r["q05"] for r in rows]) / LN10
    q50 = np.array([r["q50"] for r in rows]) / LN10
    q95 = np.array([r["q95"] for r in rows]) / LN10
    bound = np.array([r["log_bound"] for r in rows]) / LN10
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].fill_between(t, q05, q95, alpha=0.3, label="5-95% of trials")
    axes[0].plot(t, q50, marker="o", label="median")
    axes[0].set_ylabel("log10 sigma_min(K)")
    axes[0].set_title("measured")
    axes[1].plot(t, q50, marker="o", label="median")
    axes[1].plot(t, bound, marker="s", label="lower bound")
    axes[1].set_ylabel("log10 value")
    axes[1].set_title("against the bound")
    for ax in axes:
        ax.set_xlabel("t = k / b")
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    _save(fig, png)
    plt.close(fig)

    gp = out_dir / f"{stem}.gp"
    header = list(SUMMARY_COLUMNS)
    ct, c05, c50, c95, cb = (header.index(c) + 1 for c in ("t", "q05", "q50", "q95", "log_bound"))
    lines = [
        "# usage: gnuplot " + gp.name,
        "set datafile separator ','",
        "set terminal pngcairo size 1100,440",
        f"set output '{stem}_gnuplot.png'",
        "set multiplot layout 1,2",
        "set xlabel 't = k / b'",
        "ln10 = log(10)",
        "set ylabel 'log10 sigma_min(K)'",
        f"plot '{stem}_summary.csv' every ::1 using {ct}:(column({c05})/ln10):(column({c95})/ln10) "
        "with filledcurves title '5-95%', \\",
        f"     '' every ::1 using {ct}:(column({c50})/ln10) with linespoints title 'median'",
        "set ylabel 'log10 value'",
        f"plot '{stem}_summary.csv' every ::1 using {ct}:(column({c50})/ln10) with linespoints title 'median', \\",
        f"     '' every ::1 using {ct}:(column({cb})/ln10) with linespoints title 'lower bound'",
        "unset multiplot",
    ]
    gp.write_text("\n".join(lines) + "\n")
    return [png, gp]


SUMMARY_COLUMNS = (
    "b",
    "t",
    "trials",
    "failures",
    "failure_fraction",
    "degenerate",
    "pv_violations",
    "log_bound",
    "q05",
    "q50",
    "q95",
    "median_slack",
)
