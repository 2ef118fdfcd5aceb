"""Per-figure CSVs and PNGs rebuilt from a run's ``summary.csv`` and ``daily.csv``."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import fmt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.2),
    "savefig.dpi": 120,
}


def _read(path: Path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def _write(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _wide(daily: list[dict], column: str):
    """day x strategy table of one daily column; strategies in first-seen order."""
    strategies = list(dict.fromkeys(r["strategy"] for r in daily))
    days = sorted({int(r["day"]) for r in daily})
    table = {(int(r["day"]), r["strategy"]): r[column] for r in daily}
    rows = [[d] + [table.get((d, s), "nan") for s in strategies] for d in days]
    return strategies, days, rows


def _line_plot(path: Path, strategies, rows, ylabel: str) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        days = [r[0] for r in rows]
        for j, s in enumerate(strategies):
            ax.plot(days, [float(r[j + 1]) for r in rows], label=s, lw=1.2)
        ax.set_xlabel("day")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def _bar_plot(path: Path, labels, values, ylabel: str) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(labels, values, color="0.45", width=0.6)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def emit_figures(in_dir, png: bool = True) -> list[Path]:
    """Write fig1a/fig1b (coverage and MAE by day) and fig3a/fig3b (energy and violations)."""
    d = Path(in_dir)
    daily = _read(d / "daily.csv")
    summary = _read(d / "summary.csv")
    out = []

    for name, column, ylabel in (("fig1a", "coverage", "state-space coverage"),
                                 ("fig1b", "mae", "transition model MAE (degC)")):
        strategies, _, rows = _wide(daily, column)
        _write(d / f"{name}.csv", ["day"] + strategies, rows)
        out.append(d / f"{name}.csv")
        if png and rows:
            _line_plot(d / f"{name}.png", strategies, rows, ylabel)
            out.append(d / f"{name}.png")

    base = next((float(r["cumulative_energy_kwh"]) for r in summary if r["strategy"] == "RBC"), None)
    rows3a = []
    for r in summary:
        e = float(r["cumulative_energy_kwh"])
        saving = (1.0 - e / base) if base else float("nan")
        rows3a.append([r["strategy"], fmt(e), fmt(saving)])
    _write(d / "fig3a.csv", ["strategy", "cumulative_energy_kwh", "saving_vs_rbc"], rows3a)
    out.append(d / "fig3a.csv")

    rows3b = [[r["strategy"], r["violations"], r["draws"]] for r in summary]
    _write(d / "fig3b.csv", ["strategy", "violations", "draws"], rows3b)
    out.append(d / "fig3b.csv")

    if png and summary:
        labels = [r["strategy"] for r in summary]
        _bar_plot(d / "fig3a.png", labels, [float(r[1]) for r in rows3a], "energy over evaluation days (kWh)")
        _bar_plot(d / "fig3b.png", labels, [int(r[1]) for r in rows3b], "draws delivered below comfort")
        out += [d / "fig3a.png", d / "fig3b.png"]
    return out
