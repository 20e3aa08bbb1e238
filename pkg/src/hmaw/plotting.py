"""Figures for evaluation reports, written next to report.json."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_DPI = 150
_STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 10,
}
WITH_COLOR = "#3a6ea5"
WITHOUT_COLOR = "#b0b0b0"


def save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def preference_figure(report: dict[str, Any], path: Path) -> Path:
    """Paired bar of w/o vs w preference plus the per-case score histogram."""
    with plt.rc_context(_STYLE):
        fig, (ax_bar, ax_hist) = plt.subplots(1, 2, figsize=(7, 2.8))
        values = [100 * report["reference_mean"], 100 * report["mean"]]
        bars = ax_bar.bar(["w/o", "w"], values, color=[WITHOUT_COLOR, WITH_COLOR], width=0.6)
        ax_bar.bar_label(bars, fmt="%.1f", padding=2)
        ax_bar.axhline(50, color="k", lw=0.6, ls=":")
        ax_bar.set_ylim(0, 105)
        ax_bar.set_ylabel("preference (%)")
        ax_bar.set_title(report.get("dataset") or "preference")

        scores = [row["score"] for row in report["per_case"]]
        levels = [0.0, 0.5, 1.0]
        counts = [sum(1 for s in scores if s == level) for level in levels]
        ax_hist.bar(["0", "0.5", "1"], counts, color=WITH_COLOR, width=0.6)
        ax_hist.set_xlabel("per-case score")
        ax_hist.set_ylabel("cases")
        ax_hist.set_title(f"n = {report['n']}")
        fig.tight_layout()
        return save(fig, path)


def accuracy_figure(report: dict[str, Any], path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3, 2.8))
        correct = sum(1 for row in report["per_case"] if row["correct"])
        bars = ax.bar(["correct", "wrong"], [correct, report["n"] - correct], color=[WITH_COLOR, WITHOUT_COLOR])
        ax.bar_label(bars, padding=2)
        ax.set_ylabel("cases")
        ax.set_title(f"accuracy {100 * report['mean']:.1f}%")
        fig.tight_layout()
        return save(fig, path)


def ablation_figure(table: dict[str, Any], path: Path) -> Path:
    rows = table["rows"]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 0.45 * len(rows) + 1.2))
        names = [r["name"] for r in rows][::-1]
        values = [100 * r["mean"] for r in rows][::-1]
        bars = ax.barh(names, values, color=WITH_COLOR, height=0.6)
        ax.bar_label(bars, fmt="%.1f", padding=2)
        ax.axvline(50, color="k", lw=0.6, ls=":")
        ax.set_xlim(0, 105)
        ax.set_xlabel("preference over no prompting (%)")
        fig.tight_layout()
        return save(fig, path)


def write_figures(report: dict[str, Any], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    if report.get("kind") == "ablation":
        return [ablation_figure(report, out_dir / "ablation.png")]
    if report["metric_kind"] == "preference":
        return [preference_figure(report, out_dir / "preference.png")]
    return [accuracy_figure(report, out_dir / "accuracy.png")]
