"""Plain-text and delimited renderings of evaluation reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any


def pct(value: float | None) -> str:
    return "-" if value is None else f"{100 * value:.1f}"


def _timing_lines(timing: dict[str, Any] | None) -> list[str]:
    if not timing:
        return []
    percent = timing.get("overhead_percent")
    percent_text = "n/a" if percent is None else f"{percent:.2f}%"
    return [
        f"baseline latency   {timing['mean_baseline_latency']:.2f} s/case",
        f"added latency      {timing['mean_overhead_latency']:.2f} s/case ({percent_text} increase)",
    ]


def render_benchmark(report: dict[str, Any]) -> str:
    lines = [f"dataset: {report.get('dataset') or '-'}   n = {report['n']}"]
    if report["metric_kind"] == "preference":
        lines += [
            "",
            f"{'':16}{'w/o':>8}{'w':>8}",
            f"{'Preference (%)':16}{pct(report['reference_mean']):>8}{pct(report['mean']):>8}",
        ]
    else:
        lines += ["", f"{'Accuracy (%)':16}{pct(report['mean']):>8}"]
    timing = _timing_lines(report.get("timing"))
    if timing:
        lines += [""] + timing
    tokens = {k: v for k, v in (report.get("token_totals") or {}).items() if v is not None}
    if tokens:
        lines += [""] + [f"{k:<30}{v}" for k, v in sorted(tokens.items())]
    return "\n".join(lines) + "\n"


ABLATION_COLUMNS = ("config", "roles", "skips", "pref (%)", "w/o (%)", "n", "calls/q", "overhead (%)")


def _ablation_cells(row: dict[str, Any]) -> list[str]:
    overhead = row.get("overhead_percent")
    return [
        row["name"],
        "→".join(row["roles"]),
        "".join("y" if s else "n" for s in row["skip_flags"]),
        pct(row["mean"]),
        pct(row["reference_mean"]),
        str(row["n"]),
        f"{row['calls_per_query']:g}",
        "-" if overhead is None else f"{overhead:.2f}",
    ]


def render_ablation(table: dict[str, Any]) -> str:
    rows = [list(ABLATION_COLUMNS)] + [_ablation_cells(r) for r in table["rows"]]
    widths = [max(len(r[i]) for r in rows) for i in range(len(ABLATION_COLUMNS))]
    out = [f"dataset: {table.get('dataset') or '-'}   reference: no prompting", ""]
    for k, row in enumerate(rows):
        # text columns left-aligned, numbers right-aligned
        cells = [c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        out.append("  ".join(cells).rstrip())
        if k == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def ablation_csv(table: dict[str, Any]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config", "roles", "skip_flags", "mean", "reference_mean", "n", "calls_per_query", "overhead_percent"])
    for r in table["rows"]:
        writer.writerow(
            [
                r["name"],
                " ".join(r["roles"]),
                " ".join(str(s).lower() for s in r["skip_flags"]),
                r["mean"],
                r["reference_mean"],
                r["n"],
                r["calls_per_query"],
                "" if r["overhead_percent"] is None else r["overhead_percent"],
            ]
        )
    return buf.getvalue()


def render(report: dict[str, Any]) -> str:
    if report.get("kind") == "ablation":
        return render_ablation(report)
    return render_benchmark(report)


def write_per_case(report: dict[str, Any], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in report.get("per_case", []):
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
