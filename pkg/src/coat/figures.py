"""Matplotlib figures for simulation results, written next to the CSV.

One figure per (scenario, metric): the metric against sample size, one
line per engine, pointwise 95% confidence bands dashed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "coat"  # reproducible SVG element ids

import matplotlib.pyplot as plt

from .simulate import SimResult

_METHOD_STYLE = {
    "ctree": ("#888888", "s"),
    "ctree_trafo": ("#1b9e77", "o"),
    "disttree": ("#7570b3", "^"),
    "mob": ("#d95f02", "d"),
}


def read_results_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [
            {
                "scenario": row["scenario"],
                "method": row["method"],
                "n": int(row["n"]),
                "metric": row["metric"],
                "value": float(row["value"]),
                "ci_low": float(row["ci_low"]),
                "ci_high": float(row["ci_high"]),
            }
            for row in csv.DictReader(fh)
        ]


def rows_from_result(result: SimResult) -> list[dict]:
    return [
        {
            "scenario": r.scenario, "method": r.method, "n": r.n,
            "metric": r.metric, "value": r.value,
            "ci_low": r.ci_low, "ci_high": r.ci_high,
        }
        for r in result.rows
    ]


def render_sim_figures(rows: list[dict], out_dir, stem: str = "simulation",
                       fmt: str = "svg") -> list[Path]:
    """Write one figure per (scenario, metric); returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    combos = sorted({(r["scenario"], r["metric"]) for r in rows})
    written: list[Path] = []
    for scenario, metric in combos:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for method in sorted({r["method"] for r in rows}):
            series = sorted(
                (r for r in rows
                 if r["scenario"] == scenario and r["metric"] == metric
                 and r["method"] == method),
                key=lambda r: r["n"],
            )
            if not series:
                continue
            ns = [r["n"] for r in series]
            color, marker = _METHOD_STYLE.get(method, ("#333333", "x"))
            ax.plot(ns, [r["value"] for r in series], color=color, marker=marker,
                    markersize=4, label=method)
            ax.plot(ns, [r["ci_low"] for r in series], color=color,
                    linewidth=0.8, linestyle="--", alpha=0.6)
            ax.plot(ns, [r["ci_high"] for r in series], color=color,
                    linewidth=0.8, linestyle="--", alpha=0.6)
        if metric == "rejection_rate" and scenario == "null":
            ax.axhline(0.05, color="#aaaaaa", linewidth=0.8, linestyle=":")
        ax.set_xlabel("sample size n")
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(f"{scenario}: {metric.replace('_', ' ')}")
        ax.legend(frameon=False, fontsize=9)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
        path = out_dir / f"{stem}_{scenario}_{metric}.{fmt}"
        # strip the creation date so identical inputs give identical bytes
        metadata = {"Date": None} if fmt == "svg" else None
        fig.savefig(path, bbox_inches="tight", metadata=metadata)
        plt.close(fig)
        written.append(path)
    return written
