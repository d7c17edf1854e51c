"""Campaign and search reporting: delimited tables plus rendered figures.

Every figure written here has a CSV twin holding the same numbers, so the
plots are reproducible and the data stays grep-able.  Rendering uses the
Agg backend and never needs a display.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .search import SimRecord
from .triage import CampaignMetrics, CritRecord, cumulative_types

_METHOD_COLORS = {"genetic": "#d1495b", "random": "#30638e"}


def _color(method: str) -> str:
    return _METHOD_COLORS.get(method, "#666666")


def write_search_progress(history: Sequence[SimRecord], csv_path, png_path) -> None:
    """Per-generation best headway minimum and cumulative collision count."""
    by_gen: dict[int, list[SimRecord]] = {}
    for r in history:
        by_gen.setdefault(r.generation, []).append(r)
    rows = []
    crit_total = 0
    for gen in sorted(by_gen):
        records = by_gen[gen]
        crit_total += sum(1 for r in records if r.critical)
        rows.append({
            "generation": gen,
            "best_mhd": min(r.fv.mhd for r in records),
            "mean_mhd": sum(r.fv.mhd for r in records) / len(records),
            "cumulative_criticals": crit_total,
        })

    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    fig, ax = plt.subplots(figsize=(7, 4))
    gens = [r["generation"] for r in rows]
    ax.plot(gens, [r["best_mhd"] for r in rows], marker="o", color="#d1495b",
            label="best minimum headway (m)")
    ax.plot(gens, [r["mean_mhd"] for r in rows], marker=".", linestyle="--",
            color="#edae49", label="mean minimum headway (m)")
    ax.set_xlabel("generation")
    ax.set_ylabel("minimum headway distance (m)")
    ax2 = ax.twinx()
    ax2.step(gens, [r["cumulative_criticals"] for r in rows], where="post",
             color="#30638e", label="collisions found")
    ax2.set_ylabel("cumulative collisions")
    handles1, labels1 = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles1 + handles2, labels1 + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def write_types_over_sims(
    curves: Mapping[str, Sequence[Sequence[CritRecord]]], csv_path, png_path
) -> None:
    """Distinct-types-so-far against simulation index, one curve per method
    averaged over repetitions (repetitions drawn faintly behind)."""
    rows = []
    per_method: dict[str, list[list[tuple[int, int]]]] = {}
    for method, reps in curves.items():
        rep_curves = [cumulative_types(records) for records in reps]
        per_method[method] = rep_curves
        length = max((len(c) for c in rep_curves), default=0)
        for i in range(length):
            values = [c[min(i, len(c) - 1)][1] for c in rep_curves if c]
            rows.append({
                "method": method,
                "sim": i + 1,
                "mean_types": sum(values) / len(values) if values else 0.0,
            })

    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "sim", "mean_types"])
        writer.writeheader()
        writer.writerows(rows)

    fig, ax = plt.subplots(figsize=(7, 4))
    for method, rep_curves in per_method.items():
        color = _color(method)
        for curve in rep_curves:
            ax.step([s for s, _ in curve], [n for _, n in curve], where="post",
                    color=color, alpha=0.25, linewidth=0.8)
        series = [r for r in rows if r["method"] == method]
        ax.step([r["sim"] for r in series], [r["mean_types"] for r in series],
                where="post", color=color, linewidth=2.0, label=method)
    ax.set_xlabel("simulations")
    ax.set_ylabel("distinct collision types found")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def write_type_counts(
    counts: Mapping[str, Counter], csv_path, png_path
) -> None:
    """How often each collision type was generated, per method."""
    labels = sorted({label for c in counts.values() for label in c})
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["type", *counts.keys()])
        writer.writeheader()
        for label in labels:
            writer.writerow({"type": label, **{m: counts[m].get(label, 0) for m in counts}})

    fig, ax = plt.subplots(figsize=(8, max(3, 0.45 * len(labels) + 1.5)))
    y = range(len(labels))
    width = 0.8 / max(len(counts), 1)
    for i, (method, counter) in enumerate(counts.items()):
        offsets = [yy + i * width for yy in y]
        ax.barh(offsets, [counter.get(label, 0) for label in labels], height=width,
                color=_color(method), label=method)
    ax.set_yticks([yy + (len(counts) - 1) * width / 2 for yy in y])
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xlabel("collision scenarios generated")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def _stat_cell(stat) -> str:
    return "" if stat is None else f"{stat.mean:.4f}"


def _std_cell(stat) -> str:
    return "" if stat is None else f"{stat.std:.4f}"


def write_metrics_csv(per_method: Mapping[str, CampaignMetrics], path) -> None:
    fields = [
        "method", "repetitions", "reps_with_criticals",
        "n_types_mean", "n_types_std",
        "n_critical_mean", "n_critical_std",
        "type_expos_rate_mean", "type_expos_rate_std",
        "sim_for_first_type_mean", "sim_for_first_type_std",
        "sim_for_all_types_mean", "sim_for_all_types_std",
        "time_for_one_scenario_mean", "time_for_one_scenario_std",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for method, m in per_method.items():
            writer.writerow({
                "method": method,
                "repetitions": m.repetitions,
                "reps_with_criticals": m.reps_with_criticals,
                "n_types_mean": _stat_cell(m.n_types),
                "n_types_std": _std_cell(m.n_types),
                "n_critical_mean": _stat_cell(m.n_critical),
                "n_critical_std": _std_cell(m.n_critical),
                "type_expos_rate_mean": _stat_cell(m.type_expos_rate),
                "type_expos_rate_std": _std_cell(m.type_expos_rate),
                "sim_for_first_type_mean": _stat_cell(m.sim_for_first_type),
                "sim_for_first_type_std": _std_cell(m.sim_for_first_type),
                "sim_for_all_types_mean": _stat_cell(m.sim_for_all_types),
                "sim_for_all_types_std": _std_cell(m.sim_for_all_types),
                "time_for_one_scenario_mean": _stat_cell(m.time_for_one_scenario),
                "time_for_one_scenario_std": _std_cell(m.time_for_one_scenario),
            })


def write_metrics_json(per_method: Mapping[str, CampaignMetrics], path) -> None:
    def stat_dict(stat):
        return None if stat is None else {"mean": stat.mean, "std": stat.std}

    payload = {
        method: {
            "repetitions": m.repetitions,
            "reps_with_criticals": m.reps_with_criticals,
            "n_types": stat_dict(m.n_types),
            "n_critical": stat_dict(m.n_critical),
            "type_expos_rate": stat_dict(m.type_expos_rate),
            "sim_for_first_type": stat_dict(m.sim_for_first_type),
            "sim_for_all_types": stat_dict(m.sim_for_all_types),
            "time_for_one_scenario": stat_dict(m.time_for_one_scenario),
        }
        for method, m in per_method.items()
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
