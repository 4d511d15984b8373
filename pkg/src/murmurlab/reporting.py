"""Report rendering: delimited tables plus matplotlib figures.

Every report artifact is written twice: a CSV for downstream tooling and a
PNG for humans.  Rendering is deterministic for a fixed input so reruns of
the pipeline reproduce reports byte for byte.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import save_table
from .evaluation import CLASS_NAMES
from .labels import StepAgreement

_CLASS_COLORS = {"mild": "#66c2a5", "moderate": "#8da0cb", "loud_thrilling": "#fc8d62"}


def write_report_csv(rows: Sequence[dict], path) -> None:
    save_table(rows, path, fieldnames=("dataset", "classifier", "class",
                                       "sensitivity", "specificity", "accuracy", "mcc"))


def cycle_count_rows(counts: dict) -> list[dict]:
    """Flatten {subset: {class: n}} into report rows."""
    rows = []
    for subset, per_class in counts.items():
        for cls in CLASS_NAMES:
            rows.append({"subset": subset, "class": cls, "n_cycles": per_class.get(cls, 0)})
    return rows


def plot_cycle_counts(counts: dict, path) -> None:
    """Horizontal stacked bars of heart-cycle counts per class and subset."""
    subsets = list(counts.keys())
    fig, ax = plt.subplots(figsize=(8, 0.9 + 0.7 * len(subsets)))
    y = np.arange(len(subsets))[::-1]
    left = np.zeros(len(subsets))
    for cls in CLASS_NAMES:
        vals = np.array([counts[s].get(cls, 0) for s in subsets], dtype=float)
        ax.barh(y, vals, left=left, color=_CLASS_COLORS[cls], label=cls.replace("_", "/"))
        for yi, li, vi in zip(y, left, vals):
            if vi > 0:
                ax.text(li + vi / 2, yi, f"{int(vi)}", ha="center", va="center",
                        fontsize=8, color="white")
        left += vals
    for yi, total in zip(y, left):
        ax.text(total, yi, f" {int(total)}", ha="left", va="center", fontsize=8)
    ax.set_yticks(y)
    ax.set_yticklabels(subsets)
    ax.set_xlabel("heart cycles")
    ax.set_title("Heart cycles per murmur class")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def agreement_rows(trace: Sequence[StepAgreement]) -> list[dict]:
    raters = sorted(trace[0].per_rater) if trace else []
    rows = []
    for step in trace:
        row = {"steps_applied": step.steps_applied, "n_recordings": step.n_recordings,
               "alpha_all": step.overall.alpha}
        for r in raters:
            row[f"alpha_{r}"] = step.per_rater[r].alpha
        rows.append(row)
    return rows


def plot_agreement_trace(trace: Sequence[StepAgreement], path) -> None:
    """Alpha statistics across selection steps (overall + per two-pass rater)."""
    steps = [t.steps_applied for t in trace]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, [t.overall.alpha for t in trace], "o-", label="all raters")
    for rater in sorted(trace[0].per_rater) if trace else []:
        ax.plot(steps, [t.per_rater[rater].alpha for t in trace], "s--",
                label=f"rater {rater} (two passes)")
    for t in trace:
        ax.annotate(f"n={t.n_recordings}", (t.steps_applied, t.overall.alpha),
                    textcoords="offset points", xytext=(0, -14), ha="center", fontsize=7)
    ax.set_xlabel("selection steps applied")
    ax.set_ylabel("Krippendorff's alpha")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("Agreement across selection steps")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_metric_comparison(rows: Iterable[dict], path, metric: str = "accuracy") -> None:
    """Grouped bars of the aggregate metric per classifier, noisy vs cleaned labels."""
    rows = [r for r in rows if r["class"] == "all"]
    classifiers = sorted({r["classifier"] for r in rows})
    datasets = sorted({r["dataset"] for r in rows})
    width = 0.8 / max(len(datasets), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(classifiers))
    for i, ds in enumerate(datasets):
        vals = []
        for clf in classifiers:
            match = [r[metric] for r in rows if r["classifier"] == clf and r["dataset"] == ds]
            vals.append(match[0] if match and match[0] is not None else 0.0)
        bars = ax.bar(x + i * width, vals, width, label=ds)
        ax.bar_label(bars, fmt="%.2f", fontsize=7)
    ax.set_xticks(x + width * (len(datasets) - 1) / 2)
    ax.set_xticklabels(classifiers)
    ax.set_ylim(0, 1.15)
    ax.set_ylabel(metric)
    ax.set_title(f"Aggregate {metric} by classifier and label source")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
