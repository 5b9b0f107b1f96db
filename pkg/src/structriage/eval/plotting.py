"""Matplotlib figures for evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset import Category  # noqa: E402
from .report import DIMENSIONS, EvalReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

COLORS = {"pdftriage": "#1b6ca8", "page": "#e0a526", "chunk": "#7a9a3a"}
NAMES = {"pdftriage": "PDFTriage", "page": "Page Retrieval", "chunk": "Chunk Retrieval"}


def _grouped_bars(ax, groups: list[str], series: dict[str, list[float]]) -> None:
    x = np.arange(len(groups))
    width = 0.8 / max(len(series), 1)
    for i, (strategy, values) in enumerate(series.items()):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, values, width,
               label=NAMES.get(strategy, strategy), color=COLORS.get(strategy))
    ax.set_xticks(x)
    ax.set_xticklabels(groups, rotation=35, ha="right")
    ax.legend(frameon=False)


def _label(category: str) -> str:
    try:
        return Category(category).label
    except ValueError:
        return category


def token_figure(report: EvalReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    strategies = report.strategies
    ax.bar([NAMES.get(s, s) for s in strategies],
           [report.mean_retrieved_tokens[s] for s in strategies],
           color=[COLORS.get(s) for s in strategies])
    if report.mean_metadata_tokens is not None:
        ax.axhline(report.mean_metadata_tokens, ls="--", lw=1, color="0.4", label="metadata prompt")
        ax.legend(frameon=False)
    ax.set_ylabel("mean retrieved tokens")
    fig.savefig(path)
    plt.close(fig)
    return path


def preference_figure(report: EvalReport, path: Path) -> Path:
    groups = ["Overall"] + [_label(c) for c in report.category_preference]
    series = {
        s: [report.preference.get(s, 0.0)] + [p.get(s, 0.0) for p in report.category_preference.values()]
        for s in report.strategies
    }
    fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(groups) + 2), 3))
    _grouped_bars(ax, groups, series)
    ax.set_ylabel("share ranked first")
    ax.set_ylim(0, 1)
    fig.savefig(path)
    plt.close(fig)
    return path


def category_score_figure(report: EvalReport, dimension: str, path: Path) -> Path:
    cats = list(report.category_scores)
    series = {s: [report.category_scores[c].get(s, {}).get(dimension, 0.0) for c in cats]
              for s in report.strategies}
    fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(cats) + 2), 3))
    _grouped_bars(ax, [_label(c) for c in cats], series)
    ax.set_ylabel(f"mean {dimension} (1-5)")
    ax.set_ylim(0, 5)
    fig.savefig(path)
    plt.close(fig)
    return path


def difficulty_figure(report: EvalReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    labels = list(report.difficulty_histogram)
    ax.bar([l.title() for l in labels], [report.difficulty_histogram[l] for l in labels], color="0.5")
    ax.set_ylabel("questions")
    fig.savefig(path)
    plt.close(fig)
    return path


def write_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Render every figure the report has data for; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        written.append(token_figure(report, out / "retrieved_tokens.png"))
        if report.preference:
            written.append(preference_figure(report, out / "preferences.png"))
        if report.category_scores:
            for dim in DIMENSIONS:
                written.append(category_score_figure(report, dim, out / f"{dim}_by_category.png"))
        if any(report.difficulty_histogram.values()):
            written.append(difficulty_figure(report, out / "difficulty.png"))
    return written
