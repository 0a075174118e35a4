"""Render report figures to files alongside the delimited output.

Pure presentation: every figure is drawn from the same arrays the CSV
emitters write, so plots can always be regenerated from the data files.
PNG metadata is pinned so reruns produce byte-identical images.
"""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import CateEstimates
from .evaluation import SubgroupReport

_DPI = 150
# Strip the library version stamp: reruns must be byte-identical.
_METADATA = {"Software": None}

_METHOD_COLORS = {
    "ols": "#4878cf",
    "causal_forest": "#6acc65",
    "s": "#d65f5f",
    "t": "#b47cc7",
    "x": "#c4ad66",
    "r": "#77bedb",
    "dr": "#ee854a",
}


def _color(method: str) -> str:
    return _METHOD_COLORS.get(method, "#888888")


def _save(fig, path) -> None:
    # Temp-then-rename keeps interrupted runs from leaving partial images.
    path = os.fspath(path)
    tmp = os.path.join(os.path.dirname(os.path.abspath(path)), f".tmp-{os.path.basename(path)}")
    fig.savefig(tmp, format="png", dpi=_DPI, bbox_inches="tight", metadata=_METADATA)
    plt.close(fig)
    os.replace(tmp, path)


def render_scatter(path, tau_true: np.ndarray, estimates: CateEstimates, title: str = "") -> None:
    """Estimates against true effects with the diagonal for reference."""
    tau_true = np.asarray(tau_true, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.scatter(tau_true, estimates.tau_hat, s=8, alpha=0.35, color=_color(estimates.method),
               edgecolors="none")
    lo = min(tau_true.min(), estimates.tau_hat.min())
    hi = max(tau_true.max(), estimates.tau_hat.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], color="#444444", lw=1, ls="--")
    ax.set_xlabel("true effect")
    ax.set_ylabel(f"estimated effect ({estimates.method})")
    if title:
        ax.set_title(title)
    _save(fig, path)


def render_importance(path, importance: Mapping[str, float], title: str = "") -> None:
    """Horizontal bars of normalized split importance, largest on top."""
    items = sorted(importance.items(), key=lambda kv: kv[1])
    names = [k for k, _ in items]
    weights = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(5.0, 0.5 * len(names) + 1.2))
    ax.barh(np.arange(len(names)), weights, color="#6acc65")
    ax.set_yticks(np.arange(len(names)), names)
    ax.set_xlabel("importance weight")
    if title:
        ax.set_title(title)
    _save(fig, path)


def render_subgroups(path, report: SubgroupReport, title: str = "") -> None:
    """Grouped bars: true subgroup means next to each method's means."""
    labels = [f"m={r.minority} f={r.female}\n{r.income_half} inc" for r in report.rows]
    series = [("true", [r.true_mean for r in report.rows], "#999999")]
    for method in report.methods:
        series.append((method, [r.means[method] for r in report.rows], _color(method)))
    width = 0.8 / len(series)
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(1.4 * len(labels) + 1.5, 4.2))
    for i, (name, values, color) in enumerate(series):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, values, width, label=name, color=color)
    ax.set_xticks(x, labels, fontsize=8)
    ax.set_ylabel("mean effect")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def render_all(
    out_dir,
    tau_true: np.ndarray,
    estimates: Sequence[CateEstimates],
    importance: Mapping[str, float] | None,
    report: SubgroupReport,
    scenario: str = "",
) -> list[str]:
    """Render the standard figure set for one scenario; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for est in estimates:
        path = os.path.join(out_dir, f"scatter_{est.method}.png")
        render_scatter(path, tau_true, est, title=scenario)
        written.append(path)
    if importance is not None:
        path = os.path.join(out_dir, "importance.png")
        render_importance(path, importance, title=scenario)
        written.append(path)
    path = os.path.join(out_dir, "subgroups.png")
    render_subgroups(path, report, title=scenario)
    written.append(path)
    return written
