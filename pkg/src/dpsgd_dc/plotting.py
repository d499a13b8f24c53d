"""Figures rendered next to the CSV output of ``curve``, ``train`` and ``mia``.

Everything goes through ``matplotlib.figure.Figure`` with the Agg canvas,
so no pyplot state is touched and no display is needed. The output format
follows the file suffix (png, pdf, svg, ...).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator

FIGSIZE = (5.0, 3.4)


def _new_axes(title: str | None = None):
    fig = Figure(figsize=FIGSIZE, dpi=120, layout="constrained")
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    ax.grid(True, alpha=0.3, linewidth=0.6)
    if title:
        ax.set_title(title, fontsize=10)
    return fig, ax


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    return path


def plot_curves(t_values, columns: dict[str, list[float]], path, *, alpha: float | None = None,
                log_y: bool = False) -> Path:
    """RDP epsilon against T, one line per bound family."""
    title = None if alpha is None else f"RDP bounds at alpha = {alpha:g}"
    fig, ax = _new_axes(title)
    t = np.asarray(t_values, dtype=float)
    for name, values in columns.items():
        ax.plot(t, values, label=name, linewidth=1.4)
    ax.set_xlabel("iterations T")
    ax.set_ylabel("epsilon (RDP)")
    if log_y:
        ax.set_yscale("log")
    if columns:
        ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def plot_trace(trace, path) -> Path:
    """Loss gap and gradient norm along a training run."""
    fig, ax = _new_axes("DPSGD trace")
    t = trace.column("t")
    ax.plot(t, trace.column("loss_gap"), label="loss gap", linewidth=1.2)
    ax.plot(t, trace.column("grad_norm"), label="grad norm", linewidth=1.2)
    ax.set_xlabel("iteration t")
    if np.all(trace.column("loss_gap") > 0) and np.all(trace.column("grad_norm") > 0):
        ax.set_yscale("log")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def plot_attack(report, path, *, eps_dp: float | None = None) -> Path:
    """Median empirical epsilon per epoch with its 95% band across trials."""
    fig, ax = _new_axes("membership inference")
    rows = np.array([r[1:] for r in report.rows()], dtype=float)
    epochs = report.epochs
    med, lo, hi = rows[:, 2], rows[:, 3], rows[:, 4]
    # infinite estimates (a zero error rate) are drawn at the top edge of the plot
    finite = rows[:, 2:5][np.isfinite(rows[:, 2:5])]
    top = 1.5 * finite.max() + 0.1 if finite.size else 1.0
    lo, med, hi = (np.where(np.isfinite(v), v, top) for v in (lo, med, hi))
    ax.fill_between(epochs, lo, hi, alpha=0.25, linewidth=0)
    ax.plot(epochs, med, marker="o", markersize=3, linewidth=1.4, label="median eps_hat")
    if eps_dp is not None and np.isfinite(eps_dp):
        ax.axhline(eps_dp, color="k", linestyle="--", linewidth=1.0, label=f"eps_dp = {eps_dp:.3g}")
    ax.set_xlabel("epoch")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_ylabel("empirical epsilon")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)
