"""SVG figures with byte-stable output.

Figures are drawn on a bare :class:`matplotlib.figure.Figure` (no pyplot
state), with a fixed SVG hash salt and no date stamp, so identical input gives
identical bytes for a given matplotlib version.
"""
from __future__ import annotations

import io
from typing import Dict, Optional, Sequence

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

PLOT_KINDS = ("eta_vs_gamma", "mse_vs_trainsize", "crossval_box")
SMOOTHING = 0.3
_RC = {"svg.hashsalt": "naqbc", "svg.fonttype": "path", "path.simplify": False}


def ema(values: Sequence[float], factor: float = SMOOTHING) -> list:
    """``s_0 = v_0``, ``s_t = factor * s_{t-1} + (1 - factor) * v_t``."""
    out = []
    for v in values:
        out.append(float(v) if not out else factor * out[-1] + (1.0 - factor) * float(v))
    return out


def _svg(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context(_RC):
        FigureCanvasSVG(fig)
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    return buf.getvalue()


def _reference_line(ax):
    ax.axhline(1.0, color="red", linestyle="--", linewidth=1.0, label="random (eta = 1)")


def eta_vs_gamma(series: Dict[str, Dict[Optional[int], float]], title: str = "") -> bytes:
    """``series[method][gamma] = mean eta``; a ``None`` gamma is drawn as a flat line."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for method in sorted(series):
        pts = series[method]
        if set(pts) == {None}:
            ax.axhline(pts[None], linestyle=":", linewidth=1.5, label=f"{method} (/)")
            continue
        gs = sorted(g for g in pts if g is not None)
        ax.plot(gs, [pts[g] for g in gs], marker="o", label=method)
    ax.set_xscale("log", base=2)
    _reference_line(ax)
    ax.set_xlabel("pool ratio gamma")
    ax.set_ylabel("normalised annotation burden eta")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    return _svg(fig)


def mse_vs_trainsize(series: Dict[str, tuple], smooth: bool = False,
                     e_star: Optional[float] = None, title: str = "") -> bytes:
    """``series[label] = (train_sizes, mses)``; optional EMA smoothing of the MSE."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for label in sorted(series):
        sizes, mses = series[label]
        ys = ema(mses) if smooth else list(mses)
        ax.plot(list(sizes), ys, marker="." if len(ys) == 1 else None, label=label)
    if e_star is not None:
        ax.axhline(e_star, color="grey", linestyle="--", linewidth=1.0, label="target error")
    ax.set_yscale("log")
    ax.set_xlabel("training set size")
    ax.set_ylabel("test MSE")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    return _svg(fig)


def crossval_box(values: Dict[str, Sequence[float]], title: str = "") -> bytes:
    """Box per method of its transferred eta values, with the random reference line."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    methods = sorted(values)
    ax.boxplot([list(values[m]) for m in methods], showmeans=True)
    ax.set_xticks(range(1, len(methods) + 1), methods, rotation=20)
    _reference_line(ax)
    ax.set_ylabel("eta (cross-validated)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    return _svg(fig)


def emit_plot(kind: str, series, path=None, **kw) -> bytes:
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if not series:
        raise ValueError("nothing to plot")
    data = {"eta_vs_gamma": eta_vs_gamma, "mse_vs_trainsize": mse_vs_trainsize,
            "crossval_box": crossval_box}[kind](series, **kw)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data
