"""The 2x2 panel figure: log10(rho), p, u, T versus position."""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .frames import Frame, FrameError, load_frame_at

#: panel order: (field, axis label, transform applied to the values)
PANELS = (
    ("rho", "log10 density [kg/m3]", np.log10),
    ("p", "pressure [Pa]", None),
    ("u", "velocity [m/s]", None),
    ("T", "temperature [K]", None),
)


@dataclass
class FigureSpec:
    dir_a: str
    dir_b: str | None
    time: float
    out_path: str
    title: str | None = None


def panel_series(frame: Frame, name: str) -> tuple[np.ndarray, np.ndarray]:
    """The (x, values) actually plotted in the panel for `name`."""
    transform = next(t for n, _, t in PANELS if n == name)
    values = frame.field_values(name)
    return frame.x, transform(values) if transform else values


def render_figure(spec: FigureSpec):
    """Render and save the figure; returns the matplotlib Figure."""
    frame_a = load_frame_at(spec.dir_a, spec.time)
    frame_b = load_frame_at(spec.dir_b, spec.time) if spec.dir_b else None
    if frame_b is not None and frame_b.x.size != frame_a.x.size:
        raise FrameError("runs have mismatched comparison grids")

    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    label_a = "run A (" + frame_a.meta.get("algorithm", "?") + ")"
    label_b = None
    if frame_b is not None:
        label_b = "run B (" + frame_b.meta.get("algorithm", "?") + ")"

    x_range = (frame_a.x.min(), frame_a.x.max())
    for ax, (name, ylabel, _) in zip(axes.ravel(), PANELS):
        xa, ya = panel_series(frame_a, name)
        ax.plot(xa, ya, "-", color="tab:blue", label=label_a)
        if frame_b is not None:
            xb, yb = panel_series(frame_b, name)
            ax.plot(xb, yb, "o", color="tab:red", markersize=3,
                    markerfacecolor="none", label=label_b)
        ax.set_xlim(*x_range)
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("x [m]")
    axes[0][0].legend(loc="best", fontsize=8)

    title = spec.title
    if title is None:
        kn = frame_a.meta.get("kn", "?")
        scenario = frame_a.meta.get("scenario", "")
        title = f"{scenario} t = {frame_a.time:g} s, Kn = {kn}"
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    return fig
