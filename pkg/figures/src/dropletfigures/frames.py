"""Reader for the simulator's frame CSV format."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np


class FrameError(RuntimeError):
    """Missing directory, unreadable file or no frame at the requested time."""


@dataclass
class Frame:
    time: float
    x: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    u: np.ndarray
    T: np.ndarray
    phase: np.ndarray
    meta: dict = field(default_factory=dict)

    def field_values(self, name: str) -> np.ndarray:
        return getattr(self, name)


def read_frame(path: str) -> Frame:
    meta: dict = {}
    rows: list[list[str]] = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                elif line.startswith("x,"):
                    continue
                else:
                    rows.append(line.split(","))
    except OSError as err:
        raise FrameError(f"cannot read {path}: {err}") from err
    if not rows:
        raise FrameError(f"no data rows in {path}")
    data = np.array([[float(v) for v in row[:5]] for row in rows])
    phase = np.array([row[5] for row in rows])
    return Frame(time=float(meta.get("time", "nan")),
                 x=data[:, 0], rho=data[:, 1], p=data[:, 2],
                 u=data[:, 3], T=data[:, 4], phase=phase, meta=meta)


def load_frames(directory: str) -> list[Frame]:
    if not os.path.isdir(directory):
        raise FrameError(f"not a directory: {directory}")
    names = sorted(f for f in os.listdir(directory)
                   if f.startswith("frame") and f.endswith(".csv"))
    if not names:
        raise FrameError(f"no frame CSVs in {directory}")
    frames = [read_frame(os.path.join(directory, name)) for name in names]
    frames.sort(key=lambda fr: fr.time)
    return frames


def load_frame_at(directory: str, time: float, rel_tol: float = 1e-6) -> Frame:
    """The frame whose timestamp matches `time` within rel_tol."""
    frames = load_frames(directory)
    for frame in frames:
        if math.isclose(frame.time, time, rel_tol=rel_tol, abs_tol=1e-300):
            return frame
    available = ", ".join(f"{fr.time:g}" for fr in frames)
    raise FrameError(
        f"no frame at t = {time:g} in {directory} (available: {available})")
