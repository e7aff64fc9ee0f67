"""Diagnostics shared by the solvers: mass, fronts, speeds and variation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .grid import SpatialGrid

NO_FRONT = None


def total_mass(field_, grid: SpatialGrid) -> float:
    """Riemann sum ``sum c_i dx^d``."""
    return float(np.sum(field_) * grid.cell_volume)


def front_position(field_, grid: SpatialGrid, theta: float = 1e-3, ref_max=None):
    """Outermost cell centres along x where ``c > theta * ref_max``.

    ``ref_max`` is normally the initial maximum; it defaults to the current
    one. In 2D the field is projected on the x axis by its maximum over y.
    Returns ``NO_FRONT`` (None) if no cell exceeds the threshold.
    """
    c = np.asarray(field_, dtype=float)
    if c.ndim == 2:
        c = c.max(axis=1)
    ref = float(np.max(c)) if ref_max is None else float(ref_max)
    if ref <= 0:
        return NO_FRONT
    idx = np.flatnonzero(c > theta * ref)
    if idx.size == 0:
        return NO_FRONT
    x = grid.axis(0)
    return float(x[idx[0]]), float(x[idx[-1]])


def steepness(field_, grid: SpatialGrid, index: int, width: int = 3) -> float:
    """``max |c_{i+1} - c_i| / dx`` over a few cells around ``index``."""
    c = np.asarray(field_, dtype=float)
    if c.ndim == 2:
        c = c.max(axis=1)
    lo, hi = max(0, index - width), min(c.size - 1, index + width)
    if hi <= lo:
        return 0.0
    return float(np.max(np.abs(np.diff(c[lo:hi + 1]))) / grid.spacing[0])


@dataclass
class FrontSeries:
    """Front positions and steepness over time."""

    times: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    steep_left: list = field(default_factory=list)
    steep_right: list = field(default_factory=list)

    def append(self, t, field_, grid, theta=1e-3, ref_max=None):
        if self.times and t <= self.times[-1]:
            raise ValidationError("front times must be strictly increasing")
        pos = front_position(field_, grid, theta, ref_max)
        if pos is NO_FRONT:
            return NO_FRONT
        x = grid.axis(0)
        il = int(np.argmin(np.abs(x - pos[0])))
        ir = int(np.argmin(np.abs(x - pos[1])))
        self.times.append(float(t))
        self.left.append(pos[0])
        self.right.append(pos[1])
        self.steep_left.append(steepness(field_, grid, il))
        self.steep_right.append(steepness(field_, grid, ir))
        return pos

    def __len__(self):
        return len(self.times)

    def to_rows(self):
        return [{"t": t, "front_left": a, "front_right": b, "steep_left": sl, "steep_right": sr}
                for t, a, b, sl, sr in zip(self.times, self.left, self.right,
                                           self.steep_left, self.steep_right)]


def front_speed(series: FrontSeries, window=None, side: str = "right") -> float:
    """Least-squares slope of the front position against time.

    ``window`` is ``(t0, t1)``; by default the first 20% of the run is
    dropped as a transient. ``side`` is ``"right"``, ``"left"`` (reported as
    an outward, positive speed) or ``"width"`` (half the growth rate of the
    support).
    """
    t = np.asarray(series.times, dtype=float)
    if t.size == 0:
        raise ValidationError("empty front series")
    if window is None:
        window = (t[0] + 0.2 * (t[-1] - t[0]), t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if np.count_nonzero(sel) < 5:
        raise ValidationError(f"need at least 5 samples in the fit window, got {np.count_nonzero(sel)}")
    r, l = np.asarray(series.right), np.asarray(series.left)
    y = {"right": r, "left": -l, "width": 0.5 * (r - l)}[side][sel]
    ts = t[sel]
    slope = np.polyfit(ts - ts.mean(), y, 1)[0]
    return float(slope)


def total_variation(field_) -> float:
    """``sum |c_{i+1} - c_i|`` of a 1D field."""
    c = np.asarray(field_, dtype=float)
    if c.ndim != 1:
        raise ValidationError("total_variation expects a 1D field")
    return float(np.sum(np.abs(np.diff(c))))
