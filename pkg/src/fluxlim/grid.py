"""Uniform Cartesian grids in one or two space dimensions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

BOUNDARIES = ("no-flux", "periodic")


@dataclass(frozen=True)
class SpatialGrid:
    """Cell-centred grid on a box ``prod_i [lower_i, upper_i]``.

    Attributes
    ----------
    lower, upper : tuple of float
        Box corners, one entry per axis.
    cells : tuple of int
        Cells per axis, at least 8.
    boundary : str
        ``"no-flux"`` or ``"periodic"`` on every side.
    """

    lower: tuple
    upper: tuple
    cells: tuple
    boundary: str = "no-flux"

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        n = tuple(int(x) for x in np.atleast_1d(self.cells))
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (1, 2):
            raise ValidationError("grid needs matching lower/upper/cells with 1 or 2 axes")
        if any(k < 8 for k in n):
            raise ValidationError(f"at least 8 cells per axis are required, got {n}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValidationError("grid extent must be positive on every axis")
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "cells", n)

    @classmethod
    def line(cls, lower: float, upper: float, cells: int, boundary: str = "no-flux"):
        return cls((lower,), (upper,), (cells,), boundary)

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def extent(self) -> tuple:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def spacing(self) -> tuple:
        return tuple(e / k for e, k in zip(self.extent, self.cells))

    @property
    def dx(self) -> float:
        """Smallest spacing."""
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def axis(self, i: int) -> np.ndarray:
        h = self.spacing[i]
        return self.lower[i] + h * (np.arange(self.cells[i]) + 0.5)

    def centers(self):
        """Cell centres: an array in 1D, a pair of meshgrids in 2D."""
        if self.dimension == 1:
            return self.axis(0)
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def gradient(self, f: np.ndarray) -> list:
        """Cell-centred central differences, one-sided at no-flux walls."""
        out = []
        for ax, h in enumerate(self.spacing):
            if self.periodic:
                g = (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h)
            else:
                g = np.gradient(f, h, axis=ax)
            out.append(g)
        return out

    def to_json(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper),
                "cells": list(self.cells), "boundary": self.boundary}
