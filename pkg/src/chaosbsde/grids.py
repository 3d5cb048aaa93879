"""Time grids and per-step refined grids.

The coarse grid pi = {t_0, ..., t_m} drives the backward recursion.  The
step-i refined grid cuts the uniform lattice {j*T/M} at t_i and closes it
with t_i itself; its cells (s_{j-1}, s_j] carry the indicator basis.  Cells
are half-open on the left, so a lattice point belongs to the cell it closes.

All canonical points are computed as T * (k/n): IEEE division rounds the
exact rational, so mathematically equal points of different grids are
bitwise equal floats.  Increment reuse between consecutive refined grids
relies on this.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing partition of [0, T] with bounded step-size ratios."""

    points: np.ndarray
    max_ratio: float = 4.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a time grid needs at least the two endpoints")
        if pts[0] != 0.0:
            raise ValueError("time grids start at 0")
        deltas = np.diff(pts)
        if np.any(deltas <= 0):
            raise ValueError("time grid points must be strictly increasing")
        ratios = deltas[:-1] / deltas[1:]
        if ratios.size and ratios.max() > self.max_ratio + 1e-12:
            raise ValueError(
                f"mesh ratio {ratios.max():.3g} exceeds the allowed bound {self.max_ratio}"
            )
        object.__setattr__(self, "points", pts)

    @property
    def T(self):
        return float(self.points[-1])

    @property
    def m(self):
        return self.points.size - 1

    @property
    def deltas(self):
        return np.diff(self.points)


def build_time_grid(T, m) -> TimeGrid:
    """Uniform grid of m steps on [0, T]."""
    if T <= 0 or m < 1:
        raise ValueError(f"need T > 0 and m >= 1, got T={T}, m={m}")
    return TimeGrid(T * (np.arange(m + 1) / m), max_ratio=1.0)


@dataclass(frozen=True)
class RefinedGrid:
    """Partition of [0, t_i] defining the step-i indicator basis."""

    i: int
    points: np.ndarray

    @property
    def t_end(self):
        return float(self.points[-1])

    @property
    def n_cells(self):
        """M(i), the number of basis cells."""
        return self.points.size - 1

    @property
    def widths(self):
        return np.diff(self.points)


def build_refined_grid(grid: TimeGrid, M: int, i: int) -> RefinedGrid:
    """Lattice points below t_i, closed with t_i itself."""
    if not 1 <= i <= grid.m:
        raise ValueError(f"step index {i} out of range 1..{grid.m}")
    if M < 1:
        raise ValueError("need at least one basis cell")
    t_i = grid.points[i]
    lattice = grid.T * (np.arange(M + 1) / M)
    below = lattice[lattice < t_i]
    return RefinedGrid(i, np.append(below, t_i))


def locate_cell(rg: RefinedGrid, t) -> int:
    """The unique 1-based r with t in (s_{r-1}, s_r]."""
    if not 0.0 < t <= rg.t_end:
        raise ValueError(f"time {t} outside (0, {rg.t_end}]")
    return int(np.searchsorted(rg.points, t, side="left"))


def union_times(*arrays) -> np.ndarray:
    """Sorted union of time points (bitwise-equal duplicates collapse)."""
    merged = np.concatenate([np.atleast_1d(np.asarray(a, dtype=float)) for a in arrays])
    return np.unique(merged)
