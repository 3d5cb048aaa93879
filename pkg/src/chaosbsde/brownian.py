"""Reproducible Brownian increment sampling.

Each (master seed, role, index) label owns an independent counter-based
Philox stream; the stream fills the whole (N, d, cells) block of
standardized increments in one fixed pass, so results never depend on
evaluation order or thread schedule.  Normals come from the inverse CDF
applied to uniforms built from 53 raw bits, keeping every draw strictly
inside (0, 1).

The stored primitive is the standardized increment
G[n, l, j] = (B^l_{s_j} - B^l_{s_{j-1}}) / sqrt(delta_j); every chaos
formula consumes these directly, and path values are prefix sums.
"""

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri

from .grids import RefinedGrid

# Stream roles; one family per role/index pair, all mutually independent.
ROLE_TERMINAL = 0
ROLE_STEP = 1
ROLE_EVAL = 2
ROLE_ORACLE = 3
ROLE_PICARD = 4


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus the (role, index) label of one Brownian family."""

    seed: int
    role: int
    index: int = 0


def normal_array(spec: SeedSpec, shape):
    """Standard normals for the labelled stream, deterministic given the label."""
    ss = SeedSequence(entropy=spec.seed & (2**64 - 1), spawn_key=(spec.role, spec.index))
    gen = Generator(Philox(seed=ss))
    raw = gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
    return ndtri((2.0 * raw + 1.0) * 2.0**-54)


class BrownianBatch:
    """Standardized increments of N paths on a fixed grid of time points."""

    def __init__(self, points, G):
        self.points = np.asarray(points, dtype=float)
        self.widths = np.diff(self.points)
        if self.points.size < 2 or self.points[0] != 0.0:
            raise ValueError("batch grids start at 0 (values are sums of increments)")
        if np.any(self.widths <= 0):
            raise ValueError("batch grid points must be strictly increasing")
        self.G = G

    @property
    def n_samples(self):
        return self.G.shape[0]

    @property
    def d(self):
        return self.G.shape[1]

    def values(self, times=None):
        """B at grid points (or a subset), shape (N, d, len(times)); B_0 = 0."""
        scaled = self.G * np.sqrt(self.widths)
        cum = np.concatenate(
            [np.zeros(self.G.shape[:2] + (1,)), np.cumsum(scaled, axis=2)], axis=2
        )
        if times is None:
            return cum
        times = np.atleast_1d(np.asarray(times, dtype=float))
        idx = np.searchsorted(self.points, times)
        valid = (idx < self.points.size) & (self.points[np.minimum(idx, self.points.size - 1)] == times)
        if not valid.all():
            missing = times[~valid]
            raise ValueError(f"times {missing.tolist()} are not points of the batch grid")
        return cum[:, :, idx]

    def standardized_on(self, rg: RefinedGrid):
        """Standardized increments over the cells of a coarser refined grid.

        Cells of rg must be unions of batch cells; when the grids coincide
        the stored increments are returned as-is.
        """
        if self.points.size == rg.points.size and np.array_equal(self.points, rg.points):
            return self.G
        idx = np.searchsorted(self.points, rg.points)
        if np.any(idx >= self.points.size) or np.any(self.points[idx] != rg.points):
            raise ValueError("refined grid points are not a subset of the batch grid")
        scaled = self.G * np.sqrt(self.widths)
        sums = np.add.reduceat(scaled, idx[:-1], axis=2)
        return sums / np.sqrt(rg.widths)


def sample_batch(points, d, N, spec: SeedSpec) -> BrownianBatch:
    """Draw N independent paths of a d-dimensional BM on the given grid."""
    if N < 1:
        raise ValueError("need at least one sample")
    points = np.asarray(points, dtype=float)
    G = normal_array(spec, (N, d, points.size - 1))
    return BrownianBatch(points, G)


def brownian_value(batch: BrownianBatch, n, l, t):
    """B^l_t of sample n at a grid point t (prefix sum of increments)."""
    return float(batch.values(times=[t])[n, l, 0])
