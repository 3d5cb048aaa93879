"""Multi-indices of the truncated chaos basis.

A multi-index assigns a Hermite degree to every (Brownian coordinate, basis
cell) pair.  It is stored as a matrix with d rows and M columns, flattened
coordinate-major (row l, column j maps to flat position l*M + j).  The index
set for parameters (P, M, d) contains every index with total degree at most
P, ordered by total degree and then lexicographically on the flattened
vector; rank 0 is the zero index carrying the constant coefficient.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hermite import DEGREE_CAP

# Hard ceiling on enumerated set sizes; C(P + dM, dM) grows fast.
DEFAULT_SIZE_CAP = 2**24

_FACTORIALS = np.array([math.factorial(k) for k in range(DEGREE_CAP + 1)], dtype=float)
_LOG_FACTORIALS = np.log(_FACTORIALS)


@dataclass(frozen=True)
class MultiIndex:
    """One chaos index: degrees[l, j] is the Hermite degree of coordinate l on cell j."""

    degrees: np.ndarray

    def __post_init__(self):
        deg = np.asarray(self.degrees, dtype=np.uint8)
        if deg.ndim != 2:
            raise ValueError("degrees must be a (d, M) matrix")
        object.__setattr__(self, "degrees", deg)

    @property
    def n_coords(self):
        return self.degrees.shape[0]

    @property
    def n_cells(self):
        return self.degrees.shape[1]

    @property
    def total(self):
        return int(self.degrees.sum())

    @property
    def log_weight(self):
        """log(a!) = sum of log-factorials of the entries."""
        return float(_LOG_FACTORIALS[self.degrees].sum())

    @property
    def weight(self):
        """a! as an exactly representable float (entries capped at 16)."""
        return float(_FACTORIALS[self.degrees].prod())

    def flat(self):
        return self.degrees.reshape(-1)


def pad_index(a: MultiIndex, m_new: int) -> MultiIndex:
    """Append zero cells so the index has m_new columns; total degree unchanged."""
    if m_new < a.n_cells:
        raise ValueError(f"cannot pad to {m_new} cells, index has {a.n_cells}")
    padded = np.zeros((a.n_coords, m_new), dtype=np.uint8)
    padded[:, : a.n_cells] = a.degrees
    return MultiIndex(padded)


def truncate_prefix(a: MultiIndex, r: int) -> MultiIndex:
    """Zero out every cell beyond the r-th, in all coordinates."""
    if not 1 <= r <= a.n_cells:
        raise ValueError(f"prefix length {r} out of range 1..{a.n_cells}")
    kept = a.degrees.copy()
    kept[:, r:] = 0
    return MultiIndex(kept)


_COMPOSITION_CACHE = {}


def _compositions(n, k):
    """All length-n vectors of non-negative ints summing to k, lex ascending."""
    if n == 1:
        return np.array([[k]], dtype=np.uint8)
    key = (n, k)
    cached = _COMPOSITION_CACHE.get(key)
    if cached is not None:
        return cached
    blocks = []
    for first in range(k + 1):
        tail = _compositions(n - 1, k - first)
        head = np.full((tail.shape[0], 1), first, dtype=np.uint8)
        blocks.append(np.hstack([head, tail]))
    out = np.vstack(blocks)
    _COMPOSITION_CACHE[key] = out
    return out


class IndexSet:
    """All multi-indices with #a = M cells, d coordinates and |a| <= P.

    degrees has shape (size, d*M) in graded lexicographic order; grade k
    occupies rows grade_starts[k]:grade_starts[k+1].  Rank lookups and the
    product build graph are constructed lazily.
    """

    def __init__(self, P, M, d=1, size_cap=DEFAULT_SIZE_CAP):
        if P < 0 or M < 1 or d < 1:
            raise ValueError(f"invalid index set parameters P={P}, M={M}, d={d}")
        if P > DEGREE_CAP:
            raise ValueError(f"chaos order {P} exceeds Hermite degree cap {DEGREE_CAP}")
        n = d * M
        size = math.comb(P + n, n)
        if size > size_cap:
            raise ValueError(
                f"index set for (P={P}, M={M}, d={d}) has {size} elements, "
                f"above the cap {size_cap}"
            )
        self.P = P
        self.M = M
        self.d = d
        blocks = [np.zeros((1, n), dtype=np.uint8)]
        starts = [0, 1]
        for k in range(1, P + 1):
            blocks.append(_compositions(n, k))
            starts.append(starts[-1] + blocks[-1].shape[0])
        self.degrees = np.ascontiguousarray(np.vstack(blocks))
        self.grade_starts = np.array(starts)
        self.size = size
        assert self.degrees.shape[0] == size
        self.totals = self.degrees.sum(axis=1).astype(np.int64)
        self.log_weights = _LOG_FACTORIALS[self.degrees].sum(axis=1)
        self.weights = _FACTORIALS[self.degrees].prod(axis=1)
        self._lookup = None
        self._build_graph = None

    def _ensure_lookup(self):
        if self._lookup is None:
            self._lookup = {row.tobytes(): i for i, row in enumerate(self.degrees)}
        return self._lookup

    def rank(self, a) -> int:
        """Position of the index in graded-lex order; inverse of unrank."""
        flat = a.flat() if isinstance(a, MultiIndex) else np.asarray(a, dtype=np.uint8)
        key = np.ascontiguousarray(flat, dtype=np.uint8).tobytes()
        try:
            return self._ensure_lookup()[key]
        except KeyError:
            raise KeyError(f"index {list(flat)} not in set (P={self.P}, M={self.M}, d={self.d})")

    def unrank(self, r) -> MultiIndex:
        return MultiIndex(self.degrees[r].reshape(self.d, self.M))

    def ranks_of(self, rows) -> np.ndarray:
        """Vectorized rank lookup for a (k, d*M) array of flattened indices."""
        rows = np.ascontiguousarray(rows, dtype=np.uint8)
        lookup = self._ensure_lookup()
        return np.fromiter(
            (lookup[row.tobytes()] for row in rows), dtype=np.int64, count=rows.shape[0]
        )

    def build_graph(self):
        """Per-rank (parent, position, degree) links used for product tables.

        For every index with |a| >= 1 the parent is the index with its last
        nonzero flat position zeroed; the product over cells then satisfies
        H_a = H_parent * H_deg(x[position]).  Returned as arrays aligned with
        ranks 1..size-1.
        """
        if self._build_graph is None:
            deg = self.degrees[1:]
            nz = deg > 0
            last = deg.shape[1] - 1 - np.argmax(nz[:, ::-1], axis=1)
            degree = deg[np.arange(deg.shape[0]), last]
            parents_rows = deg.copy()
            parents_rows[np.arange(deg.shape[0]), last] = 0
            parent = self.ranks_of(parents_rows)
            self._build_graph = (parent, last.astype(np.int64), degree.astype(np.int64))
        return self._build_graph

    def pad_rows(self, m_new) -> np.ndarray:
        """Flattened degree rows after padding every coordinate block to m_new cells."""
        if m_new < self.M:
            raise ValueError(f"cannot pad to {m_new} cells, set has {self.M}")
        mat = self.degrees.reshape(self.size, self.d, self.M)
        out = np.zeros((self.size, self.d, m_new), dtype=np.uint8)
        out[:, :, : self.M] = mat
        return out.reshape(self.size, self.d * m_new)

    def cell_degree_sums(self, cell) -> np.ndarray:
        """sum_l a^l_cell for every index (1-based cell number)."""
        mat = self.degrees.reshape(self.size, self.d, self.M)
        return mat[:, :, cell - 1].sum(axis=1).astype(np.int64)

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"IndexSet(P={self.P}, M={self.M}, d={self.d}, size={self.size})"


@lru_cache(maxsize=128)
def _cached_index_set(P, M, d, size_cap):
    return IndexSet(P, M, d, size_cap)


def build_index_set(P, M, d=1, size_cap=DEFAULT_SIZE_CAP) -> IndexSet:
    """Complete graded-lex index set for (P, M, d); memoized, sets are immutable."""
    return _cached_index_set(int(P), int(M), int(d), int(size_cap))
