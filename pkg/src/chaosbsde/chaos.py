"""Truncated chaos decompositions: evaluation, projection, propagation.

A decomposition at step i is a dense coefficient vector c over the index
set (P, M(i), d); it represents sum_a c[a] * prod_{l,j} H_{a^l_j}(G_{l,j})
with G the standardized increments of the step-i basis (the a! factor of
the projection definition is already folded into c, so evaluation is a
plain dot product against the Hermite products).

Conditioning at a time t inside cell r replaces the cell-r increment by the
normalized partial increment and scales each index by
((t - s_{r-1}) / delta_r) ** (k/2), k the cell-r degree; indices supported
beyond cell r drop out.  All three evaluation maps (Y, Z and the
conditional time-average Z-bar) therefore reduce to coefficient transforms
against the same product table, which is also how the solver consumes them.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .brownian import BrownianBatch
from .grids import RefinedGrid, locate_cell
from .multiindex import IndexSet, build_index_set

DEFAULT_CHUNK = 1 << 14


@dataclass
class ChaosCoefficients:
    """Dense coefficients of one step's truncated chaos decomposition."""

    index_set: IndexSet
    values: np.ndarray
    rg: RefinedGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.index_set.size,):
            raise ValueError(
                f"coefficient vector has length {vals.shape}, set size {self.index_set.size}"
            )
        if self.index_set.M != self.rg.n_cells:
            raise ValueError("index set cell count does not match the refined grid")
        self.values = vals

    @property
    def step(self):
        return self.rg.i

    def to_records(self):
        """(rank, flattened index, value) rows for debugging dumps."""
        for rank in range(self.index_set.size):
            yield rank, self.index_set.degrees[rank].tolist(), float(self.values[rank])


def dump_coefficients(coeffs: ChaosCoefficients, path):
    """Write the coefficient table to CSV or JSON (by file suffix)."""
    records = list(coeffs.to_records())
    path = str(path)
    if path.endswith(".json"):
        import json

        payload = {
            "step": coeffs.step,
            "P": coeffs.index_set.P,
            "M": coeffs.index_set.M,
            "d": coeffs.index_set.d,
            "coefficients": [
                {"rank": r, "index": idx, "value": v} for r, idx, v in records
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
    else:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "index", "value"])
            for r, idx, v in records:
                writer.writerow([r, " ".join(map(str, idx)), repr(v)])
    return path


@dataclass
class EvalPoint:
    """Increment data needed to condition a step decomposition at time t.

    X has shape (..., d, r): standardized increments of cells 1..r-1
    followed by the normalized partial increment of cell r (zero when the
    partial time span is zero, which only happens at t = 0).
    """

    t: float
    r: int
    X: np.ndarray


try:
    from numba import njit

    @njit(cache=True, nogil=True)
    def _product_kernel(H, table2d, parent, flat_idx):
        n = H.shape[1]
        for r in range(1, H.shape[0]):
            hp = H[parent[r - 1]]
            tt = table2d[flat_idx[r - 1]]
            hr = H[r]
            for j in range(n):
                hr[j] = hp[j] * tt[j]

except ImportError:  # pragma: no cover - numba is expected but not required
    _product_kernel = None


def product_table(columns, P, dtype=np.float64) -> np.ndarray:
    """Transposed Hermite value table over raw increment columns.

    columns has shape (n, n_pos); the result (n_pos, P + 1, n) holds
    H_k(columns[:, p]) as contiguous rows, the layout the product kernel
    gathers from.
    """
    x = np.asarray(columns).T.astype(dtype)
    n_pos, n = x.shape
    out = np.empty((n_pos, P + 1, n), dtype=dtype)
    out[:, 0] = 1.0
    if P >= 1:
        out[:, 1] = x
    for k in range(1, P):
        np.subtract(x * out[:, k], out[:, k - 1], out=out[:, k + 1])
        out[:, k + 1] /= dtype(k + 1)
    return out


def products_from_table(index_set: IndexSet, table, pos_map=None) -> np.ndarray:
    """Hermite products H_a for every index, shape (size, n).

    table is a product_table over at least the positions of this set;
    pos_map (optional) sends the set's flat positions into table rows.
    Rows are built in rank order from the parent links (parents always rank
    lower), one fused row-gather and multiply per index.
    """
    n = table.shape[2]
    H = np.empty((index_set.size, n), dtype=table.dtype)
    H[0] = 1.0
    if index_set.size == 1:
        return H
    parent, pos, deg = index_set.build_graph()
    if pos_map is not None:
        pos = np.asarray(pos_map)[pos]
    flat = table.reshape(-1, n)
    flat_idx = pos * table.shape[1] + deg
    if _product_kernel is not None:
        _product_kernel(H, flat, parent, flat_idx)
        return H
    starts = index_set.grade_starts
    for k in range(1, index_set.P + 1):
        g0, g1 = starts[k], starts[k + 1]
        block = slice(g0 - 1, g1 - 1)
        np.multiply(H[parent[block]], flat[flat_idx[block]], out=H[g0:g1])
    return H


def basis_product_matrix(index_set: IndexSet, X) -> np.ndarray:
    """Hermite products H_a(X) for every index; shape (n, size).

    X holds per-sample increment vectors, shape (n, d, M).
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    table = product_table(X.reshape(n, index_set.d * index_set.M), index_set.P)
    return products_from_table(index_set, table).T


def eval_basis_products(index_set: IndexSet, batch: BrownianBatch, n) -> np.ndarray:
    """H_a(omega_n) for every index of the set, from one sample of a batch."""
    return basis_product_matrix(index_set, batch.G[n : n + 1])[0]


def run_chunked(n, worker, chunk=DEFAULT_CHUNK, threads=1):
    """Apply worker(lo, hi) over fixed chunks and return partials in chunk order.

    The chunk layout never depends on the thread count, and partials are
    combined by the caller in chunk order, so results are bit-identical for
    any threads value.
    """
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(bounds) <= 1:
        return [worker(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: worker(*b), bounds))


def project_terminal(
    xi, batch: BrownianBatch, rg: RefinedGrid, index_set: IndexSet,
    chunk=DEFAULT_CHUNK, threads=1, dtype=np.float64,
) -> ChaosCoefficients:
    """Monte Carlo projection c[a] = a! * mean(xi * H_a) over the batch."""
    xi = np.asarray(xi, dtype=float)
    bad = ~np.isfinite(xi)
    if bad.any():
        raise ValueError(f"terminal sample {int(np.flatnonzero(bad)[0])} is not finite")
    G = batch.standardized_on(rg)
    N = xi.size
    xi_w = xi.astype(dtype)

    def worker(lo, hi):
        table = product_table(G[lo:hi].reshape(hi - lo, -1), index_set.P, dtype)
        return (products_from_table(index_set, table) @ xi_w[lo:hi],)

    acc = accumulate_f64(run_chunked(N, worker, chunk, threads))[0]
    return ChaosCoefficients(index_set, index_set.weights * (acc / N), rg)


def accumulate_f64(parts):
    """Sum per-chunk partial tuples into float64 arrays, in chunk order."""
    out = [np.zeros(p.shape) for p in parts[0]]
    for part in parts:
        for acc, p in zip(out, part):
            acc += p
    return out


@lru_cache(maxsize=512)
def _pad_ranks(P, d, m_sub, m_full):
    """Ranks, inside the (P, m_full, d) set, of every (P, m_sub, d) index padded with zeros."""
    sub = build_index_set(P, m_sub, d)
    full = build_index_set(P, m_full, d)
    return full.ranks_of(sub.pad_rows(m_full))


def _locate(coeffs: ChaosCoefficients, t):
    """Cell index and clamped scaling ratio for conditioning at t."""
    rg = coeffs.rg
    if t == rg.points[0]:
        return 1, 0.0
    r = locate_cell(rg, t)
    ratio = (t - rg.points[r - 1]) / rg.widths[r - 1]
    return r, min(max(ratio, 0.0), 1.0)


def y_coeff_vector(coeffs: ChaosCoefficients, t):
    """Coefficients of E_t(decomposition) in the r-cell basis at time t."""
    full = coeffs.index_set
    r, ratio = _locate(coeffs, t)
    sub = build_index_set(full.P, r, full.d)
    ranks = _pad_ranks(full.P, full.d, r, full.M)
    scale = np.power(ratio, 0.5 * sub.cell_degree_sums(r))
    return sub, coeffs.values[ranks] * scale


def _rows_plus_unit(rows, m_cells, cell, coord):
    bumped = rows.copy()
    bumped[:, coord * m_cells + (cell - 1)] += 1
    return bumped


def z_coeff_matrix(coeffs: ChaosCoefficients, t):
    """Per-coordinate coefficient vectors of the martingale integrand at t.

    Column gamma holds, against the r-cell products, the degree-shifted sum
    of Proposition-Z type: coefficient of index b is
    c[b + e_{r,gamma}] * ratio**(k_r(b)/2) / sqrt(delta_r).
    """
    full = coeffs.index_set
    r, ratio = _locate(coeffs, t)
    sub = build_index_set(full.P, r, full.d)
    inv_sqrt = 1.0 / np.sqrt(coeffs.rg.widths[r - 1])
    mask = sub.totals <= full.P - 1
    scale = np.power(ratio, 0.5 * sub.cell_degree_sums(r)[mask]) * inv_sqrt
    mat = np.zeros((sub.size, full.d))
    for gamma in range(full.d):
        rows = _rows_plus_unit(sub.degrees[mask], sub.M, r, gamma)
        padded = _pad_block(rows, sub, full.M)
        mat[mask, gamma] = coeffs.values[full.ranks_of(padded)] * scale
    return sub, mat


def _pad_block(rows, sub: IndexSet, m_full):
    if sub.M == m_full:
        return rows
    k = rows.shape[0]
    out = np.zeros((k, sub.d, m_full), dtype=np.uint8)
    out[:, :, : sub.M] = rows.reshape(k, sub.d, sub.M)
    return out.reshape(k, sub.d * m_full)


def zbar_coeff_matrix(coeffs: ChaosCoefficients, t, delta):
    """Coefficient vectors of the conditional time-average of Z over [t, t + delta].

    Two blocks: the degree-shifted remainder of the cell containing t,
    weighted by C1 = (s_u - t)/sqrt(delta_u), plus one sqrt(delta_r)-weighted
    unit-degree block per later cell r; both carry C2**(k_u/2) with
    C2 = (t - s_{u-1})/delta_u.  C1 vanishes when t closes its cell.
    """
    full = coeffs.index_set
    rg = coeffs.rg
    u, C2 = _locate(coeffs, t)
    delta_u = rg.widths[u - 1]
    C1 = (rg.points[u] - t) / np.sqrt(delta_u)
    sub = build_index_set(full.P, u, full.d)
    mask = sub.totals <= full.P - 1
    rows = sub.degrees[mask]
    scale = np.power(C2, 0.5 * sub.cell_degree_sums(u)[mask])
    mat = np.zeros((sub.size, full.d))
    for gamma in range(full.d):
        shifted = coeffs.values[full.ranks_of(_pad_block(_rows_plus_unit(rows, sub.M, u, gamma), sub, full.M))]
        tail = np.zeros(rows.shape[0])
        padded = _pad_block(rows, sub, full.M)
        for cell in range(u + 1, full.M + 1):
            ranks = full.ranks_of(_rows_plus_unit(padded, full.M, cell, gamma))
            tail += np.sqrt(rg.widths[cell - 1]) * coeffs.values[ranks]
        mat[mask, gamma] = scale * (C1 * shifted + tail) / delta
    return sub, mat


def make_eval_point(rg: RefinedGrid, batch: BrownianBatch, t) -> EvalPoint:
    """Assemble the increment data for conditioning at t from sampled paths."""
    G = batch.standardized_on(rg)
    if t == rg.points[0]:
        return EvalPoint(t, 1, np.zeros(G.shape[:2] + (1,)))
    r = locate_cell(rg, t)
    if t == rg.points[r]:
        return EvalPoint(t, r, G[:, :, :r])
    s_prev = rg.points[r - 1]
    vals = batch.values(times=[s_prev, t])
    partial = (vals[:, :, 1] - vals[:, :, 0]) / np.sqrt(t - s_prev)
    return EvalPoint(t, r, np.concatenate([G[:, :, : r - 1], partial[:, :, None]], axis=2))


def _products_at(coeffs, pt: EvalPoint, sub: IndexSet):
    X = pt.X if pt.X.ndim == 3 else pt.X[None]
    if X.shape[2] != sub.M:
        raise ValueError(f"eval point has {X.shape[2]} cells, expected {sub.M}")
    H = basis_product_matrix(sub, X)
    return H, pt.X.ndim == 3


def eval_Y(coeffs: ChaosCoefficients, pt: EvalPoint):
    """Conditional expectation of the decomposition at pt.t, per sample."""
    sub, vec = y_coeff_vector(coeffs, pt.t)
    H, batched = _products_at(coeffs, pt, sub)
    out = H @ vec
    return out if batched else float(out[0])


def eval_Z(coeffs: ChaosCoefficients, pt: EvalPoint):
    """Martingale integrand at pt.t, per sample; shape (..., d)."""
    sub, mat = z_coeff_matrix(coeffs, pt.t)
    H, batched = _products_at(coeffs, pt, sub)
    out = H @ mat
    return out if batched else out[0]


def eval_Zbar(coeffs: ChaosCoefficients, pt: EvalPoint, delta):
    """Conditional time-average of Z over [pt.t, pt.t + delta], per sample."""
    sub, mat = zbar_coeff_matrix(coeffs, pt.t, delta)
    H, batched = _products_at(coeffs, pt, sub)
    out = H @ mat
    return out if batched else out[0]


def propagate_Y_coefficients(coeffs_next: ChaosCoefficients, rg: RefinedGrid) -> ChaosCoefficients:
    """Closed-form coefficients, on the step-i basis, of E_{t_i} of the step-(i+1) decomposition.

    Restriction to indices supported on the first M(i) cells, with the last
    shared cell scaled by ((t_i - s_{M(i)-1}) / delta_{M(i)})**(k/2).
    """
    sub, vec = y_coeff_vector(coeffs_next, rg.t_end)
    if sub.M != rg.n_cells:
        raise ValueError("target grid does not nest inside the source grid")
    return ChaosCoefficients(sub, vec, rg)


def estimate_V(f_values, batch: BrownianBatch, rg: RefinedGrid, index_set: IndexSet,
               chunk=DEFAULT_CHUNK, threads=1):
    """Variance diagnostic sum_a a! * Var(F * H_a) over the sampled products."""
    f_values = np.asarray(f_values, dtype=float)
    N = f_values.size
    if N < 2:
        raise ValueError("variance diagnostic needs at least two samples")
    G = batch.standardized_on(rg)

    def worker(lo, hi):
        table = product_table(G[lo:hi].reshape(hi - lo, -1), index_set.P)
        fh = products_from_table(index_set, table) * f_values[lo:hi]
        return fh.sum(axis=1), (fh * fh).sum(axis=1)

    parts = run_chunked(N, worker, chunk, threads)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    var = np.maximum(s2 - s1 * s1 / N, 0.0) / (N - 1)
    return float(np.dot(index_set.weights, var))
