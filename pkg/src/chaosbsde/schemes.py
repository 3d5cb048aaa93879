"""Backward Euler recursion on chaos decompositions, plus the Picard baseline.

The Euler scheme walks i = m, ..., 1.  The terminal condition is projected
onto the step-m basis from its own Brownian family; at each step a fresh
family of N paths on the step-i refined grid provides both the per-sample
driver inputs (the closed-form conditional expectation and the conditional
time-average of Z, as coefficient transforms of the step-(i+1)
decomposition) and the Hermite products against which the driver term is
projected.  The transported part of the coefficients is exact, so with a
zero driver no Monte Carlo noise is added after the terminal projection.

The Picard baseline iterates on the whole interval: each iteration draws
fresh paths, replays the previous iterates on them to rebuild the running
driver integral, projects F^q = xi + integral onto the (P, M) chaos over
[0, T], and reads the next iterate off that decomposition.

Per-step batches are generated whole (at most one alive at a time) and
consumed in fixed-size chunks; partial reductions are combined in chunk
order, so results are bit-identical for any thread count.  BLAS pools are
pinned to one thread for the same reason.
"""

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .brownian import (
    ROLE_EVAL,
    ROLE_PICARD,
    ROLE_STEP,
    ROLE_TERMINAL,
    SeedSpec,
    sample_batch,
)
from .chaos import (
    DEFAULT_CHUNK,
    ChaosCoefficients,
    accumulate_f64,
    eval_Y,
    eval_Z,
    make_eval_point,
    product_table,
    products_from_table,
    project_terminal,
    run_chunked,
    y_coeff_vector,
    z_coeff_matrix,
    zbar_coeff_matrix,
)
from .grids import build_refined_grid, build_time_grid, locate_cell, union_times
from .multiindex import build_index_set
from .problems import Problem


@dataclass(frozen=True)
class EulerParams:
    """Numerical parameters theta = (P, M) plus grid, sample and seed data.

    precision selects the dtype of the per-chunk product pipeline; chaos
    coefficients are always accumulated and stored in double precision, and
    either setting is bit-deterministic for any thread count.
    """

    m: int
    M: int
    P: int
    N: int
    seed: int = 0
    chunk: int = DEFAULT_CHUNK
    threads: int = 1
    retain_coefficients: bool = False
    diagnostics: bool = False
    precision: str = "single"

    def __post_init__(self):
        if min(self.m, self.M, self.N) < 1 or self.P < 0:
            raise ValueError(f"invalid parameters {self}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"precision must be 'single' or 'double', got {self.precision!r}")

    @property
    def work_dtype(self):
        return np.float32 if self.precision == "single" else np.float64


@dataclass
class BsdeResult:
    scheme: str
    y0: float
    z0: np.ndarray
    steps: list = field(default_factory=list)
    coefficients: list | None = None


def _first_cell_ranks(index_set):
    """Ranks of the unit index on cell 1 of each coordinate (degree-one block)."""
    rows = np.zeros((index_set.d, index_set.d * index_set.M), dtype=np.uint8)
    for gamma in range(index_set.d):
        rows[gamma, gamma * index_set.M] = 1
    return index_set.ranks_of(rows)


def _read_z0(coeffs: ChaosCoefficients):
    """Z at t -> 0+: the first-cell degree-one coefficients over sqrt(delta_1)."""
    d = coeffs.index_set.d
    if coeffs.index_set.P == 0:
        return np.zeros(d)
    ranks = _first_cell_ranks(coeffs.index_set)
    return coeffs.values[ranks] / np.sqrt(coeffs.rg.widths[0])


def _terminal_coefficients(problem: Problem, params: EulerParams, rg_m, index_set):
    req = problem.required_times()
    points = union_times(rg_m.points, req)
    batch = sample_batch(points, problem.d, params.N, SeedSpec(params.seed, ROLE_TERMINAL))
    xi = problem.terminal.evaluate(req, batch.values(times=req))
    return project_terminal(xi, batch, rg_m, index_set, params.chunk, params.threads,
                            dtype=params.work_dtype)


def run_euler(problem: Problem, params: EulerParams) -> BsdeResult:
    """One backward Euler-chaos pass; returns Y_0, Z_0 and per-step diagnostics."""
    with threadpool_limits(limits=1):
        return _run_euler(problem, params)


def _run_euler(problem, params):
    tg = build_time_grid(problem.T, params.m)
    grids = [build_refined_grid(tg, params.M, i) for i in range(1, params.m + 1)]
    set_m = build_index_set(params.P, grids[-1].n_cells, problem.d)
    coeffs = _terminal_coefficients(problem, params, grids[-1], set_m)

    driver = problem.driver
    d = problem.d
    steps = []
    retained = [] if params.retain_coefficients else None

    for i in range(params.m, 0, -1):
        rg = grids[i - 1]
        t_i = tg.points[i]
        delta_i = tg.deltas[i - 1]
        if i == params.m:
            sub, c_y = coeffs.index_set, coeffs.values
            cz = None
        else:
            sub, c_y = y_coeff_vector(coeffs, t_i)
            if sub.M != rg.n_cells:
                raise RuntimeError(f"grid nesting broken at step {i}")
            cz = zbar_coeff_matrix(coeffs, t_i, tg.deltas[i])[1] if driver.uses_z else None

        batch = sample_batch(rg.points, d, params.N, SeedSpec(params.seed, ROLE_STEP, i))
        G = batch.G
        dtype = params.work_dtype
        c_y_w = c_y.astype(dtype)
        cz_w = cz.T.astype(dtype) if cz is not None else None

        def worker(lo, hi):
            table = product_table(G[lo:hi].reshape(hi - lo, -1), params.P, dtype)
            H = products_from_table(sub, table)
            y = c_y_w @ H
            z = (cz_w @ H).T if cz_w is not None else np.zeros((hi - lo, d), dtype=dtype)
            fv = np.asarray(driver(t_i, y, z), dtype=dtype)
            bad = ~np.isfinite(fv)
            if bad.any():
                n_bad = lo + int(np.flatnonzero(bad)[0])
                raise RuntimeError(f"driver returned a non-finite value at step {i}, sample {n_bad}")
            s1 = H @ fv
            if params.diagnostics:
                return s1, (H * H) @ (fv * fv)
            return (s1,)

        parts = accumulate_f64(run_chunked(params.N, worker, params.chunk, params.threads))
        acc = parts[0]
        values = c_y + delta_i * sub.weights * (acc / params.N)
        if not np.isfinite(values).all():
            raise RuntimeError(f"non-finite chaos coefficient at step {i}")
        coeffs = ChaosCoefficients(sub, values, rg)

        record = {"step": i, "t": float(t_i), "coeff_norm": float(np.linalg.norm(values))}
        if params.diagnostics:
            s2 = parts[1]
            var = np.maximum(s2 - acc * acc / params.N, 0.0) / max(params.N - 1, 1)
            record["V"] = float(np.dot(sub.weights, var))
        steps.append(record)
        if retained is not None:
            retained.append(coeffs)
        del batch, G

    if retained is not None:
        retained.reverse()
    return BsdeResult("euler", float(coeffs.values[0]), _read_z0(coeffs), steps, retained)


@dataclass(frozen=True)
class _NodeEval:
    """Per-node data reused by the Picard sweeps: cell index and lattice flag."""

    k: int
    t: float
    r: int
    on_lattice: bool


def run_picard(problem: Problem, params: EulerParams, Q: int) -> BsdeResult:
    """Picard-chaos iteration with Q fixed-point steps and fresh paths per step."""
    if Q < 1:
        raise ValueError("need at least one Picard iteration")
    with threadpool_limits(limits=1):
        return _run_picard(problem, params, Q)


def _run_picard(problem, params, Q):
    tg = build_time_grid(problem.T, params.m)
    rg = build_refined_grid(tg, params.M, params.m)
    full = build_index_set(params.P, rg.n_cells, problem.d)
    d = problem.d
    driver = problem.driver
    deltas = tg.deltas
    req = problem.required_times()
    points = union_times(rg.points, tg.points, req)

    # f is integrated with the left-point rule, so iterates are evaluated at
    # the nodes t_0, ..., t_{m-1} only; t_m enters through xi.  Node 0 needs
    # no products: conditioning at t = 0 keeps only the constant coefficient.
    nodes = []
    for k in range(1, params.m):
        t_k = tg.points[k]
        r = locate_cell(rg, t_k)
        nodes.append(_NodeEval(k, float(t_k), r, bool(t_k == rg.points[r])))
    sub_sets = [build_index_set(params.P, node.r, d) for node in nodes]

    # Flat positions of each node's sub-basis inside the shared value table:
    # lattice cells first, then one extra column block per off-lattice node.
    n_lat = d * rg.n_cells
    pos_maps, extra_of = [], {}
    for node, sub in zip(nodes, sub_sets):
        pm = (np.arange(d)[:, None] * rg.n_cells + np.arange(node.r)[None, :]).reshape(-1)
        if not node.on_lattice:
            extra_of[node.k] = len(extra_of)
            pm = pm.reshape(d, node.r)
            pm[:, -1] = n_lat + extra_of[node.k] * d + np.arange(d)
            pm = pm.reshape(-1)
        pos_maps.append(pm)

    history = []
    steps = []

    for q in range(Q):
        batch = sample_batch(points, d, params.N, SeedSpec(params.seed, ROLE_PICARD, q))
        G = batch.standardized_on(rg)
        flatG = G.reshape(params.N, n_lat)
        B_nodes = batch.values(times=tg.points[: params.m])
        B_lattice = batch.values(times=rg.points)
        xi = np.asarray(problem.terminal.evaluate(req, batch.values(times=req)), dtype=float)
        if not np.isfinite(xi).all():
            raise RuntimeError("terminal sample is not finite in Picard iteration")

        # Stack the coefficient transforms of all previous iterates so each
        # node costs one matrix product per chunk and sweep.
        dtype = params.work_dtype
        cy_stacks, cz_stacks = [], []
        t0_y = np.empty(q, dtype=dtype)
        t0_z = np.empty((q, d), dtype=dtype)
        for l, c_prev in enumerate(history):
            prev = ChaosCoefficients(full, c_prev, rg)
            t0_y[l] = c_prev[0]
            t0_z[l] = z_coeff_matrix(prev, 0.0)[1][0]
        for node, sub in zip(nodes, sub_sets):
            cys = np.empty((sub.size, q))
            czs = np.empty((sub.size, q * d)) if driver.uses_z else None
            for l, c_prev in enumerate(history):
                prev = ChaosCoefficients(full, c_prev, rg)
                cys[:, l] = y_coeff_vector(prev, node.t)[1]
                if czs is not None:
                    czs[:, l * d : (l + 1) * d] = z_coeff_matrix(prev, node.t)[1]
            cy_stacks.append(np.ascontiguousarray(cys.T, dtype=dtype))
            cz_stacks.append(np.ascontiguousarray(czs.T, dtype=dtype) if czs is not None else None)

        xi_w = xi.astype(dtype)

        def worker(lo, hi):
            n = hi - lo
            cols = [flatG[lo:hi]]
            for node in nodes:
                if not node.on_lattice:
                    span = node.t - rg.points[node.r - 1]
                    part = B_nodes[lo:hi, :, node.k] - B_lattice[lo:hi, :, node.r - 1]
                    cols.append(part / np.sqrt(span))
            table = product_table(np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0],
                                  params.P, dtype)
            Hs = [products_from_table(sub, table, pm) for sub, pm in zip(sub_sets, pos_maps)]
            y_ce = [cys @ H for H, cys in zip(Hs, cy_stacks)]
            if driver.uses_z:
                z_ce = [(czs @ H).reshape(q, d, n) for H, czs in zip(Hs, cz_stacks)]
            zeros_z = np.zeros((n, d), dtype=dtype)
            t_grid = tg.points
            f_cur = [np.asarray(driver(t_grid[k], np.zeros(n, dtype=dtype), zeros_z), dtype=dtype)
                     for k in range(params.m)]
            for l in range(1, q + 1):
                f_prev, f_cur = f_cur, []
                y0 = np.full(n, t0_y[l - 1], dtype=dtype)
                z0 = np.broadcast_to(t0_z[l - 1], (n, d))
                f_cur.append(np.asarray(driver(0.0, y0, z0), dtype=dtype))
                integral = deltas[0] * f_prev[0]
                for j, node in enumerate(nodes):
                    y = y_ce[j][l - 1] - integral
                    z = z_ce[j][l - 1].T if driver.uses_z else zeros_z
                    f_cur.append(np.asarray(driver(node.t, y, z), dtype=dtype))
                    integral = integral + deltas[node.k] * f_prev[node.k]
            F = xi_w[lo:hi] + sum(deltas[k] * f_cur[k] for k in range(params.m)).astype(dtype)
            if not np.isfinite(F).all():
                raise RuntimeError(f"non-finite Picard functional in iteration {q}")
            return (products_from_table(full, table) @ F,)

        parts = run_chunked(params.N, worker, params.chunk, params.threads)
        acc = accumulate_f64(parts)[0]
        c_q = full.weights * (acc / params.N)
        if not np.isfinite(c_q).all():
            raise RuntimeError(f"non-finite chaos coefficient in Picard iteration {q}")
        history.append(c_q)
        steps.append({"iteration": q, "coeff_norm": float(np.linalg.norm(c_q))})
        del batch, G, B_nodes, B_lattice

    final = ChaosCoefficients(full, history[-1], rg)
    retained = [final] if params.retain_coefficients else None
    return BsdeResult("picard", float(final.values[0]), _read_z0(final), steps, retained)


def simulate_solution_paths(problem: Problem, params: EulerParams, coefficients, K,
                            seed=None, hedge=False):
    """Evaluate (Y, Z) along K fresh paths at every coarse-grid node.

    coefficients is the per-step list retained by run_euler (a single
    decomposition, as produced by run_picard, is also accepted and then used
    on every interval).  Returns a dict of arrays: times (m+1,), Y (K, m+1),
    Z (K, m+1, d) and optionally hedge ratios H of the same shape as Z.
    """
    if not coefficients:
        raise ValueError("no retained coefficients; rerun with retain_coefficients=True")
    if hedge and problem.model is None:
        raise ValueError("hedge ratios need a market model")
    tg = build_time_grid(problem.T, params.m)
    rg_m = build_refined_grid(tg, params.M, params.m)
    points = union_times(rg_m.points, tg.points)
    spec = SeedSpec(params.seed if seed is None else seed, ROLE_EVAL)
    batch = sample_batch(points, problem.d, K, spec)

    m = params.m
    Y = np.empty((K, m + 1))
    Z = np.empty((K, m + 1, problem.d))
    for k in range(m + 1):
        step = min(k + 1, m)
        coeffs = coefficients[step - 1] if len(coefficients) > 1 else coefficients[0]
        pt = make_eval_point(coeffs.rg, batch, tg.points[k])
        Y[:, k] = eval_Y(coeffs, pt)
        Z[:, k, :] = eval_Z(coeffs, pt)

    out = {"times": tg.points.copy(), "Y": Y, "Z": Z}
    if hedge:
        S = problem.model.gbm_path(tg.points, batch.values(times=tg.points))
        sig_T = problem.model.vol_matrix.T
        H = np.empty_like(Z)
        for k in range(m + 1):
            H[:, k, :] = np.linalg.solve(sig_T[None] * S[:, None, :, k], Z[:, k, :, None])[..., 0]
        out["hedge"] = H
    return out
