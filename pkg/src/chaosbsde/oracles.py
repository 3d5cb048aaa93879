"""Independent validation baselines.

Everything here is deliberately decoupled from the chaos machinery: plain
closed forms, direct Monte Carlo of discounted payoffs under the
risk-neutral drift, bump-and-revalue deltas with common random numbers, and
brute-force nested conditional expectations.  The only shared code is the
Brownian sampler, which the oracles use under their own stream role.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .brownian import ROLE_ORACLE, SeedSpec, sample_batch
from .grids import union_times
from .problems import Problem, risk_neutral


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    n: int


def _mean_estimate(samples) -> OracleEstimate:
    n = samples.size
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return OracleEstimate(mean, stderr, n)


def bs_call_price(s0, strike, r, sigma, T):
    """Black-Scholes European call (scipy's ndtr, |error| <= 1e-15 in CDF)."""
    if sigma * np.sqrt(T) < 1e-12:
        return max(s0 - strike * np.exp(-r * T), 0.0)
    d1 = (np.log(s0 / strike) + (r + 0.5 * sigma**2) * T) / (sigma * np.sqrt(T))
    d2 = d1 - sigma * np.sqrt(T)
    return s0 * ndtr(d1) - strike * np.exp(-r * T) * ndtr(d2)


def bs_call_delta(s0, strike, r, sigma, T):
    d1 = (np.log(s0 / strike) + (r + 0.5 * sigma**2) * T) / (sigma * np.sqrt(T))
    return ndtr(d1)


def _terminal_samples(problem: Problem, N, seed, index=0):
    times = union_times([0.0], problem.required_times(), [problem.T])
    batch = sample_batch(times, problem.d, N, SeedSpec(seed, ROLE_ORACLE, index))
    return batch.values(times=problem.required_times())


def mc_price(problem: Problem, N, seed) -> OracleEstimate:
    """Discounted risk-neutral expectation of the payoff, by direct simulation."""
    if problem.model is None:
        raise ValueError(f"problem '{problem.name}' has no market model to price under")
    model = risk_neutral(problem.model)
    B = _terminal_samples(problem, N, seed)
    payoff = _payoff_under(problem, model, B)
    disc = np.exp(-model.r * problem.T)
    return _mean_estimate(disc * payoff)


def _payoff_under(problem: Problem, model, B):
    """Re-evaluate the terminal payoff with prices generated under another model."""
    if problem.payoff is None:
        raise ValueError(f"problem '{problem.name}' has no market payoff to price")
    times = problem.required_times()
    return problem.payoff(model, times, model.gbm_path(times, B))


def mc_delta(problem: Problem, N, seed, bump=0.01) -> OracleEstimate:
    """Z_0 estimate: central differences in S_0 with common random numbers.

    Returns one OracleEstimate per coordinate (a list), already mapped to
    Z_0 = Sigma^T diag(S_0) grad.
    """
    if problem.model is None:
        raise ValueError(f"problem '{problem.name}' has no market model")
    model = risk_neutral(problem.model)
    B = _terminal_samples(problem, N, seed, index=1)
    disc = np.exp(-model.r * problem.T)
    d = problem.d
    grad_samples = []
    for j in range(d):
        h = bump * model.s0[j]
        s_up = model.s0.copy()
        s_up[j] += h
        s_dn = model.s0.copy()
        s_dn[j] -= h
        pay_up = _payoff_under(problem, replace(model, s0=s_up), B)
        pay_dn = _payoff_under(problem, replace(model, s0=s_dn), B)
        grad_samples.append(disc * (pay_up - pay_dn) / (2 * h))
    grad_samples = np.stack(grad_samples, axis=1)
    sig_scale = problem.model.vol_matrix.T @ np.diag(problem.model.s0)
    z_samples = grad_samples @ sig_scale.T
    return [
        _mean_estimate(z_samples[:, gamma]) for gamma in range(d)
    ]


def nested_ce(functional, times, past_values, t, d, inner_n, seed, index=0) -> OracleEstimate:
    """Brute-force E_t of functional(times, B) given the past of one outer path.

    past_values holds B at all grid times <= t (shape (d, k)); the future
    increments are resampled inner_n times and the functional is averaged.
    """
    times = np.asarray(times, dtype=float)
    k = int(np.searchsorted(times, t, side="right"))
    if past_values.shape != (d, k):
        raise ValueError(f"expected past values of shape ({d}, {k})")
    future = times[k:]
    full = np.empty((inner_n, d, times.size))
    full[:, :, :k] = past_values
    if future.size:
        pts = np.concatenate([[0.0], future - t])
        inner = sample_batch(pts, d, inner_n, SeedSpec(seed, ROLE_ORACLE, 100 + index))
        full[:, :, k:] = past_values[:, -1][None, :, None] + inner.values()[:, :, 1:]
    vals = np.asarray(functional(times, full), dtype=float)
    return _mean_estimate(vals)
