"""Problem catalog: drivers, terminal conditions and market models.

A problem bundles a deterministic driver f(t, y, z), a terminal condition
evaluated on sampled Brownian paths, and (for pricing problems) the
Black-Scholes market the payoff lives in.  Terminal conditions declare the
monitoring times they need; the solver samples Brownian values on the union
of the basis grid and those times, so payoffs are functionals of the actual
sampled path, never of an interpolation.
"""

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Driver:
    """Deterministic generator f(t, y, z); y is (n,), z is (n, d)."""

    fn: callable
    uses_z: bool = True
    lipschitz: float | None = None
    bounded: bool = False

    def __call__(self, t, y, z):
        return self.fn(t, y, z)


class TerminalCondition:
    """Payoff as a functional of Brownian values at its monitoring times."""

    def __init__(self, fn, times, name=""):
        self._fn = fn
        self._times = np.atleast_1d(np.asarray(times, dtype=float))
        self.name = name

    def required_times(self):
        return self._times

    def evaluate(self, times, B):
        """Payoff per sample; B has shape (n, d, len(times)).

        times must contain every monitoring time (extra columns are ignored).
        """
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(times, self._times)
        ok = (idx < times.size) & (times[np.minimum(idx, times.size - 1)] == self._times)
        if not ok.all():
            raise ValueError(f"missing monitoring times {self._times[~ok].tolist()}")
        return self._fn(self._times, B[:, :, idx])


@dataclass(frozen=True)
class MarketModel:
    """Multi-asset Black-Scholes data with correlated Brownian drivers.

    The volatility matrix is Sigma = diag(sigma) @ L with C = L L^T the
    Cholesky factor of the correlation matrix, so diag(Sigma Sigma^T)
    equals sigma**2 componentwise.
    """

    s0: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    r: float
    R: float | None = None
    strike: float | None = None
    barrier: float | None = None

    def __post_init__(self):
        for name in ("s0", "mu", "sigma", "corr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def d(self):
        return self.s0.size

    @property
    def vol_matrix(self):
        L = np.linalg.cholesky(self.corr)
        return self.sigma[:, None] * L

    @property
    def theta(self):
        """Market price of risk, the solution of Sigma theta = mu - r 1."""
        return np.linalg.solve(self.vol_matrix, self.mu - self.r)

    def gbm_path(self, times, B):
        """Exact log-normal prices at the given times; B is (n, d, k)."""
        times = np.asarray(times, dtype=float)
        sig = self.vol_matrix
        drift = (self.mu - 0.5 * self.sigma**2)[:, None] * times
        noise = np.einsum("ab,nbk->nak", sig, B)
        return self.s0[:, None] * np.exp(drift + noise)


def barrier_call_payoff(model: MarketModel, times, S):
    """(S_T - K)+ knocked out if any monitored price falls below the barrier."""
    alive = (S.min(axis=1) >= model.barrier).all(axis=1)
    return np.maximum(S[:, :, -1].max(axis=1) - model.strike, 0.0) * alive


def max_call_payoff(model: MarketModel, S_T):
    """(max_j S_T^j - K)+."""
    return np.maximum(S_T.max(axis=1) - model.strike, 0.0)


def running_max_abs_payoff(times, B):
    """max over monitoring times of |B_t| (one-dimensional driver)."""
    return np.abs(B[:, 0, :]).max(axis=1)


def driver_linear(r):
    """f(t, y, z) = -r y, the risk-neutral pricing generator."""
    return Driver(lambda t, y, z: -r * y, uses_z=False, lipschitz=abs(r))


def driver_cos():
    """f(t, y, z) = cos(y + z) with scalar z (one-dimensional problems)."""
    return Driver(lambda t, y, z: np.cos(y + z[:, 0]), lipschitz=1.0, bounded=True)


def driver_borrowing(model: MarketModel):
    """Pricing generator under a borrowing rate R above the lending rate r."""
    theta = model.theta
    ones_sig_inv = np.linalg.solve(model.vol_matrix.T, np.ones(model.d))
    spread = model.R - model.r

    def fn(t, y, z):
        shortfall = y - z @ ones_sig_inv
        return -model.r * y - z @ theta + spread * np.maximum(-shortfall, 0.0)

    return Driver(fn, lipschitz=abs(model.r) + float(np.abs(theta).sum()) + spread)


@dataclass(frozen=True)
class Problem:
    name: str
    d: int
    T: float
    driver: Driver
    terminal: TerminalCondition
    model: MarketModel | None = None
    # market payoff as a function of (model, monitoring times, price table);
    # lets the oracles re-price under a bumped or risk-neutral model
    payoff: callable = None
    params: dict = field(default_factory=dict)

    def required_times(self):
        return self.terminal.required_times()


def constant_problem(c=1.0, T=1.0):
    """f = 0 and a constant terminal value; Y_0 = c exactly."""
    term = TerminalCondition(lambda times, B: np.full(B.shape[0], c), [T], name="constant")
    return Problem("constant", 1, T, Driver(lambda t, y, z: np.zeros_like(y), uses_z=False), term,
                   params={"c": c})


def bt_squared_problem(T=1.0):
    """f = 0, terminal B_T**2; exact chaos order two, Y_0 = T and Z_0 = 0."""
    term = TerminalCondition(lambda times, B: B[:, 0, -1] ** 2, [T], name="bt_squared")
    return Problem("bt_squared", 1, T, Driver(lambda t, y, z: np.zeros_like(y), uses_z=False), term)


def brownian_terminal_problem(T=1.0):
    """f = 0, terminal B_T; the martingale-representation sanity problem (Z = 1)."""
    term = TerminalCondition(lambda times, B: B[:, 0, -1], [T], name="bt")
    return Problem("bt", 1, T, Driver(lambda t, y, z: np.zeros_like(y), uses_z=False), term)


def _terminal_from_payoff(model, payoff, monitoring, name):
    def fn(times, B):
        return payoff(model, times, model.gbm_path(times, B))

    return TerminalCondition(fn, monitoring, name=name)


def _vanilla_payoff(model, times, S):
    return np.maximum(S[:, :, -1].max(axis=1) - model.strike, 0.0)


def vanilla_call_problem(s0=1.0, strike=0.9, r=0.01, sigma=0.2, T=1.0):
    """Risk-neutral vanilla call with the linear generator -r y."""
    model = MarketModel(
        s0=[s0], mu=[r], sigma=[sigma], corr=np.eye(1), r=r, strike=strike
    )
    term = _terminal_from_payoff(model, _vanilla_payoff, [T], "vanilla_call")
    return Problem("vanilla_call", 1, T, driver_linear(r), term, model=model,
                   payoff=_vanilla_payoff)


def example1_problem(T=1.0):
    """Discrete down-and-out call in a 1-d risk-neutral Black-Scholes market."""
    model = MarketModel(
        s0=[1.0], mu=[0.01], sigma=[0.2], corr=np.eye(1), r=0.01,
        strike=0.9, barrier=0.85,
    )
    monitoring = T * (np.arange(11) / 10)
    term = _terminal_from_payoff(model, barrier_call_payoff, monitoring, "barrier_call")
    return Problem("example1", 1, T, driver_linear(model.r), term, model=model,
                   payoff=barrier_call_payoff)


def example2_problem(T=1.0):
    """Running max of |B| at eleven monitoring dates, driver cos(y + z)."""
    monitoring = T * (np.arange(11) / 10)
    term = TerminalCondition(running_max_abs_payoff, monitoring, name="running_max_abs")
    return Problem("example2", 1, T, driver_cos(), term)


def example3_problem(T=1.0):
    """Call on the maximum of five assets with distinct borrowing/lending rates."""
    rho = 0.3
    corr = np.full((5, 5), rho) + (1 - rho) * np.eye(5)
    model = MarketModel(
        s0=np.ones(5),
        mu=[0.02, 0.01, 0.05, 0.03, 0.05],
        sigma=[0.2, 0.25, 0.18, 0.22, 0.5],
        corr=corr,
        r=0.02,
        R=0.1,
        strike=0.9,
    )

    def payoff(model, times, S):
        return max_call_payoff(model, S[:, :, -1])

    term = _terminal_from_payoff(model, payoff, [T], "max_call")
    return Problem("example3", 5, T, driver_borrowing(model), term, model=model,
                   payoff=payoff)


_CATALOG = {
    "constant": constant_problem,
    "bt": brownian_terminal_problem,
    "bt_squared": bt_squared_problem,
    "vanilla_call": vanilla_call_problem,
    "example1": example1_problem,
    "example2": example2_problem,
    "example3": example3_problem,
}


def make_problem(name, **kwargs) -> Problem:
    if name == "custom":
        factory = kwargs.pop("factory", None)
        if factory is None:
            raise ValueError("custom problems need a 'factory' (module:callable) entry")
        mod_name, _, attr = factory.partition(":")
        import importlib

        fn = getattr(importlib.import_module(mod_name), attr)
        return fn(**kwargs)
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown problem '{name}'; choices: {sorted(_CATALOG)} or custom")
    return factory(**kwargs)


def risk_neutral(model: MarketModel) -> MarketModel:
    """Same market with the drift replaced by the lending rate."""
    return replace(model, mu=np.full(model.d, model.r))
