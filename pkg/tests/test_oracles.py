import numpy as np
import pytest
from scipy import integrate

from chaosbsde.oracles import (
    OracleEstimate,
    bs_call_delta,
    bs_call_price,
    mc_delta,
    mc_price,
    nested_ce,
)
from chaosbsde.problems import example1_problem, vanilla_call_problem


def lognormal_call_quadrature(s0, k, r, sigma, T):
    """Independent price oracle: integrate the payoff against the lognormal density."""

    def integrand(x):
        s_T = s0 * np.exp((r - 0.5 * sigma**2) * T + sigma * np.sqrt(T) * x)
        return max(s_T - k, 0.0) * np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)

    value, _ = integrate.quad(integrand, -12, 12, limit=200)
    return np.exp(-r * T) * value


def test_bs_call_degenerate_vol():
    assert bs_call_price(1.0, 0.9, 0.01, 1e-13, 1.0) == pytest.approx(
        1.0 - 0.9 * np.exp(-0.01), abs=1e-12
    )


def test_bs_call_far_strike():
    assert bs_call_price(1.0, 1e6, 0.01, 0.2, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_bs_call_matches_quadrature():
    got = bs_call_price(1.0, 0.9, 0.01, 0.2, 1.0)
    want = lognormal_call_quadrature(1.0, 0.9, 0.01, 0.2, 1.0)
    assert got == pytest.approx(want, abs=1e-10)


def test_bs_delta_matches_finite_difference():
    h = 1e-6
    fd = (bs_call_price(1 + h, 0.9, 0.01, 0.2, 1.0) - bs_call_price(1 - h, 0.9, 0.01, 0.2, 1.0)) / (2 * h)
    assert bs_call_delta(1.0, 0.9, 0.01, 0.2, 1.0) == pytest.approx(fd, abs=1e-8)


def test_mc_price_constant_payoff():
    prob = vanilla_call_problem(s0=1.0, strike=0.5, r=0.02, sigma=0.0)
    est = mc_price(prob, 500, seed=1)
    expected = 1.0 - 0.5 * np.exp(-0.02)
    assert est.value == pytest.approx(expected, abs=1e-14)
    assert est.stderr == pytest.approx(0.0, abs=1e-14)


def test_mc_price_matches_black_scholes():
    prob = vanilla_call_problem()
    est = mc_price(prob, 400_000, seed=2)
    bs = bs_call_price(1.0, 0.9, 0.01, 0.2, 1.0)
    assert abs(est.value - bs) <= 4 * est.stderr


def test_mc_delta_matches_black_scholes():
    prob = vanilla_call_problem()
    ests = mc_delta(prob, 400_000, seed=3)
    target = bs_call_delta(1.0, 0.9, 0.01, 0.2, 1.0) * 0.2 * 1.0
    assert abs(ests[0].value - target) <= max(4 * ests[0].stderr, 2e-4)


def test_mc_requires_market_model():
    from chaosbsde.problems import bt_squared_problem

    with pytest.raises(ValueError):
        mc_price(bt_squared_problem(), 100, 0)
    with pytest.raises(ValueError):
        mc_delta(bt_squared_problem(), 100, 0)


def test_mc_price_barrier_below_vanilla():
    barrier = mc_price(example1_problem(), 200_000, seed=4)
    vanilla = mc_price(vanilla_call_problem(), 200_000, seed=4)
    assert barrier.value < vanilla.value
    assert barrier.stderr > 0


def test_nested_ce_martingale_exact():
    times = np.array([0.0, 0.5, 1.0])
    past = np.array([[0.0, 0.3]])
    est = nested_ce(lambda ts, B: B[:, 0, -1], times, past, 0.5, 1, 50_000, seed=5)
    assert abs(est.value - 0.3) <= 4 * est.stderr
    assert est.stderr <= 0.02


def test_nested_ce_squared_brownian():
    times = np.array([0.0, 0.25, 1.0])
    past = np.array([[0.0, -0.7]])
    est = nested_ce(lambda ts, B: B[:, 0, -1] ** 2, times, past, 0.25, 1, 50_000, seed=6)
    assert abs(est.value - (0.49 + 0.75)) <= 4 * est.stderr


def test_nested_ce_constant():
    times = np.array([0.0, 0.5, 1.0])
    past = np.array([[0.0, 0.1]])
    est = nested_ce(lambda ts, B: np.full(B.shape[0], 2.5), times, past, 0.5, 1, 100, seed=7)
    assert est == OracleEstimate(2.5, 0.0, 100)


def test_nested_ce_no_future():
    times = np.array([0.0, 1.0])
    past = np.array([[0.0, 0.4]])
    est = nested_ce(lambda ts, B: B[:, 0, -1], times, past, 1.0, 1, 64, seed=8)
    assert est.value == pytest.approx(0.4)
    assert est.stderr <= 1e-12


def test_seed_determinism():
    prob = vanilla_call_problem()
    a = mc_price(prob, 10_000, seed=9)
    b = mc_price(prob, 10_000, seed=9)
    assert a == b
