import weakref

import numpy as np
import pytest

import chaosbsde.schemes as schemes
from chaosbsde.brownian import ROLE_TERMINAL, SeedSpec, sample_batch
from chaosbsde.chaos import project_terminal
from chaosbsde.grids import build_refined_grid, build_time_grid
from chaosbsde.multiindex import build_index_set
from chaosbsde.problems import (
    Driver,
    Problem,
    TerminalCondition,
    bt_squared_problem,
    brownian_terminal_problem,
    constant_problem,
    example3_problem,
    make_problem,
)
from chaosbsde.schemes import (
    EulerParams,
    run_euler,
    run_picard,
    simulate_solution_paths,
)


def linear_problem(alpha, T=1.0):
    term = TerminalCondition(lambda times, B: B[:, 0, -1], [T], name="bt")
    return Problem("lin", 1, T, Driver(lambda t, y, z: alpha * y, uses_z=False), term)


def test_constant_problem_exact():
    res = run_euler(constant_problem(c=3.25), EulerParams(m=3, M=4, P=2, N=2048, seed=7))
    assert res.y0 == 3.25
    assert abs(res.z0[0]) <= 5 * 3.25 / np.sqrt(2048) / np.sqrt(0.25)


def test_zero_driver_reduction_bitwise():
    # with f = 0 the recursion adds no Monte Carlo noise after the terminal
    # projection: Y_0 equals the constant terminal coefficient exactly
    prob = bt_squared_problem()
    params = EulerParams(m=3, M=4, P=2, N=20_000, seed=11, precision="double")
    res = run_euler(prob, params)
    tg = build_time_grid(prob.T, params.m)
    rg = build_refined_grid(tg, params.M, params.m)
    iset = build_index_set(params.P, rg.n_cells, 1)
    batch = sample_batch(rg.points, 1, params.N, SeedSpec(params.seed, ROLE_TERMINAL))
    xi = batch.values(times=[prob.T])[:, 0, 0] ** 2
    direct = project_terminal(xi, batch, rg, iset)
    assert res.y0 == direct.values[0]


def test_one_step_linear_consistency():
    alpha, N = 0.5, 50_000
    prob = linear_problem(alpha)
    params = EulerParams(m=1, M=2, P=2, N=N, seed=3, precision="double")
    res = run_euler(prob, params)
    tg = build_time_grid(prob.T, 1)
    rg = build_refined_grid(tg, 2, 1)
    iset = build_index_set(2, rg.n_cells, 1)
    batch = sample_batch(rg.points, 1, N, SeedSpec(3, ROLE_TERMINAL))
    xi = batch.values(times=[prob.T])[:, 0, 0]
    d_xi = project_terminal(xi, batch, rg, iset)
    hand = (1 + alpha * prob.T) * d_xi.values[0]
    assert abs(res.y0 - hand) <= 5 * alpha / np.sqrt(N)


def test_determinism_across_thread_counts():
    prob = bt_squared_problem()
    base = dict(m=4, M=4, P=2, N=30_000, seed=5, chunk=4096)
    res1 = run_euler(prob, EulerParams(threads=1, **base))
    res8 = run_euler(prob, EulerParams(threads=8, **base))
    assert res1.y0 == res8.y0
    assert (res1.z0 == res8.z0).all()
    assert res1.steps == res8.steps


def test_picard_determinism_across_thread_counts():
    prob = make_problem("example2")
    base = dict(m=4, M=4, P=2, N=20_000, seed=5, chunk=4096)
    res1 = run_picard(prob, EulerParams(threads=1, **base), Q=3)
    res8 = run_picard(prob, EulerParams(threads=8, **base), Q=3)
    assert res1.y0 == res8.y0
    assert (res1.z0 == res8.z0).all()


def test_precision_settings_agree():
    prob = bt_squared_problem()
    base = dict(m=4, M=4, P=2, N=30_000, seed=5)
    single = run_euler(prob, EulerParams(precision="single", **base))
    double = run_euler(prob, EulerParams(precision="double", **base))
    assert single.y0 == pytest.approx(double.y0, abs=5e-5)
    assert single.z0[0] == pytest.approx(double.z0[0], abs=5e-5)


def test_memory_contract_single_live_batch(monkeypatch):
    live = {"now": 0, "peak": 0}
    real = schemes.sample_batch

    def tracking(points, d, N, spec):
        batch = real(points, d, N, spec)
        live["now"] += 1
        live["peak"] = max(live["peak"], live["now"])
        weakref.finalize(batch, lambda: live.__setitem__("now", live["now"] - 1))
        return batch

    monkeypatch.setattr(schemes, "sample_batch", tracking)
    run_euler(bt_squared_problem(), EulerParams(m=4, M=4, P=2, N=5_000, seed=1))
    assert live["peak"] == 1


def test_driver_failure_names_step():
    term = TerminalCondition(lambda times, B: B[:, 0, -1], [1.0], name="bt")
    bad = Problem("bad", 1, 1.0, Driver(lambda t, y, z: np.full_like(y, np.nan)), term)
    with pytest.raises(RuntimeError, match="step"):
        run_euler(bad, EulerParams(m=2, M=2, P=1, N=256, seed=0))


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        EulerParams(m=0, M=2, P=1, N=10)
    with pytest.raises(ValueError):
        EulerParams(m=1, M=2, P=-1, N=10)
    with pytest.raises(ValueError):
        EulerParams(m=1, M=2, P=1, N=10, precision="half")
    with pytest.raises(ValueError):
        run_picard(constant_problem(), EulerParams(m=1, M=1, P=0, N=16), Q=0)


def test_picard_zero_driver_projection():
    res = run_picard(constant_problem(c=2.5), EulerParams(m=2, M=2, P=1, N=4096, seed=2), Q=1)
    assert res.y0 == 2.5
    res = run_picard(bt_squared_problem(), EulerParams(m=4, M=4, P=2, N=60_000, seed=4), Q=1)
    assert res.y0 == pytest.approx(1.0, abs=0.05)
    assert abs(res.z0[0]) <= 0.1


def test_z_coupled_driver_matches_closed_form():
    # assets drift at mu != r: pricing requires the market-price-of-risk
    # correction f = -r y - theta . z, which exercises the conditional
    # time-average of Z; the result must land on the rate-r closed form
    from chaosbsde.oracles import bs_call_price
    from chaosbsde.problems import MarketModel

    mu, r, sigma = 0.06, 0.01, 0.2
    model = MarketModel(s0=[1.0], mu=[mu], sigma=[sigma], corr=np.eye(1), r=r, strike=0.9)
    theta = model.theta

    def payoff(m, times, S):
        return np.maximum(S[:, :, -1].max(axis=1) - m.strike, 0.0)

    term = TerminalCondition(
        lambda times, B: payoff(model, times, model.gbm_path(times, B)), [1.0]
    )
    prob = Problem("drifted_call", 1, 1.0,
                   Driver(lambda t, y, z: -r * y - z @ theta), term,
                   model=model, payoff=payoff)
    res = run_euler(prob, EulerParams(m=20, M=10, P=3, N=100_000, seed=42, threads=0))
    bs = bs_call_price(1.0, 0.9, r, sigma, 1.0)
    # without the z term the drift premium would be ~0.035; the scheme's
    # residual is the O(1/m) time-discretization bias
    assert abs(res.y0 - bs) <= 0.004


def test_picard_euler_agree_linear():
    prob = linear_problem(-0.1)
    pe = run_euler(prob, EulerParams(m=8, M=4, P=2, N=60_000, seed=6))
    pp = run_picard(prob, EulerParams(m=8, M=4, P=2, N=60_000, seed=6), Q=5)
    # both approximate Y_0 = 0 for the centered terminal condition
    assert pe.y0 == pytest.approx(pp.y0, abs=0.02)
    assert pe.z0[0] == pytest.approx(pp.z0[0], abs=0.05)


def test_result_contains_step_diagnostics():
    res = run_euler(bt_squared_problem(),
                    EulerParams(m=3, M=3, P=1, N=2048, seed=1, diagnostics=True))
    assert len(res.steps) == 3
    assert all("V" in rec and rec["V"] >= 0 for rec in res.steps)
    assert res.coefficients is None


def test_paths_need_retained_coefficients():
    res = run_euler(constant_problem(), EulerParams(m=2, M=2, P=1, N=512, seed=1))
    with pytest.raises(ValueError, match="retain"):
        simulate_solution_paths(constant_problem(), EulerParams(m=2, M=2, P=1, N=512),
                                res.coefficients, 3)


def test_paths_flat_for_constant():
    params = EulerParams(m=3, M=3, P=1, N=1024, seed=2, retain_coefficients=True)
    prob = constant_problem(c=1.5)
    res = run_euler(prob, params)
    table = simulate_solution_paths(prob, params, res.coefficients, 4)
    np.testing.assert_allclose(table["Y"], 1.5, atol=0.4)
    assert table["Y"].shape == (4, 4)


def test_paths_unit_z_for_brownian_terminal():
    params = EulerParams(m=4, M=4, P=2, N=100_000, seed=3, retain_coefficients=True)
    prob = brownian_terminal_problem()
    res = run_euler(prob, params)
    table = simulate_solution_paths(prob, params, res.coefficients, 6)
    np.testing.assert_allclose(table["Z"][:, :, 0], 1.0, atol=0.05)


def test_paths_shape_and_hedge_for_example3():
    params = EulerParams(m=2, M=2, P=1, N=4000, seed=4, retain_coefficients=True)
    prob = example3_problem()
    res = run_euler(prob, params)
    table = simulate_solution_paths(prob, params, res.coefficients, 3, hedge=True)
    assert table["Z"].shape == (3, 3, 5)
    assert table["hedge"].shape == (3, 3, 5)
    assert np.isfinite(table["hedge"]).all()


def test_picard_coefficients_reusable_for_paths():
    params = EulerParams(m=3, M=3, P=2, N=50_000, seed=5, retain_coefficients=True)
    prob = brownian_terminal_problem()
    res = run_picard(prob, params, Q=2)
    table = simulate_solution_paths(prob, params, res.coefficients, 4)
    np.testing.assert_allclose(table["Z"][:, :, 0], 1.0, atol=0.08)
