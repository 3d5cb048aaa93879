import numpy as np
import pytest

from chaosbsde.hermite import hermite_eval, hermite_eval_all, hermite_table


def he_closed_form(n, x):
    """Probabilists' Hermite polynomials up to degree 6, straight off the definition."""
    forms = [
        lambda x: np.ones_like(x),
        lambda x: x,
        lambda x: x**2 - 1,
        lambda x: x**3 - 3 * x,
        lambda x: x**4 - 6 * x**2 + 3,
        lambda x: x**5 - 10 * x**3 + 15 * x,
        lambda x: x**6 - 15 * x**4 + 45 * x**2 - 15,
    ]
    return forms[n](np.asarray(x, dtype=float))


def test_degree_zero_is_one():
    assert hermite_eval(0, 1.7) == 1.0


def test_degree_one_is_identity():
    assert hermite_eval(1, 2.0) == 2.0


def test_degree_three_closed_form():
    # He_3(2) = 8 - 6, divided by 3!
    assert hermite_eval(3, 2.0) == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("n", range(7))
def test_matches_normalized_closed_forms(n):
    import math

    x = np.linspace(-3.5, 3.5, 41)
    expected = he_closed_form(n, x) / math.factorial(n)
    np.testing.assert_allclose(hermite_eval(n, x), expected, rtol=1e-12, atol=1e-13)


def test_eval_all_at_zero():
    np.testing.assert_allclose(hermite_eval_all(2, 0.0), [1.0, 0.0, -0.5], atol=0)


def test_eval_all_degree_zero():
    np.testing.assert_allclose(hermite_eval_all(0, 5.0), [1.0])


def test_eval_all_at_one():
    # He_4(1) = 1 - 6 + 3 = -2, so H_4(1) = -2/4! = -1/12
    np.testing.assert_allclose(
        hermite_eval_all(4, 1.0), [1.0, 1.0, 0.0, -1 / 3, -1 / 12], atol=1e-15
    )


def test_eval_all_consistent_with_single():
    x = np.linspace(-2, 2, 9)
    table = hermite_eval_all(8, x)
    for n in range(9):
        np.testing.assert_array_equal(table[n], hermite_eval(n, x))


def test_table_layout_matches_eval_all():
    x = np.random.default_rng(0).normal(size=(5, 3))
    table = hermite_table(x, 6)
    assert table.shape == (5, 3, 7)
    np.testing.assert_array_equal(np.moveaxis(table, -1, 0), hermite_eval_all(6, x))


def test_generating_function_identity():
    ts = np.linspace(-1, 1, 21)
    xs = np.linspace(-3, 3, 25)
    for t in ts:
        vals = hermite_eval_all(20, xs, cap=20)
        series = (t ** np.arange(21))[:, None] * vals
        err = np.abs(series.sum(axis=0) - np.exp(t * xs - t**2 / 2))
        assert err.max() <= 1e-9


def test_derivative_identity():
    eps = 1e-5
    xs = np.linspace(-2.5, 2.5, 11)
    for n in range(1, 9):
        approx = (hermite_eval(n, xs + eps) - hermite_eval(n, xs - eps)) / (2 * eps)
        np.testing.assert_allclose(approx, hermite_eval(n - 1, xs), atol=5e-9)


def test_derivative_convention_h_minus_one():
    eps = 1e-6
    xs = np.linspace(-2, 2, 7)
    approx = (hermite_eval(0, xs + eps) - hermite_eval(0, xs - eps)) / (2 * eps)
    np.testing.assert_allclose(approx, 0.0, atol=1e-12)


def test_quadrature_orthonormality():
    import math

    nodes, weights = np.polynomial.hermite_e.hermegauss(40)
    weights = weights / np.sqrt(2 * np.pi)
    table = hermite_eval_all(10, nodes)
    for n in range(11):
        for m in range(11):
            integral = math.factorial(n) * np.sum(weights * table[n] * table[m])
            assert abs(integral - (1.0 if n == m else 0.0)) <= 1e-10


def test_degree_above_cap_rejected():
    with pytest.raises(ValueError, match="cap"):
        hermite_eval(17, 0.3)
    with pytest.raises(ValueError, match="cap"):
        hermite_eval_all(17, 0.3)
    assert hermite_eval(17, 0.3, cap=20) is not None


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.0)
