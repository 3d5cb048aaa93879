"""Normalized Hermite polynomials.

The polynomials used everywhere in this package are the probabilists'
Hermite polynomials divided by n!, i.e. the coefficients of the expansion

    exp(t*x - t**2/2) = sum_n t**n H_n(x).

With this normalization sqrt(a!) * prod_j H_{a_j}(G_j) is orthonormal for
independent standard Gaussians G_j, and H_n' = H_{n-1} (H_{-1} = 0).

Evaluation uses the three-term recurrence

    H_0 = 1,  H_1 = x,  (n+1) H_{n+1}(x) = x H_n(x) - H_{n-1}(x),

obtained from He_{n+1} = x He_n - n He_{n-1} after dividing by (n+1)!.
"""

import numpy as np

# Experiments use chaos orders P <= 6; the cap guards against configs that
# would silently push the recurrence into overflow territory.
DEGREE_CAP = 16


def _check_degree(n, cap):
    if n < 0:
        raise ValueError(f"Hermite degree must be non-negative, got {n}")
    if n > cap:
        raise ValueError(f"Hermite degree {n} exceeds the configured cap {cap}")


def hermite_eval(n, x, cap=DEGREE_CAP):
    """H_n(x) for a single degree n; x may be a scalar or ndarray."""
    _check_degree(n, cap)
    x = np.asarray(x, dtype=float)
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    for k in range(n):
        h_prev, h = h, (x * h - h_prev) / (k + 1.0)
    return h if h.ndim else float(h)


def hermite_eval_all(n_max, x, cap=DEGREE_CAP):
    """All values H_0(x), ..., H_{n_max}(x) in one recurrence pass.

    Returns an array of shape (n_max + 1,) + shape(x).
    """
    _check_degree(n_max, cap)
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for k in range(1, n_max):
        out[k + 1] = (x * out[k] - out[k - 1]) / (k + 1.0)
    return out


def hermite_table(x, n_max, cap=DEGREE_CAP):
    """Like hermite_eval_all but with the degree as the trailing axis.

    Shape (shape(x), n_max + 1); layout used by the chaos product kernels.
    """
    _check_degree(n_max, cap)
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = x
    for k in range(1, n_max):
        np.subtract(x * out[..., k], out[..., k - 1], out=out[..., k + 1])
        out[..., k + 1] /= k + 1.0
    return out
