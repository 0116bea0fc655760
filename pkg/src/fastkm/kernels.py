"""Numeric kernels shared by the operators, schemes and batch runners.

Each kernel is written with numpy array expressions that numba can also
compile, so the same source serves both the jitted path and the fallback
(see :mod:`fastkm._jit`). Inputs are contiguous float64 1-d arrays.
"""

import numpy as np

from ._jit import jit


@jit
def rotation_resolvent(x, a):
    # (Id + A)^{-1} for A = a [[0, I], [-I, 0]], one 2x2 block per coordinate pair
    n = x.shape[0] // 2
    c = 1.0 / (1.0 + a * a)
    out = np.empty_like(x)
    out[:n] = c * (x[:n] - a * x[n:])
    out[n:] = c * (a * x[:n] + x[n:])
    return out


@jit
def project_nonnegative(x):
    return np.maximum(x, 0.0)


@jit
def project_hyperplane(u, nu, unorm2, x):
    return x - ((np.dot(x, u) - nu) / unorm2) * u


@jit
def shadow_distance(p):
    # ||p - max(p, 0)|| = ||min(p, 0)||
    neg = np.minimum(p, 0.0)
    return np.sqrt(np.dot(neg, neg))


@jit
def dr_feasibility(x, ph):
    """T_DR(x) for the orthant/hyperplane pair, given ``ph = Proj_H(x)``."""
    return np.maximum(2.0 * ph - x, 0.0) + x - ph


@jit
def fast_km_update(x, x_prev, tx, tx_prev, k, alpha, s):
    denom = k + alpha
    w_anchor = s * alpha / (2.0 * denom)
    w_mom = (1.0 - s) * k / denom
    w_corr = s * k / denom
    return (1.0 - w_anchor) * x + w_mom * (x - x_prev) + w_anchor * tx + w_corr * (tx - tx_prev)


@jit
def feasibility_trial_relaxed(u, nu, x0, steps, anchored, tol):
    """KM-type (or anchored Halpern) iteration on T_DR until the shadow is feasible.

    ``steps[k]`` is the relaxation used to produce ``x_{k+1}``; the number of
    steps is kmax. Returns the first k whose shadow passes the test, or -1.
    """
    unorm2 = np.dot(u, u)
    kmax = steps.shape[0]
    x = x0.copy()
    for k in range(kmax + 1):
        ph = project_hyperplane(u, nu, unorm2, x)
        if shadow_distance(ph) <= tol:
            return k
        if k == kmax:
            break
        t = dr_feasibility(x, ph)
        sk = steps[k]
        if anchored:
            x = (1.0 - sk) * x0 + sk * t
        else:
            x = (1.0 - sk) * x + sk * t
    return -1


@jit
def feasibility_trial_fast_km(u, nu, x0, alpha, s, kmax, tol):
    """Fast KM on T_DR started from x_1 = x_0; same return convention as above."""
    unorm2 = np.dot(u, u)
    ph = project_hyperplane(u, nu, unorm2, x0)
    if shadow_distance(ph) <= tol:
        return 0
    if kmax == 0:
        return -1
    x_prev = x0.copy()
    tx_prev = dr_feasibility(x0, ph)
    x = x0.copy()
    for k in range(1, kmax + 1):
        ph = project_hyperplane(u, nu, unorm2, x)
        if shadow_distance(ph) <= tol:
            return k
        if k == kmax:
            break
        tx = dr_feasibility(x, ph)
        x_next = fast_km_update(x, x_prev, tx, tx_prev, k, alpha, s)
        x_prev = x
        x = x_next
        tx_prev = tx
    return -1
