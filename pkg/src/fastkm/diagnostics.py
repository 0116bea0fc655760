"""Lyapunov-energy diagnostics for Fast KM traces.

Everything here is a pure function of recorded iterates and residual
vectors ``(Id - T)(x_k)``; the operator is never evaluated again.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .operators import ParameterError, as_vector

NONNEG_TOL = 1e-10
DESCENT_TOL = 1e-9


@dataclass(frozen=True)
class EnergySpec:
    x_star: np.ndarray
    lam: float
    alpha: float
    s: float

    def __post_init__(self):
        if not self.alpha > 2.0:
            raise ParameterError(f"α > 2 violated: alpha={self.alpha}")
        if not 0.0 <= self.lam <= self.alpha - 1.0:
            raise ParameterError(f"0 ≤ λ ≤ α-1 violated: lambda={self.lam}")
        if not self.s > 0.0:
            raise ParameterError(f"s > 0 violated: s={self.s}")
        object.__setattr__(self, "x_star", as_vector(self.x_star, name="x_star"))


def _energy_coeffs(alpha, s):
    c_res = (3.0 * alpha - 2.0) / (2.0 * (alpha - 1.0))
    c_cross = (alpha - 2.0) / (alpha - 1.0)
    c_last = (alpha - 2.0) * (3.0 * alpha - 2.0) / (8.0 * (alpha - 1.0) ** 2)
    return c_res, c_cross, c_last


def energy(spec, k, x_k, x_km1, res_km1):
    """Discrete energy ``E_{λ,k}`` from ``x_k``, ``x_{k-1}`` and ``(Id - T)(x_{k-1})``."""
    x_k = as_vector(x_k, spec.x_star.shape[0], "x_k")
    x_km1 = as_vector(x_km1, x_k.shape[0], "x_km1")
    res = as_vector(res_km1, x_k.shape[0], "res_km1")
    lam, alpha, s = spec.lam, spec.alpha, spec.s
    c_res, c_cross, c_last = _energy_coeffs(alpha, s)
    e = x_k - spec.x_star
    v = 2.0 * lam * e + 2.0 * k * (x_k - x_km1) + c_res * s * k * res
    return float(
        0.5 * np.dot(v, v)
        + 2.0 * lam * (alpha - 1.0 - lam) * np.dot(e, e)
        + c_cross * lam * s * k * np.dot(e, res)
        + c_last * s * s * k * k * np.dot(res, res)
    )


def energy_series(spec, iterates, residual_vectors):
    """``E_{λ,k}`` for ``k = 1 .. K``; entry ``i`` holds ``k = i + 1``."""
    X = np.asarray(iterates, dtype=np.float64)
    R = np.asarray(residual_vectors, dtype=np.float64)
    lam, alpha, s = spec.lam, spec.alpha, spec.s
    c_res, c_cross, c_last = _energy_coeffs(alpha, s)
    k = np.arange(1, X.shape[0], dtype=np.float64)[:, None]
    e = X[1:] - spec.x_star
    res = R[:-1]
    v = 2.0 * lam * e + 2.0 * k * (X[1:] - X[:-1]) + c_res * s * k * res
    k = k[:, 0]
    return (
        0.5 * np.einsum("ij,ij->i", v, v)
        + 2.0 * lam * (alpha - 1.0 - lam) * np.einsum("ij,ij->i", e, e)
        + c_cross * lam * s * k * np.einsum("ij,ij->i", e, res)
        + c_last * s * s * k * k * np.einsum("ij,ij->i", res, res)
    )


@dataclass(frozen=True)
class OmegaConstants:
    w1: float
    w2: float
    w3: float
    w4: float


def omega_constants(alpha, lam):
    if not alpha > 2.0:
        raise ParameterError(f"α > 2 violated: alpha={alpha}")
    if not 0.0 <= lam <= alpha - 1.0:
        raise ParameterError(f"0 ≤ λ ≤ α-1 violated: lambda={lam}")
    xi = lam + 1.0 - alpha
    am1 = alpha - 1.0
    w1 = 4.0 * xi
    w2 = (4.0 * am1 * xi + alpha * (2.0 - alpha)) / am1
    w3 = (2.0 * alpha * am1 * xi + alpha - 2.0 * am1 ** 2 + 2.0 * (2.0 - alpha) * am1) / am1
    w4 = (2.0 - alpha) * (3.0 * alpha - 2.0) / (2.0 * am1)
    return OmegaConstants(w1, w2, w3, w4)


def lambda_window(alpha):
    """Open interval of ``λ`` for which the energy eventually decreases."""
    if not alpha > 2.0:
        raise ParameterError(f"α > 2 violated: alpha={alpha}")
    centre = alpha ** 2 / (8.0 * (alpha - 1.0)) + (alpha - 1.0) / 2.0
    spread = (alpha - 2.0) * math.sqrt((alpha - 2.0) * (5.0 * alpha - 2.0)) / (8.0 * (alpha - 1.0))
    return centre - spread, min(0.75 * alpha - 0.5, centre + spread)


def _rk_factor(alpha):
    return math.sqrt((5.0 * alpha - 2.0) / (2.0 * (3.0 * alpha - 2.0)))


def threshold_coefficients(alpha, lam):
    """Coefficients ``(a, b, c)`` of ``Δ_k / s^2 = a k^2 + b k + c``."""
    w = omega_constants(alpha, lam)
    q = 2.0 * (5.0 * alpha - 2.0) / (3.0 * alpha - 2.0)
    return w.w2 ** 2 - q * w.w1 * w.w4, 2.0 * w.w2 * w.w3, w.w3 ** 2


def threshold_index(alpha, lam):
    """Smallest ``k >= 1`` from which ``Δ_k <= 0`` (and hence ``R_k <= 0``) holds.

    ``λ`` must lie strictly inside :func:`lambda_window`.
    """
    lo, hi = lambda_window(alpha)
    if not lo < lam < hi:
        raise ParameterError(f"λ̲ < λ < λ̄ violated: lambda={lam}, window=({lo:.6g}, {hi:.6g})")
    a, b, c = threshold_coefficients(alpha, lam)
    if not a < 0.0:
        raise ParameterError(f"leading coefficient must be negative, got {a}")
    # a < 0 and c >= 0 put the roots on opposite sides of 0; take the positive one
    root = (-b - math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    k = max(1, math.ceil(root))
    # guard the ceiling against rounding at an integer root
    while k > 1 and a * (k - 1) ** 2 + b * (k - 1) + c <= 0.0:
        k -= 1
    while a * k * k + b * k + c > 0.0:
        k += 1
    return k


def evaluate_Rk(alpha, lam, s, k, dx, res_k):
    """The quadratic form ``R_k`` in ``dx = x_{k+1} - x_k`` and ``res_k = (Id - T)(x_k)``."""
    dx = as_vector(dx, name="dx")
    res = as_vector(res_k, dx.shape[0], "res_k")
    w = omega_constants(alpha, lam)
    f = _rk_factor(alpha)
    return float(
        f * w.w1 * k * np.dot(dx, dx)
        + s * (w.w2 * k + w.w3) * np.dot(dx, res)
        + f * w.w4 * s * s * k * np.dot(res, res)
    )


def rk_series(alpha, lam, s, iterates, residual_vectors):
    """``R_k`` for ``k = 1 .. K-1``; entry ``i`` holds ``k = i + 1``."""
    X = np.asarray(iterates, dtype=np.float64)
    R = np.asarray(residual_vectors, dtype=np.float64)
    w = omega_constants(alpha, lam)
    f = _rk_factor(alpha)
    dx = X[2:] - X[1:-1]
    res = R[1:-1]
    k = np.arange(1, X.shape[0] - 1, dtype=np.float64)
    return (
        f * w.w1 * k * np.einsum("ij,ij->i", dx, dx)
        + s * (w.w2 * k + w.w3) * np.einsum("ij,ij->i", dx, res)
        + f * w.w4 * s * s * k * np.einsum("ij,ij->i", res, res)
    )


def descent_bound_series(spec, iterates, residual_vectors, theta=None):
    """Right-hand side of the energy decrease inequality for ``k = 1 .. K-1``.

    Valid for ``k >= k(λ)``. The term involving ``s - 1/θ`` is included only
    when ``theta`` is given (it is nonpositive whenever ``s <= 1/θ``).
    """
    X = np.asarray(iterates, dtype=np.float64)
    R = np.asarray(residual_vectors, dtype=np.float64)
    lam, alpha, s = spec.lam, spec.alpha, spec.s
    w = omega_constants(alpha, lam)
    f = _rk_factor(alpha)
    k = np.arange(1, X.shape[0] - 1, dtype=np.float64)
    e = X[1:-1] - spec.x_star
    dx = X[2:] - X[1:-1]
    res = R[1:-1]
    bound = (
        2.0 * (2.0 - alpha) * lam * s * np.einsum("ij,ij->i", e, res)
        + (1.0 - f) * (w.w1 * k * np.einsum("ij,ij->i", dx, dx) + w.w4 * s * s * k * np.einsum("ij,ij->i", res, res))
    )
    if theta is not None:
        dres = R[1:-1] - R[:-2]
        bound = bound + (alpha - 2.0) / (alpha - 1.0) * (s - 1.0 / theta) * s * k * k * np.einsum(
            "ij,ij->i", dres, dres
        )
    return bound


@dataclass(frozen=True)
class EnergyCheck:
    energies: np.ndarray
    scale: float
    energy_min: float
    nonneg_violations: int
    descent_violations: int
    k_lambda: int


def check_energy(spec, iterates, residual_vectors, theta=None):
    """Nonnegativity and eventual-descent checks along a trace.

    Tolerances are ``1e-10`` (nonnegativity) and ``1e-9`` (descent), both
    scaled by ``max(1, E_{λ,1})``. Descent is checked for ``k >= k(λ)``.
    """
    E = energy_series(spec, iterates, residual_vectors)
    scale = max(1.0, float(E[0])) if E.size else 1.0
    nonneg = int(np.count_nonzero(E < -NONNEG_TOL * scale))
    k_lam = threshold_index(spec.alpha, spec.lam)
    rhs = descent_bound_series(spec, iterates, residual_vectors, theta)
    diff = E[1:] - E[:-1]  # entry i: E_{i+2} - E_{i+1}, i.e. k = i + 1
    k = np.arange(1, diff.shape[0] + 1)
    mask = k >= k_lam
    descent = int(np.count_nonzero(diff[mask] > rhs[mask] + DESCENT_TOL * scale))
    return EnergyCheck(E, scale, float(E.min()) if E.size else 0.0, nonneg, descent, k_lam)


@dataclass(frozen=True)
class SummabilityReport:
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray
    S4: Optional[np.ndarray]
    plateau_ratios: dict


def _plateau(terms):
    total = float(np.sum(terms))
    if total == 0.0:
        return 0.0
    n = terms.shape[0]
    tail = float(np.sum(terms[n - max(1, n // 5):]))
    return tail / total


def summability_report(iterates, residual_vectors, x_star=None, theta=None, s=None):
    """Partial sums of the four summable sequences, indexed from ``k = 1``.

    ``S1``: ``k ||x_{k+1} - x_k||^2``, ``S2``: ``k ||res_k||^2``,
    ``S3``: ``k^2 ||res_k - res_{k-1}||^2``, ``S4``: ``<x_k - x*, res_k>``
    (only with ``x_star``). ``plateau_ratios`` holds the share of each total
    contributed by the last 20% of indices. The S3 ratio is left out when
    ``s`` equals ``1/θ``, where its summability is not asserted.
    """
    X = np.asarray(iterates, dtype=np.float64)
    R = np.asarray(residual_vectors, dtype=np.float64)
    K = X.shape[0] - 1
    k = np.arange(1, K + 1, dtype=np.float64)
    dx = X[2:] - X[1:-1]
    t1 = k[:-1] * np.einsum("ij,ij->i", dx, dx)
    t2 = k * np.einsum("ij,ij->i", R[1:], R[1:])
    dres = R[1:] - R[:-1]
    t3 = k * k * np.einsum("ij,ij->i", dres, dres)
    ratios = {"S1": _plateau(t1), "S2": _plateau(t2)}
    if theta is None or s is None or abs(1.0 / theta - s) >= 1e-12:
        ratios["S3"] = _plateau(t3)
    S4 = None
    if x_star is not None:
        t4 = np.einsum("ij,ij->i", X[1:] - np.asarray(x_star, dtype=np.float64), R[1:])
        S4 = np.cumsum(t4)
        ratios["S4"] = _plateau(t4)
    return SummabilityReport(np.cumsum(t1), np.cumsum(t2), np.cumsum(t3), S4, ratios)


@dataclass(frozen=True)
class RateFit:
    sup_tail_k_res: float
    loglog_slope: Optional[float]
    converged: bool = False


def rate_fit(residual, burn_in=None):
    """Tail statistics of a residual sequence indexed by ``k = 0, 1, ...``.

    Returns ``max_{k >= burn_in} k * residual[k]`` and the least-squares
    slope of ``log residual`` against ``log k`` over the same range. Zero
    residuals are left out of the fit; if all are zero the slope is None and
    ``converged`` is set. ``burn_in`` defaults to a fifth of the length.
    """
    r = np.asarray(residual, dtype=np.float64)
    n = r.shape[0]
    if burn_in is None:
        burn_in = (n - 1) // 5
    burn_in = max(int(burn_in), 1)
    if not n > 2 * burn_in:
        raise ValueError(f"trace length {n} must exceed 2 * burn_in = {2 * burn_in}")
    k = np.arange(burn_in, n, dtype=np.float64)
    tail = r[burn_in:]
    sup = float(np.max(k * tail))
    pos = tail > 0.0
    if np.count_nonzero(pos) < 2:
        return RateFit(sup, None, True)
    slope = np.polyfit(np.log(k[pos]), np.log(tail[pos]), 1)[0]
    return RateFit(sup, float(slope))


def diagnose(trace, alpha, s, lam=None, x_star=None, theta=None, burn_in=None):
    """Assemble the diagnostics report for one trace as a JSON-ready dict.

    Energy, descent and summability entries need stored iterates, residual
    vectors and ``x_star``; otherwise they are reported as None.
    """
    lo, hi = lambda_window(alpha)
    if lam is None:
        lam = 0.5 * (lo + hi)
    k_lam = threshold_index(alpha, lam)
    fit = rate_fit(trace.residual, burn_in)
    report = {
        "lambda_window": [lo, hi],
        "k_lambda": k_lam,
        "sup_tail_k_res": fit.sup_tail_k_res,
        "loglog_slope": "converged" if fit.converged else fit.loglog_slope,
        "plateau_ratios": None,
        "energy_min": None,
        "descent_violations": None,
    }
    have_vectors = trace.iterates is not None and trace.residual_vectors is not None
    if have_vectors and x_star is not None and trace.iterates.shape[0] > 2:
        spec = EnergySpec(x_star, lam, alpha, s)
        chk = check_energy(spec, trace.iterates, trace.residual_vectors, theta)
        summ = summability_report(trace.iterates, trace.residual_vectors, x_star, theta, s)
        report["plateau_ratios"] = summ.plateau_ratios
        report["energy_min"] = chk.energy_min
        report["descent_violations"] = chk.descent_violations
    return report
