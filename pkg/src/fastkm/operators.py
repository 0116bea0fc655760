"""Averaged operators and the splitting constructors built on them.

Vectors are plain 1-d float64 numpy arrays. An :class:`AveragedOperator`
bundles an evaluation rule with its averagedness constant ``theta``, which
is what the schemes use to validate step sizes.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels

Mapping = Callable[[np.ndarray], np.ndarray]

COCOERCIVITY_TOL = 1e-9


class ParameterError(ValueError):
    """A parameter violates a bound required by an operator or scheme."""


class NonFiniteError(FloatingPointError):
    """An evaluation produced NaN or infinity."""


def as_vector(x, dim=None, name="x"):
    """Convert ``x`` to a finite float64 vector, optionally checking its length."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return v


def dot(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


@dataclass(frozen=True)
class AveragedOperator:
    """A ``theta``-averaged map on R^dim.

    Parameters
    ----------
    dim : int
        Dimension of the space the operator acts on.
    theta : float
        Averagedness constant in (0, 1].
    func : callable
        Deterministic map from a length-``dim`` vector to a length-``dim`` vector.
    known_fixed_point : ndarray, optional
        A point with ``func(p) == p``, when one is known in closed form.
    name : str
        Label used in reports.
    """

    dim: int
    theta: float
    func: Mapping = field(repr=False)
    known_fixed_point: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    name: str = "T"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not 0.0 < self.theta <= 1.0:
            raise ParameterError(f"0 < θ ≤ 1 violated: theta={self.theta}")
        if self.known_fixed_point is not None:
            p = as_vector(self.known_fixed_point, self.dim, "known_fixed_point").copy()
            p.setflags(write=False)
            object.__setattr__(self, "known_fixed_point", p)

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(op, x):
    x = as_vector(x, op.dim)
    out = np.asarray(op.func(x), dtype=np.float64)
    if out.shape != (op.dim,):
        raise ValueError(f"{op.name} returned shape {out.shape}, expected ({op.dim},)")
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op.name} produced a non-finite value")
    return out


def residual_map(op, x):
    """Return ``x - T(x)``."""
    x = as_vector(x, op.dim)
    return x - evaluate(op, x)


def identity_operator(dim):
    zero = np.zeros(dim)
    return AveragedOperator(dim, 0.5, lambda x: x.copy(), known_fixed_point=zero, name="Id")


@dataclass(frozen=True)
class MonotoneLinearMap:
    """The skew map ``A = (1/(M-1)) [[0, I], [-I, 0]]`` on R^{2n}."""

    n: int
    m_const: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.m_const > 1.0:
            raise ParameterError(f"M > 1 violated: M={self.m_const}")

    @property
    def scale(self):
        return 1.0 / (self.m_const - 1.0)

    def apply(self, x):
        x = as_vector(x, 2 * self.n)
        return self.scale * np.concatenate([x[self.n:], -x[: self.n]])

    def matrix(self):
        eye = np.eye(self.n)
        zero = np.zeros((self.n, self.n))
        return self.scale * np.block([[zero, eye], [-eye, zero]])


def make_rotation_resolvent(n, m_const):
    """Resolvent ``(Id + A)^{-1}`` of the skew map, evaluated in closed form.

    Its unique fixed point is the origin and it is 1/2-averaged.
    """
    lin = MonotoneLinearMap(n, m_const)
    a = lin.scale
    return AveragedOperator(
        dim=2 * n,
        theta=0.5,
        func=lambda x: kernels.rotation_resolvent(x, a),
        known_fixed_point=np.zeros(2 * n),
        name=f"J_A(n={n},M={m_const:g})",
    )


def project_nonnegative(x):
    return kernels.project_nonnegative(as_vector(x))


def project_hyperplane(u, nu, x):
    """Project ``x`` onto ``{y : <y, u> = nu}``."""
    u = as_vector(u, name="u")
    x = as_vector(x, u.shape[0])
    unorm2 = float(np.dot(u, u))
    if unorm2 == 0.0:
        raise ValueError("hyperplane normal u must be nonzero")
    return kernels.project_hyperplane(u, float(nu), unorm2, x)


def make_douglas_rachford(resolvent_a, resolvent_b, dim, name="T_DR"):
    """``J_A o (2 J_B - Id) + Id - J_B``, which is 1/2-averaged."""

    def t_dr(x):
        jb = _checked(resolvent_b, x, dim)
        return _checked(resolvent_a, 2.0 * jb - x, dim) + x - jb

    return AveragedOperator(dim, 0.5, t_dr, name=name)


def _forward_theta(gamma, beta):
    if not gamma > 0.0:
        raise ParameterError(f"0 < γ ≤ 2β violated: gamma={gamma}")
    if beta is None:
        return 0.5
    if not gamma <= 2.0 * beta:
        raise ParameterError(f"0 < γ ≤ 2β violated: gamma={gamma}, beta={beta}")
    return 2.0 * beta / (4.0 * beta - gamma)


def make_forward_backward(resolvent_a, cocoercive_c, gamma, beta, dim, name="T_FB"):
    """``J_{γA} o (Id - γC)``, which is ``2β/(4β-γ)``-averaged.

    Pass ``cocoercive_c=None`` (and ``beta=None``) when there is no forward
    term; the operator is then 1/2-averaged. ``resolvent_a`` is expected to
    already be the resolvent of ``γA``.
    """
    if cocoercive_c is None:
        beta = None
    theta = _forward_theta(gamma, beta)

    def t_fb(x):
        y = x if cocoercive_c is None else x - gamma * _checked(cocoercive_c, x, dim)
        return _checked(resolvent_a, y, dim)

    return AveragedOperator(dim, theta, t_fb, name=name)


def make_davis_yin(resolvent_a, resolvent_b, cocoercive_c, gamma, beta, dim, name="T_DY"):
    """Three-operator splitting map

    ``J_{γA} o (2 J_{γB} - Id - γ C o J_{γB}) + Id - J_{γB}``

    with averagedness ``2β/(4β-γ)``. ``cocoercive_c=None`` drops the forward
    term (1/2-averaged); ``resolvent_b=None`` stands for ``J_{γB} = Id``.
    """
    if cocoercive_c is None:
        beta = None
    theta = _forward_theta(gamma, beta)

    def t_dy(x):
        jb = x.copy() if resolvent_b is None else _checked(resolvent_b, x, dim)
        arg = 2.0 * jb - x
        if cocoercive_c is not None:
            arg = arg - gamma * _checked(cocoercive_c, jb, dim)
        return _checked(resolvent_a, arg, dim) + x - jb

    return AveragedOperator(dim, theta, t_dy, name=name)


def make_dr_feasibility(u, nu):
    """Douglas-Rachford map for the nonnegative orthant and ``<x, u> = nu``.

    Same operator as ``make_douglas_rachford(project_nonnegative,
    Proj_H, dim)`` but fused into a single kernel call.
    """
    u = as_vector(u, name="u").copy()
    unorm2 = float(np.dot(u, u))
    if unorm2 == 0.0:
        raise ValueError("hyperplane normal u must be nonzero")
    nu = float(nu)

    def t_dr(x):
        ph = kernels.project_hyperplane(u, nu, unorm2, x)
        return kernels.dr_feasibility(x, ph)

    return AveragedOperator(u.shape[0], 0.5, t_dr, name="T_DR(R+,H)")


def _checked(mapping, x, dim):
    out = np.asarray(mapping(x), dtype=np.float64)
    if out.shape != (dim,):
        raise ValueError(f"mapping returned shape {out.shape}, expected ({dim},)")
    return out


@dataclass(frozen=True)
class CocoercivityReport:
    violations: int
    worst_margin: float
    num_pairs: int


def check_cocoercivity(op, num_pairs, rng_seed):
    """Sample pairs and test that ``Id - T`` is ``1/(2θ)``-cocoercive.

    For each pair ``(x, y)`` of standard normal vectors the margin
    ``<x-y, Fx-Fy> - ||Fx-Fy||^2 / (2θ)`` with ``F = Id - T`` is computed.
    A pair counts as a violation when its margin is below
    ``-1e-9 * max(1, ||x-y||^2)``.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    rng = np.random.default_rng(rng_seed)
    c = 1.0 / (2.0 * op.theta)
    violations = 0
    worst = np.inf
    for _ in range(num_pairs):
        x = rng.standard_normal(op.dim)
        y = rng.standard_normal(op.dim)
        d = x - y
        fd = residual_map(op, x) - residual_map(op, y)
        margin = float(np.dot(d, fd) - c * np.dot(fd, fd))
        if margin < -COCOERCIVITY_TOL * max(1.0, float(np.dot(d, d))):
            violations += 1
        worst = min(worst, margin)
    return CocoercivityReport(violations, float(worst), num_pairs)
