"""Fixed-point iteration schemes and the run loop that records traces.

Six methods are available: Banach-Picard (``bp``), Krasnosel'skii-Mann
(``km``), Halpern (``halpern``), the accelerated proximal point method
(``appm``), Fast KM (``fast_km``) and the Fast OGDA variant
(``fast_ogda``).
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .operators import NonFiniteError, ParameterError, as_vector, evaluate

METHODS = ("bp", "km", "halpern", "appm", "fast_km", "fast_ogda")
STOP_RULES = ("none", "residual_norm", "feasibility_shadow")
SCHEDULE_KINDS = ("constant", "constant_plus_inverse", "constant_minus_inverse", "halpern_lieder")


class NumericalBlowup(NonFiniteError):
    """An iterate became non-finite; ``last_valid_k`` is the last good index."""

    def __init__(self, message, last_valid_k):
        super().__init__(message)
        self.last_valid_k = last_valid_k


@dataclass(frozen=True)
class StepSchedule:
    """Relaxation sequence ``k -> s_k``.

    ``upper`` overrides the admissible upper bound used at run start, for
    schedules that knowingly leave the usual range.
    """

    kind: str
    c: float = 1.0
    upper: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def value(self, k):
        if self.kind == "constant":
            return self.c
        if self.kind == "constant_plus_inverse":
            return self.c + 1.0 / (k + 2)
        if self.kind == "constant_minus_inverse":
            return self.c - 1.0 / (k + 2)
        return 1.0 - 1.0 / (k + 2)

    def values(self, kmax):
        """Array of ``s_0, ..., s_{kmax-1}``."""
        k = np.arange(kmax, dtype=np.float64)
        if self.kind == "constant":
            return np.full(kmax, float(self.c))
        if self.kind == "constant_plus_inverse":
            return self.c + 1.0 / (k + 2.0)
        if self.kind == "constant_minus_inverse":
            return self.c - 1.0 / (k + 2.0)
        return 1.0 - 1.0 / (k + 2.0)

    def label(self):
        if self.kind == "constant":
            return f"{self.c:g}"
        if self.kind == "constant_plus_inverse":
            return f"{self.c:g}+1/(k+2)"
        if self.kind == "constant_minus_inverse":
            return f"{self.c:g}-1/(k+2)"
        return "1-1/(k+2)"


def constant(c):
    return StepSchedule("constant", c)


def halpern_lieder():
    return StepSchedule("halpern_lieder")


def max_step_fast_km(theta):
    """Largest admissible Fast KM step, ``1/θ`` (inclusive)."""
    _check_theta(theta)
    return 1.0 / theta


def max_step_fast_ogda(theta):
    """Strict upper bound ``max{1/(4θ), (1-θ)/(2θ)}`` on the Fast OGDA step."""
    _check_theta(theta)
    return max(1.0 / (4.0 * theta), (1.0 - theta) / (2.0 * theta))


def _check_theta(theta):
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"0 < θ ≤ 1 violated: theta={theta}")


def step_banach_picard(op, x, tx=None):
    return evaluate(op, x) if tx is None else tx


def step_km(op, x, s, tx=None):
    if tx is None:
        tx = evaluate(op, x)
    return (1.0 - s) * x + s * tx


def step_halpern(op, anchor, x, s, tx=None):
    if tx is None:
        tx = evaluate(op, x)
    return (1.0 - s) * anchor + s * tx


def step_appm(resolvent, k, x, x_prev, y, jx=None):
    """One accelerated proximal point step; returns ``(x_{k+1}, y_{k+1})``."""
    y_next = evaluate(resolvent, x) if jx is None else jx
    beta = k / (k + 2.0)
    x_next = y_next + beta * (y_next - y) - beta * (y - x_prev)
    return x_next, y_next


def fast_km_weights(k, alpha, s):
    """Scalar weights on ``x_k``, ``x_k - x_{k-1}``, ``T x_k`` and ``T x_k - T x_{k-1}``."""
    denom = k + alpha
    w_anchor = s * alpha / (2.0 * denom)
    return 1.0 - w_anchor, (1.0 - s) * k / denom, w_anchor, s * k / denom


def step_fast_km(op, alpha, s, k, x, x_prev, tx=None, tx_prev=None):
    if tx is None:
        tx = evaluate(op, x)
    if tx_prev is None:
        tx_prev = evaluate(op, x_prev)
    return kernels.fast_km_update(x, x_prev, tx, tx_prev, k, alpha, s)


def step_fast_ogda(op, alpha, s, k, x, x_prev, g_prev):
    """One Fast OGDA step; returns ``(x_{k+1}, g_k)`` with ``g_k = (Id - T)(y_k)``."""
    denom = k + alpha
    y = x + (1.0 - alpha / denom) * (x - x_prev) - (alpha * s / (2.0 * denom)) * g_prev
    g = y - evaluate(op, y)
    x_next = y - 0.5 * s * (1.0 + k / denom) * (g - g_prev)
    return x_next, g


@dataclass(frozen=True)
class SchemeConfig:
    """Solver settings.

    ``step`` is the Fast KM / Fast OGDA step ``s``; when omitted Fast KM uses
    ``1/θ`` and Fast OGDA 95% of its strict bound. ``schedule`` is the
    relaxation for ``km`` (default constant 1/2) and ``halpern`` (default
    ``1 - 1/(k+2)``).
    """

    method: str
    kmax: int
    alpha: float = 3.0
    step: Optional[float] = None
    schedule: Optional[StepSchedule] = None
    stop_tol: float = 0.0
    stop_rule: str = "none"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if int(self.kmax) != self.kmax or self.kmax < 0:
            raise ParameterError(f"kmax ≥ 0 violated: kmax={self.kmax}")
        if not self.stop_tol >= 0.0:
            raise ParameterError(f"stop_tol ≥ 0 violated: stop_tol={self.stop_tol}")

    def resolved_schedule(self):
        if self.schedule is not None:
            return self.schedule
        if self.method == "km":
            return constant(0.5)
        if self.method == "halpern":
            return halpern_lieder()
        return None

    def resolved_step(self, theta):
        if self.step is not None:
            return float(self.step)
        if self.method == "fast_km":
            return max_step_fast_km(theta)
        if self.method == "fast_ogda":
            return 0.95 * max_step_fast_ogda(theta)
        return None

    def validate(self, theta):
        """Check parameter bounds against the operator's ``θ``.

        Raises :class:`ParameterError` naming the violated inequality.
        """
        if self.method in ("fast_km", "fast_ogda") and not self.alpha > 2.0:
            raise ParameterError(f"α > 2 violated: alpha={self.alpha}")
        s = self.resolved_step(theta)
        if self.method == "fast_km":
            bound = max_step_fast_km(theta)
            if not 0.0 < s <= bound * (1.0 + 1e-15):
                raise ParameterError(f"0 < s ≤ 1/θ violated: s={s}, 1/θ={bound:g}")
        elif self.method == "fast_ogda":
            bound = max_step_fast_ogda(theta)
            if not 0.0 < s < bound:
                raise ParameterError(
                    f"0 < s < max{{1/(4θ), (1-θ)/(2θ)}} violated: s={s}, bound={bound:g}"
                )
        sched = self.resolved_schedule()
        if sched is not None and self.kmax > 0:
            if self.method == "halpern":
                upper, text = 1.0, "s_k ∈ (0, 1]"
            elif sched.upper is not None:
                upper, text = sched.upper, f"s_k ∈ (0, {sched.upper:g}]"
            else:
                upper, text = 1.0 / theta, "s_k ∈ (0, 1/θ]"
            vals = sched.values(self.kmax + 1)
            bad = np.flatnonzero(~((vals > 0.0) & (vals <= upper * (1.0 + 1e-15))))
            if bad.size:
                k = int(bad[0])
                raise ParameterError(f"{text} violated at k={k}: s_k={vals[k]:g}")


@dataclass
class Trace:
    """Per-iteration record of one solver run (index ``k = 0 .. wall_iterations``)."""

    method: str
    residual: np.ndarray
    velocity: np.ndarray
    iterates: Optional[np.ndarray] = field(default=None, repr=False)
    residual_vectors: Optional[np.ndarray] = field(default=None, repr=False)
    terminated_at: Optional[int] = None
    evaluations: int = 0

    @property
    def ks(self):
        return np.arange(self.residual.shape[0])

    @property
    def wall_iterations(self):
        return self.residual.shape[0] - 1

    @property
    def k_times_residual(self):
        return self.ks * self.residual

    def to_csv(self, path, coordinates=None):
        """Write ``k,residual,velocity,k_times_residual`` plus optional ``x_i`` columns.

        Coordinates are included by default when the dimension is at most 4
        and iterates were stored.
        """
        dim = None if self.iterates is None else self.iterates.shape[1]
        if coordinates is None:
            coordinates = dim is not None and dim <= 4
        if coordinates and dim is None:
            raise ValueError("trace has no stored iterates")
        header = ["k", "residual", "velocity", "k_times_residual"]
        if coordinates:
            header += [f"x_{i}" for i in range(dim)]
        ktr = self.k_times_residual
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(self.residual.shape[0]):
                row = [str(k), fmt(self.residual[k]), fmt(self.velocity[k]), fmt(ktr[k])]
                if coordinates:
                    row += [fmt(v) for v in self.iterates[k]]
                w.writerow(row)


def fmt(v):
    return format(float(v), ".17g")


def read_trace_csv(path, method="trace"):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[:4] != ["k", "residual", "velocity", "k_times_residual"]:
        raise ValueError(f"{path}: unexpected trace header {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(header))
    iterates = data[:, 4:].copy() if len(header) > 4 else None
    return Trace(method, data[:, 1].copy(), data[:, 2].copy(), iterates=iterates)


class _Recorder:
    def __init__(self, kmax, dim, store):
        self.residual = np.empty(kmax + 1)
        self.velocity = np.empty(kmax + 1)
        self.iterates = np.empty((kmax + 1, dim)) if store else None
        self.res_vecs = np.empty((kmax + 1, dim)) if store else None
        self.n = 0

    def add(self, x, x_prev, tx):
        k = self.n
        r = x - tx
        self.residual[k] = math.sqrt(float(np.dot(r, r)))
        self.velocity[k] = 0.0 if x_prev is None else float(np.linalg.norm(x - x_prev))
        if self.iterates is not None:
            self.iterates[k] = x
            self.res_vecs[k] = r
        self.n += 1

    def trace(self, method, terminated_at, evaluations):
        n = self.n
        return Trace(
            method,
            self.residual[:n].copy(),
            self.velocity[:n].copy(),
            None if self.iterates is None else self.iterates[:n].copy(),
            None if self.res_vecs is None else self.res_vecs[:n].copy(),
            terminated_at,
            evaluations,
        )


# overflow is reported through NumericalBlowup instead of numpy warnings
@np.errstate(over="ignore", invalid="ignore")
def run(op, config, x0, x1=None, y0=None, stop_fn=None, store=None):
    """Iterate ``config.method`` on ``op`` from ``x0`` and record a :class:`Trace`.

    Parameters
    ----------
    op : AveragedOperator
        The operator whose fixed point is sought.
    config : SchemeConfig
        Method and parameters; validated against ``op.theta`` first.
    x0 : array_like
        Starting point.
    x1 : array_like, optional
        Second starting point for Fast KM / Fast OGDA (defaults to ``x0``).
        The accelerated proximal point method always uses ``x1 = x0``.
    y0 : array_like, optional
        Fast OGDA auxiliary start (defaults to ``x0``).
    stop_fn : callable, optional
        ``stop_fn(x_k) -> bool``; required for ``stop_rule="feasibility_shadow"``.
    store : bool, optional
        Keep every iterate and residual vector. Defaults to True when
        ``(kmax + 1) * dim <= 2e7``.

    Returns
    -------
    Trace
    """
    config.validate(op.theta)
    x0 = as_vector(x0, op.dim, "x0")
    if config.stop_rule == "feasibility_shadow" and stop_fn is None:
        raise ValueError("stop_rule 'feasibility_shadow' needs stop_fn")
    if store is None:
        store = (config.kmax + 1) * op.dim <= 20_000_000
    rec = _Recorder(config.kmax, op.dim, store)
    counter = [0]
    func = op.func

    def T(x):
        counter[0] += 1
        return np.asarray(func(x), dtype=np.float64)

    def stopped(k):
        if config.stop_rule == "residual_norm":
            return rec.residual[k] <= config.stop_tol
        if config.stop_rule == "feasibility_shadow":
            return bool(stop_fn(x_cur))
        return False

    def check(x, k):
        if not np.all(np.isfinite(x)):
            raise NumericalBlowup(f"{config.method}: non-finite iterate at k={k + 1}", k)

    method = config.method
    kmax = config.kmax
    terminated = None

    if method in ("bp", "km", "halpern"):
        sched = config.resolved_schedule()
        steps = sched.values(kmax) if sched is not None else None
        x_cur, x_prev = x0.copy(), None
        for k in range(kmax + 1):
            tx = T(x_cur)
            rec.add(x_cur, x_prev, tx)
            if stopped(k):
                terminated = k
                break
            if k == kmax:
                break
            if method == "bp":
                x_next = tx
            elif method == "km":
                x_next = step_km(op, x_cur, steps[k], tx=tx)
            else:
                x_next = step_halpern(op, x0, x_cur, steps[k], tx=tx)
            check(x_next, k)
            x_prev, x_cur = x_cur, x_next

    elif method == "appm":
        x_cur = x0.copy()
        jx = T(x_cur)
        rec.add(x_cur, None, jx)
        if stopped(0):
            terminated = 0
        elif kmax >= 1:
            # x_1 = y_1 = x_0, so J(x_1) is the value already computed
            x_prev, y = x0.copy(), x0.copy()
            rec.add(x_cur, x_prev, jx)
            if stopped(1):
                terminated = 1
            k = 1
            while terminated is None and k < kmax:
                x_next, y = step_appm(op, k, x_cur, x_prev, y, jx=jx)
                check(x_next, k)
                x_prev, x_cur = x_cur, x_next
                k += 1
                jx = T(x_cur)
                rec.add(x_cur, x_prev, jx)
                if stopped(k):
                    terminated = k

    elif method == "fast_km":
        alpha, s = config.alpha, config.resolved_step(op.theta)
        x_cur = x0.copy()
        tx = T(x_cur)
        rec.add(x_cur, None, tx)
        if stopped(0):
            terminated = 0
        elif kmax >= 1:
            x_prev, tx_prev = x_cur, tx
            x_cur = x0.copy() if x1 is None else as_vector(x1, op.dim, "x1")
            tx = T(x_cur)
            rec.add(x_cur, x_prev, tx)
            if stopped(1):
                terminated = 1
            k = 1
            while terminated is None and k < kmax:
                x_next = kernels.fast_km_update(x_cur, x_prev, tx, tx_prev, k, alpha, s)
                check(x_next, k)
                x_prev, x_cur, tx_prev = x_cur, x_next, tx
                k += 1
                tx = T(x_cur)
                rec.add(x_cur, x_prev, tx)
                if stopped(k):
                    terminated = k

    else:  # fast_ogda
        alpha, s = config.alpha, config.resolved_step(op.theta)
        x_cur = x0.copy()
        rec.add(x_cur, None, T(x_cur))
        if stopped(0):
            terminated = 0
        elif kmax >= 1:
            y = x0.copy() if y0 is None else as_vector(y0, op.dim, "y0")
            g_prev = y - T(y)
            x_prev = x_cur
            x_cur = x0.copy() if x1 is None else as_vector(x1, op.dim, "x1")
            rec.add(x_cur, x_prev, T(x_cur))
            if stopped(1):
                terminated = 1
            k = 1
            while terminated is None and k < kmax:
                denom = k + alpha
                y = x_cur + (1.0 - alpha / denom) * (x_cur - x_prev) - (alpha * s / (2.0 * denom)) * g_prev
                g = y - T(y)
                x_next = y - 0.5 * s * (1.0 + k / denom) * (g - g_prev)
                check(x_next, k)
                x_prev, x_cur, g_prev = x_cur, x_next, g
                k += 1
                # residual at x_k needs its own evaluation; the scheme itself only uses T(y_k)
                rec.add(x_cur, x_prev, T(x_cur))
                if stopped(k):
                    terminated = k

    return rec.trace(method, terminated, counter[0])
