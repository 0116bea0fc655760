"""Acceptance criteria, one test each.

Every test appends a ``PASS``/``FAIL`` line with its measured values to the
``acceptance criteria`` section of the pytest summary before asserting.
"""

import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from fastkm import experiments as exp
from fastkm.diagnostics import (
    EnergySpec,
    check_energy,
    energy_series,
    lambda_window,
    omega_constants,
    rate_fit,
    rk_series,
    summability_report,
    threshold_index,
)
from fastkm.operators import check_cocoercivity, make_dr_feasibility, make_rotation_resolvent, project_hyperplane
from fastkm.schemes import SchemeConfig, StepSchedule, run, step_appm, step_fast_km

from conftest import ACCEPTANCE_LINES, rotation_start

pytestmark = pytest.mark.acceptance

N, M_CONST, KMAX = 50, 2.0, 10_000
LAM = 1.5


def record(cid, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def warm():
    # compile every kernel once so the timed runs measure iteration cost only
    op = make_rotation_resolvent(2, M_CONST)
    for m in ("bp", "km", "halpern", "appm", "fast_km"):
        run(op, SchemeConfig(m, 3), rotation_start(2))
    exp.run_feasibility_batch(exp.BatchConfig(1, 1, 1, 1e-12, 3, [exp.dr_method(2), exp.halpern_method(), exp.fast_km_method(30)]))
    return op


@pytest.fixture(scope="module")
def timed_trace(warm):
    op = make_rotation_resolvent(N, M_CONST)
    t0 = time.perf_counter()
    tr = run(op, SchemeConfig("fast_km", KMAX, alpha=3.0, step=2.0), rotation_start(N), store=True)
    return op, tr, time.perf_counter() - t0


def test_criterion_1_rate_law(timed_trace):
    _, tr, elapsed = timed_trace
    ratio = tr.k_times_residual[10_000] / tr.k_times_residual[1_000]
    slope = rate_fit(tr.residual, burn_in=2000).loglog_slope
    ok = ratio < 0.10 and slope <= -1.0 and elapsed < 5.0
    record("1", ok, f"k*res(1e4)/k*res(1e3) = {ratio:.4f} (< 0.10), tail slope = {slope:.4f} (<= -1.0), runtime {elapsed:.2f}s (< 5s)")


def test_criterion_2_baseline_ordering(warm):
    op = make_rotation_resolvent(N, M_CONST)
    x0 = rotation_start(N)
    configs = {
        "fast_km": SchemeConfig("fast_km", 5000, alpha=3.0, step=2.0),
        "appm": SchemeConfig("appm", 5000),
        "halpern": SchemeConfig("halpern", 5000, schedule=StepSchedule("halpern_lieder")),
        "km": SchemeConfig("km", 5000, schedule=StepSchedule("constant", 0.5)),
    }
    t0 = time.perf_counter()
    final = {name: float(run(op, cfg, x0, store=False).residual[-1]) for name, cfg in configs.items()}
    elapsed = time.perf_counter() - t0
    ok = (
        2.0 * final["fast_km"] <= final["appm"]
        and 2.0 * final["appm"] <= final["halpern"]
        and 2.0 * final["appm"] <= final["km"]
        and elapsed < 10.0
    )
    detail = ", ".join(f"{k}={v:.3e}" for k, v in final.items())
    record("2", ok, f"final residuals {detail}; need fast_km*2 <= appm, appm*2 <= halpern and km; runtime {elapsed:.2f}s")


def test_criterion_3_alpha_monotone(warm):
    op = make_rotation_resolvent(N, M_CONST)
    finals = [float(run(op, SchemeConfig("fast_km", 5000, alpha=a, step=2.0), rotation_start(N), store=False).residual[-1])
              for a in (3.0, 5.0, 10.0, 20.0)]
    increases = [i for i in range(3) if finals[i + 1] > finals[i]]
    ties = [i for i in increases if finals[i + 1] <= 1.1 * finals[i]]
    ok = len(increases) == 0 or (len(increases) == 1 and len(ties) == 1)
    record("3", ok, "res(5000) at alpha 3,5,10,20 = " + ", ".join(f"{v:.3e}" for v in finals))


def delta_scan(alpha, lam, kmax=10**5):
    w = omega_constants(alpha, lam)
    q = 2.0 * (5 * alpha - 2) / (3 * alpha - 2)
    ks = np.arange(1, kmax + 1, dtype=float)
    positive = (w.w2 * ks + w.w3) ** 2 - q * w.w1 * w.w4 * ks * ks > 0.0
    return int(ks[positive][-1]) + 1 if positive.any() else 1


def test_criterion_4_lemma_diagnostics(timed_trace):
    op, tr, _ = timed_trace
    lo, hi = lambda_window(3.0)
    k_lam = threshold_index(3.0, LAM)
    scanned = delta_scan(3.0, LAM)
    spec = EnergySpec(op.known_fixed_point, LAM, 3.0, 2.0)
    scale = max(1.0, float(energy_series(spec, tr.iterates[:3], tr.residual_vectors[:3])[0]))
    rk = rk_series(3.0, LAM, 2.0, tr.iterates, tr.residual_vectors)
    tail = rk[k_lam - 1:]  # entry i holds k = i + 1
    ok = (
        abs(lo - 1.33715) <= 1e-4 and abs(hi - 1.75) <= 1e-4
        and k_lam == 72 and scanned == 72
        and tail.size == KMAX - k_lam and float(tail.max()) <= 1e-9 * scale
    )
    record("4", ok, f"window ({lo:.6f}, {hi:.6f}), k(1.5) closed form {k_lam}, scan {scanned}, max R_k on [72, 1e4) = {tail.max():.3e}")


def test_criterion_5_energy(timed_trace):
    op, tr, _ = timed_trace
    spec = EnergySpec(op.known_fixed_point, LAM, 3.0, 2.0)
    chk = check_energy(spec, tr.iterates, tr.residual_vectors, op.theta)
    E = chk.energies  # entry i holds k = i + 1
    e1e3, e8e3, e1e4 = E[1000 - 1], E[8000 - 1], E[10_000 - 1]
    drift = abs(e1e4 - e8e3) / e1e3
    plateaus = summability_report(tr.iterates, tr.residual_vectors, op.known_fixed_point, op.theta, 2.0).plateau_ratios
    ok = (
        chk.nonneg_violations == 0
        and drift <= 0.01
        and plateaus["S1"] < 0.05 and plateaus["S2"] < 0.05
    )
    record("5", ok, f"min E = {chk.energy_min:.4e}, |E(1e4)-E(8e3)|/E(1e3) = {drift:.4f} (<= 0.01), "
                    f"E(1e3)={e1e3:.4f} E(8e3)={e8e3:.4f} E(1e4)={e1e4:.4f}, plateau S1={plateaus['S1']:.2e} S2={plateaus['S2']:.2e}")


def test_criterion_6_cocoercivity():
    rot = check_cocoercivity(make_rotation_resolvent(N, M_CONST), 1000, 7)
    inst = exp.gen_feasibility(1, np.random.default_rng(7))
    dr = check_cocoercivity(make_dr_feasibility(inst.u, inst.nu), 1000, 7)
    ok = rot.violations == 0 and dr.violations == 0
    record("6", ok, f"violations rotation={rot.violations}, T_DR={dr.violations} over 1000 pairs each")


def test_criterion_7_feasibility_batch(warm):
    methods = [exp.fast_km_method(30), exp.fast_km_method(100), exp.dr_method(2), exp.halpern_method()]
    cfg = exp.BatchConfig(1, 10, 100, 1e-12, 100, methods, seed=0)
    t0 = time.perf_counter()
    res = exp.run_feasibility_batch(cfg, jobs=1)
    elapsed = time.perf_counter() - t0
    f30, f100 = res.by_name("fast-km[alpha=30,s=2]"), res.by_name("fast-km[alpha=100,s=2]")
    dr, hal = res.by_name("dr2"), res.by_name("halpern")
    ok = (
        f30.ratio == 1.0 and 2.0 <= f30.mean_iters <= 20.0
        and f100.ratio == 1.0 and f100.mean_iters <= f30.mean_iters
        and dr.ratio >= 0.95 and dr.mean_iters <= 30.0
        and hal.ratio <= 0.5
        and elapsed < 60.0
    )
    record("7", ok, f"fast-km30 {f30.ratio:.2f}/{f30.mean_iters:.2f}, fast-km100 {f100.ratio:.2f}/{f100.mean_iters:.2f}, "
                    f"dr(s=1) {dr.ratio:.2f}/{dr.mean_iters:.2f}, halpern {hal.ratio:.2f}; runtime {elapsed:.2f}s")


def test_criterion_8_exactness():
    J = make_rotation_resolvent(1, 2.0)
    errs = {}
    # J_A(1,0): a = 1, so (1/2)(1 - 0, 1 + 0)
    errs["J_A(1,0)"] = np.max(np.abs(J(np.array([1.0, 0.0])) - [0.5, 0.5]))
    # projection of 0 onto <y,(1,5)> = 6 is (6/26)(1,5)
    c = F(6, 26)
    errs["Proj_H"] = np.max(np.abs(project_hyperplane([1.0, 5.0], 6.0, [0.0, 0.0]) - [float(c), float(5 * c)]))
    # Fast KM, x_1 = x_0 = (1,0), s = 1: x_2 = (5/8) x_1 + (3/8) T x_1
    fk = [F(5, 8) * 1 + F(3, 8) * F(1, 2), F(3, 8) * F(1, 2)]
    x = np.array([1.0, 0.0])
    errs["fast_km x_2"] = np.max(np.abs(step_fast_km(J, 3.0, 1.0, 1, x, x) - [float(v) for v in fk]))
    # APPM: y_2 = J x_1 = (1/2,1/2); x_2 = y_2 + (1/3)(y_2 - y_1) - (1/3)(y_1 - x_0) with x_0 = y_1 = x_1
    ap = [F(1, 2) + F(1, 3) * (F(1, 2) - 1), F(1, 2) + F(1, 3) * F(1, 2)]
    errs["appm x_2"] = np.max(np.abs(step_appm(J, 1, x, x, x)[0] - [float(v) for v in ap]))
    ok = fk == [F(13, 16), F(3, 16)] and ap == [F(1, 3), F(2, 3)] and all(e <= 1e-14 for e in errs.values())
    record("8", ok, ", ".join(f"{k} err {v:.1e}" for k, v in errs.items()))


def test_criterion_9_iterate_convergence(timed_trace):
    _, tr, _ = timed_trace
    X = tr.iterates
    step = float(np.linalg.norm(X[10_000] - X[9_900]))
    bound = 1e-6 * (1.0 + float(np.linalg.norm(X[0])))
    final = float(np.linalg.norm(X[10_000]))
    ok = step <= bound and final <= 1e-4
    record("9", ok, f"||x_1e4 - x_9900|| = {step:.3e} (<= {bound:.3e}), ||x_1e4|| = {final:.3e} (<= 1e-4)")
