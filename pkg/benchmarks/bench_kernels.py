"""Compare numba-compiled kernels with their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Kernel timings call the
compiled dispatcher and its ``py_func`` side by side in one process; the
end-to-end rows run a child process per mode so ``FASTKM_DISABLE_JIT`` is
honoured at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fastkm import kernels
from fastkm._jit import USE_NUMBA, python_version

END_TO_END = {
    "rotation fast-km n=5000 kmax=2000": (
        "from fastkm.experiments import rotation_configs, run_rotation_experiment\n"
        "run_rotation_experiment(5000, 2.0, rotation_configs(['fast-km'], 2000))"
    ),
    "feasibility batch 10x100 kmax=100": (
        "from fastkm import experiments as e\n"
        "m=[e.dr_method(2), e.halpern_method(), e.fast_km_method(30)]\n"
        "e.run_feasibility_batch(e.BatchConfig(1, 10, 100, 1e-12, 100, m))"
    ),
}


def kernel_cases(rng):
    x = rng.standard_normal(10_000)
    xp = rng.standard_normal(10_000)
    u = np.abs(rng.standard_normal(2))
    nu = float(u @ np.abs(rng.standard_normal(2)))
    x0 = 100 * rng.standard_normal(2)
    steps = np.ones(100)
    return {
        "rotation_resolvent n=5000": (kernels.rotation_resolvent, (x, 1.0)),
        "fast_km_update n=5000": (kernels.fast_km_update, (x, xp, 0.5 * x, 0.5 * xp, 10, 3.0, 2.0)),
        "feasibility_trial_relaxed": (kernels.feasibility_trial_relaxed, (u, nu, x0, steps, False, 1e-16)),
        "feasibility_trial_fast_km": (kernels.feasibility_trial_fast_km, (u, nu, x0, 30.0, 2.0, 100, 1e-16)),
    }


def best_of(func, args, repeat):
    func(*args)  # compile / warm caches
    t = timeit.Timer(lambda: func(*args))
    number, _ = t.autorange()
    return min(t.repeat(repeat, number)) / number


def child_seconds(code, disable_jit, repeat):
    env = dict(os.environ, FASTKM_DISABLE_JIT="1" if disable_jit else "0")
    script = (
        "import timeit\n"
        f"setup = {code!r}\n"
        "exec(setup)\n"  # first run pays compilation
        f"print(min(timeit.repeat(setup, number=1, repeat={repeat})))\n"
    )
    out = subprocess.run([sys.executable, "-c", script], env=env, check=True, capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    if not USE_NUMBA:
        print("numba disabled or unavailable; both columns use the numpy path")
    rows = []
    for name, (func, fargs) in kernel_cases(np.random.default_rng(0)).items():
        rows.append((name, best_of(func, fargs, args.repeat), best_of(python_version(func), fargs, args.repeat)))
    if not args.skip_end_to_end:
        for name, code in END_TO_END.items():
            rows.append((name, child_seconds(code, False, args.repeat), child_seconds(code, True, args.repeat)))
    print(f"{'case':<38} {'numba [s]':>12} {'numpy [s]':>12} {'speedup':>8}")
    for name, fast, slow in rows:
        print(f"{name:<38} {fast:12.3e} {slow:12.3e} {slow / fast:8.1f}")


if __name__ == "__main__":
    main()
