"""Command-line front end.

Subcommands: ``rotation``, ``feasibility``, ``diagnose``, ``check``. Exit
codes: 0 success, 1 check violation, 2 usage or parameter error. Every run
writes its fully resolved configuration to ``run.json`` in the output
directory (``--out``, default ``$FASTKM_OUT_DIR`` or ``./fastkm-out``).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import experiments as exp
from . import operators as ops
from .schemes import SchemeConfig, read_trace_csv, run

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
REDUCTION_TOL = 1e-12


class UsageError(Exception):
    pass


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text):
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _default_out():
    return os.environ.get("FASTKM_OUT_DIR", "fastkm-out")


def build_parser():
    p = argparse.ArgumentParser(prog="fastkm", allow_abbrev=False, description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fastkm {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    r = sub.add_parser("rotation", allow_abbrev=False, help="fixed point of the skew-map resolvent")
    r.add_argument("--n", type=int, default=5000)
    r.add_argument("--m-const", type=float, default=2.0)
    r.add_argument("--methods", default="bp,km,halpern,appm,fast-km")
    r.add_argument("--alpha", type=_float_list, default=[3.0], help="comma list; one Fast KM/OGDA run each")
    r.add_argument("--step", type=float, default=None, help="Fast KM/OGDA step (default: largest admissible)")
    r.add_argument("--km-relax", type=float, default=0.5)
    r.add_argument("--kmax", type=int, default=10000)
    r.add_argument("--out", default=None)

    f = sub.add_parser("feasibility", allow_abbrev=False, help="orthant/hyperplane feasibility batch")
    f.add_argument("--n", type=int, default=1)
    f.add_argument("--ntest", type=int, default=10)
    f.add_argument("--ninit", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-12)
    f.add_argument("--kmax", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--methods", default="dr1,dr2,dr3,dr4,dr5,dr6,dr7,dr8,dr9,halpern,fast-km")
    f.add_argument("--alpha", type=_float_list, default=[5.0, 10.0, 30.0, 100.0, 500.0])
    f.add_argument("--step", type=float, default=2.0)
    f.add_argument("--jobs", type=int, default=None)
    f.add_argument("--out", default=None)

    d = sub.add_parser("diagnose", allow_abbrev=False, help="energy and rate diagnostics for a Fast KM trace")
    d.add_argument("--alpha", type=float, default=3.0)
    d.add_argument("--lambda", dest="lam", type=float, default=None)
    d.add_argument("--trace", default=None, help="trace CSV to analyse instead of a fresh run")
    d.add_argument("--n", type=int, default=50)
    d.add_argument("--m-const", type=float, default=2.0)
    d.add_argument("--step", type=float, default=None)
    d.add_argument("--kmax", type=int, default=10000)
    d.add_argument("--burn-in", type=int, default=None)
    d.add_argument("--out", default=None)

    c = sub.add_parser("check", allow_abbrev=False, help="operator self-tests")
    c.add_argument("--operator", choices=["rotation", "dr-feasibility"], default="rotation")
    c.add_argument("--pairs", type=int, default=1000)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--n", type=int, default=1)
    c.add_argument("--m-const", type=float, default=2.0)
    c.add_argument("--theta", type=float, default=None, help="override the declared averagedness constant")
    c.add_argument("--out", default=None)
    return p


def resolved_config(args):
    """Flat dict of every parameter, lists joined by commas."""
    cfg = {"subcommand": args.subcommand}
    for key, val in sorted(vars(args).items()):
        if key == "subcommand":
            continue
        if isinstance(val, list):
            val = ",".join(repr(v) for v in val)
        cfg[key] = val
    cfg["version"] = __version__
    return cfg


def argv_from_config(cfg, out=None):
    """Rebuild a command line from a ``run.json`` record."""
    argv = [cfg["subcommand"]]
    flags = {"lam": "lambda"}
    for key, val in cfg.items():
        if key in ("subcommand", "version", "out") or val is None:
            continue
        argv += [f"--{flags.get(key, key).replace('_', '-')}", str(val)]
    argv += ["--out", out if out is not None else cfg["out"]]
    return argv


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(args):
    if args.out is None:
        args.out = _default_out()
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "run.json"), resolved_config(args))


def cmd_rotation(args):
    methods = _csv_list(args.methods)
    try:
        configs = exp.rotation_configs(methods, args.kmax, args.alpha, args.step, args.km_relax)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    op = ops.make_rotation_resolvent(args.n, args.m_const)
    for _, cfg in configs:
        cfg.validate(op.theta)
    _prepare_out(args)
    traces = exp.run_rotation_experiment(args.n, args.m_const, configs, args.out)
    for label, tr in traces.items():
        print(f"{label:<24} residual[{tr.wall_iterations}] = {tr.residual[-1]:.6e}")
    return EXIT_OK


def _batch_methods(names, alphas, step):
    out = []
    for name in names:
        if name.startswith("dr") and name[2:].isdigit():
            out.append(exp.dr_method(int(name[2:])))
        elif name == "halpern":
            out.append(exp.halpern_method())
        elif name == "fast-km":
            out.extend(exp.fast_km_method(a, step) for a in alphas)
        else:
            raise UsageError(f"unknown feasibility method {name!r} (expected dr1..dr9, halpern, fast-km)")
    return out


def cmd_feasibility(args):
    try:
        methods = _batch_methods(_csv_list(args.methods), args.alpha, args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config = exp.BatchConfig(args.n, args.ntest, args.ninit, args.tol, args.kmax, methods, args.seed)
    if args.jobs is None:
        args.jobs = exp.default_jobs()
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    _prepare_out(args)
    result = exp.run_feasibility_batch(config, jobs=args.jobs)
    exp.write_batch_csv(result, os.path.join(args.out, "batch.csv"))
    print(exp.format_table(result))
    for note in result.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_diagnose(args):
    lo, hi = diag.lambda_window(args.alpha)
    if args.lam is None:
        args.lam = 0.5 * (lo + hi)
    diag.threshold_index(args.alpha, args.lam)  # rejects λ outside the window
    if args.trace is not None:
        trace = read_trace_csv(args.trace)
        if args.step is None:
            raise UsageError("--step is required with --trace")
        x_star, theta = None, None
    else:
        op = ops.make_rotation_resolvent(args.n, args.m_const)
        if args.step is None:
            args.step = 1.0 / op.theta
        cfg = SchemeConfig("fast_km", args.kmax, alpha=args.alpha, step=args.step)
        cfg.validate(op.theta)
        trace = run(op, cfg, exp.rotation_start(args.n), store=True)
        x_star, theta = op.known_fixed_point, op.theta
    if args.burn_in is None:
        args.burn_in = max(1, trace.wall_iterations // 5)
    _prepare_out(args)
    report = diag.diagnose(trace, args.alpha, args.step, args.lam, x_star, theta, args.burn_in)
    _write_json(os.path.join(args.out, "diagnostics.json"), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _max_gap(f, g, xs):
    return max(float(np.max(np.abs(f(x) - g(x)))) / max(1.0, float(np.linalg.norm(x))) for x in xs)


def cmd_check(args):
    rng = np.random.default_rng(args.seed)
    reductions = {}
    if args.operator == "rotation":
        op = ops.make_rotation_resolvent(args.n, args.m_const)
        lin = ops.MonotoneLinearMap(args.n, args.m_const)
        xs = [rng.standard_normal(op.dim) for _ in range(100)]
        reductions["(Id+A)J_A=Id"] = _max_gap(lambda x: op(x) + lin.apply(op(x)), lambda x: x, xs)
        reductions["<Ax,x>=0"] = max(abs(float(np.dot(lin.apply(x), x))) / max(1.0, float(np.dot(x, x))) for x in xs)
    else:
        inst = exp.gen_feasibility(args.n, rng)
        op = ops.make_dr_feasibility(inst.u, inst.nu)
        dim = op.dim

        def proj_h(x):
            return ops.project_hyperplane(inst.u, inst.nu, x)

        def grad_c(x):
            return x - proj_h(x)

        xs = [rng.standard_normal(dim) for _ in range(100)]
        t_dr = ops.make_douglas_rachford(ops.project_nonnegative, proj_h, dim)
        dy_no_c = ops.make_davis_yin(ops.project_nonnegative, proj_h, None, 1.0, None, dim)
        t_fb = ops.make_forward_backward(ops.project_nonnegative, grad_c, 1.0, 1.0, dim)
        dy_no_b = ops.make_davis_yin(ops.project_nonnegative, None, grad_c, 1.0, 1.0, dim)
        reductions["fused T_DR = composed T_DR"] = _max_gap(op, t_dr, xs)
        reductions["T_DY(C=0) = T_DR"] = _max_gap(dy_no_c, t_dr, xs)
        reductions["T_DY(B=0) = T_FB"] = _max_gap(dy_no_b, t_fb, xs)
    if args.theta is not None:
        op = ops.AveragedOperator(op.dim, args.theta, op.func, op.known_fixed_point, f"{op.name}[theta={args.theta:g}]")
    _prepare_out(args)
    rep = ops.check_cocoercivity(op, args.pairs, args.seed)
    failed = [k for k, v in reductions.items() if v > REDUCTION_TOL]
    report = {
        "operator": op.name,
        "theta": op.theta,
        "pairs": rep.num_pairs,
        "violations": rep.violations,
        "worst_margin": rep.worst_margin,
        "reductions": reductions,
        "failed_reductions": failed,
    }
    _write_json(os.path.join(args.out, "check.json"), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    if rep.violations or failed:
        print(f"check failed: {rep.violations} cocoercivity violations, worst margin {rep.worst_margin:.3e}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


COMMANDS = {
    "rotation": cmd_rotation,
    "feasibility": cmd_feasibility,
    "diagnose": cmd_diagnose,
    "check": cmd_check,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.subcommand](args)
    except (ops.ParameterError, UsageError) as exc:
        print(f"fastkm {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
