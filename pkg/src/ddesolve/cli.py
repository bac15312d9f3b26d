"""Command-line interface: ``ddesolve {solve,datagen,validate,order-study}``.

Set ``DDE_SOLVE_LOG`` (e.g. ``INFO`` or ``DEBUG``) to change the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .core import DDEProblem, DDESolveError, DelayFunction, HistoryFunction, SolverConfig
from .datagen import DatasetConfig, TrajectoryError, generate, preset_config, write_dataset
from .integrator import integrate
from .oracle import method_of_steps_solve, order_study
from .systems import PRESETS, REGIMES, SYSTEM_NAMES, SystemSpec, build_problem, default_spec
from .validation import CHECKS, Overrides, run_checks

logger = logging.getLogger("ddesolve")


def _fail(kind: str, detail) -> int:
    print(f"error: {kind}: {detail}", file=sys.stderr)
    return 1


def _load_spec(path: str) -> SystemSpec:
    with open(path, encoding="utf-8") as fh:
        return SystemSpec.from_json(fh.read())


def _parse_kv(items):
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ValueError(f"expected KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _solver_config(args, **extra) -> SolverConfig:
    return SolverConfig(rtol=args.rtol, atol=args.atol, max_steps=args.max_steps,
                        track_discontinuities=not args.no_tracking, **extra)


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--rtol", type=float, default=1e-7, help="relative tolerance (default 1e-7)")
    g.add_argument("--atol", type=float, default=1e-7, help="absolute tolerance (default 1e-7)")
    g.add_argument("--max-steps", type=int, default=100_000,
                   help="limit on attempted steps per trajectory (default 100000)")
    g.add_argument("--no-tracking", action="store_true",
                   help="disable breaking-point tracking")


def _solve_spec(args) -> SystemSpec:
    if args.spec:
        spec = _load_spec(args.spec)
    else:
        spec = default_spec(args.system)
    if args.x0 is not None:
        hp = {"x0": args.x0}
        if spec.dim > 1:
            hp["dim"] = spec.dim
        spec = spec.with_history("constant", hp)
    elif args.amplitude is not None:
        spec = spec.with_history("diffusion_profile", {"a": args.amplitude})
    if args.history_family or args.history_param:
        family = args.history_family or spec.history_family
        params = dict(spec.history_params) if family == spec.history_family else {}
        params.update(_parse_kv(args.history_param))
        spec = spec.with_history(family, params)
    if not spec.history_params and spec.history_family != "step":
        # Built-in default history when none was given.
        key = "a" if spec.history_family == "diffusion_profile" else "x0"
        spec = spec.with_history(spec.history_family, {key: 1.0})
    return spec


def cmd_solve(args) -> int:
    try:
        spec = _solve_spec(args)
        problem = build_problem(spec, tF=args.tf)
        cfg = _solver_config(args, trace=False)
        n = args.num_steps or spec.parameters.get("num_steps")
        times = np.linspace(problem.t0, problem.tF, int(n)) if n else None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail("invalid-input", exc)
    t_start = time.perf_counter()
    try:
        sol = integrate(problem, cfg, times)
    except DDESolveError as exc:
        return _fail(getattr(exc, "kind", "solver"), exc)
    elapsed = time.perf_counter() - t_start

    out = args.output
    d = sol.y.shape[1]
    header = ",".join(["t"] + [f"y_{j}" for j in range(d)])
    body = np.column_stack([sol.t, sol.y])
    if out == "-":
        np.savetxt(sys.stdout, body, fmt="%.17g", delimiter=",", header=header, comments="")
    else:
        with open(out, "w", newline="\n", encoding="ascii") as fh:
            np.savetxt(fh, body, fmt="%.17g", delimiter=",", header=header, comments="")
    stats_path = args.stats or (os.path.splitext(out)[0] + "_stats.json" if out != "-" else None)
    if stats_path:
        doc = {
            "spec": spec.to_dict(),
            "t0": problem.t0,
            "tF": problem.tF,
            "rtol": cfg.rtol,
            "atol": cfg.atol,
            "stats": sol.stats,
            "breaking_points": [{"t": bp.t, "order": bp.order} for bp in sol.discontinuities],
            "version": __version__,
        }
        with open(stats_path, "w", newline="\n", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    logger.info("solved %s in %.3fs: %s", spec.name, elapsed, sol.stats)
    return 0


def cmd_datagen(args) -> int:
    try:
        solver = _solver_config(args, trace=False)
        kw = dict(seed=args.seed, n_train=args.n_train, n_test=args.n_test,
                  num_steps=args.num_steps, tF=args.tf, noise_alpha=args.noise_alpha,
                  regime=args.regime, solver=solver)
        if args.spec:
            cfg = DatasetConfig(system=_load_spec(args.spec), **kw)
            name = args.name or os.path.splitext(os.path.basename(args.spec))[0]
        else:
            cfg = preset_config(args.preset, **kw)
            name = args.name or args.preset
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail("invalid-input", exc)
    t_start = time.perf_counter()
    try:
        train, test = generate(cfg, jobs=args.jobs)
    except TrajectoryError as exc:
        return _fail(exc.kind, exc)
    except (DDESolveError, ValueError) as exc:
        return _fail(getattr(exc, "kind", "invalid-input"), exc)
    paths = write_dataset(args.outdir, name, train, test)
    wall = time.perf_counter() - t_start
    st_tr, st_te = train.meta["solver_stats"], test.meta["solver_stats"]
    print(f"system      {cfg.system.name}")
    print(f"trajectories {len(train)} train / {len(test)} test, "
          f"{cfg.num_steps} points on [0, {cfg.tF:g}], dim {cfg.system.dim}")
    print(f"noise_alpha {cfg.noise_alpha:g} (train only)")
    print(f"steps       {st_tr['n_steps'] + st_te['n_steps']} accepted, "
          f"{st_tr['n_rejected'] + st_te['n_rejected']} rejected")
    print(f"wall time   {wall:.2f}s (jobs={args.jobs})")
    for p in paths:
        print(f"wrote       {p}")
    return 0


def cmd_validate(args) -> int:
    ov = Overrides(track_discontinuities=False if args.force_no_tracking else None,
                   rtol=args.force_rtol)
    try:
        results = run_checks(args.only, ov, report=lambda r: print(r.line(), flush=True))
    except KeyError as exc:
        return _fail("invalid-input", exc.args[0])
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return 0 if n_ok == len(results) else 1


def _order_problem(kind: str) -> tuple:
    if kind == "linear":
        # Solution is smooth but not piecewise polynomial, so the error
        # actually depends on the tolerance.
        p = DDEProblem(lambda t, y, d: -y + 0.5 * d[0], [DelayFunction.constant(1.0)],
                       HistoryFunction(lambda t: np.array([math.cos(t)]), 0.0), 0.0, 3.0,
                       name="linear")
        return p, method_of_steps_solve(p)
    p = DDEProblem(lambda t, y, d: -y, [], HistoryFunction.constant(1.0), 0.0, 1.0, name="ode")
    return p, lambda t: np.array([math.exp(-t)])


def cmd_order_study(args) -> int:
    try:
        if args.spec:
            problem = build_problem(_load_spec(args.spec))
            reference = method_of_steps_solve(problem)
        else:
            problem, reference = _order_problem(args.problem)
    except (OSError, ValueError, KeyError, TypeError, DDESolveError) as exc:
        return _fail(getattr(exc, "kind", "invalid-input"), exc)
    try:
        report = order_study(problem, reference, args.tolerances, n_probe=args.probe)
    except DDESolveError as exc:
        return _fail(exc.kind, exc)
    print(f"{'tolerance':>10}  {'max error':>10}")
    for tol, err in zip(report.tolerances, report.errors):
        print(f"{tol:10.1e}  {err:10.3e}")
    order = "n/a" if report.observed_order is None else f"{report.observed_order:.3f}"
    print(f"slope {order}  monotone {report.monotone}  {'PASS' if report.passed else 'FAIL'}")
    if args.json:
        with open(args.json, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddesolve",
        description="Delay differential equation solver and dataset generator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("solve", help="solve one problem and write a trajectory CSV",
                       description="Solve a built-in system or a JSON SystemSpec and write "
                                   "the sampled trajectory (CSV) plus solver statistics (JSON).")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--system", choices=[*SYSTEM_NAMES, *PRESETS], metavar="NAME",
                     help="built-in system: " + ", ".join(SYSTEM_NAMES)
                          + " (aliases: " + ", ".join(PRESETS) + ")")
    src.add_argument("--spec", metavar="FILE", help="JSON SystemSpec file")
    h = p.add_argument_group("history")
    h.add_argument("--x0", type=float, help="constant history value (default 1.0)")
    h.add_argument("--amplitude", type=float,
                   help="amplitude a of the diffusion profile a*sin(x)*exp(-0.01 t)")
    h.add_argument("--history-family", choices=["constant", "step", "diffusion_profile"],
                   help="history family")
    h.add_argument("--history-param", action="append", metavar="KEY=VALUE",
                   help="history parameter (repeatable), e.g. t_jump=-1.0")
    g = p.add_argument_group("output")
    g.add_argument("--tf", type=float, help="final time (default: system tF)")
    g.add_argument("--num-steps", type=int,
                   help="number of equally spaced save points in [t0, tF] "
                        "(default: system setting, else the step mesh)")
    g.add_argument("--output", "-o", default="solution.csv",
                   help="trajectory CSV path, '-' for stdout (default solution.csv)")
    g.add_argument("--stats", metavar="FILE",
                   help="statistics JSON path (default <output>_stats.json)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("datagen", help="generate a train/test trajectory dataset",
                       description="Sample history parameters, integrate every trajectory and "
                                   "write <name>_train.csv, <name>_test.csv, <name>_meta.json.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in dataset preset")
    src.add_argument("--spec", metavar="FILE", help="JSON SystemSpec used as the template")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--n-train", type=int, default=256, help="train trajectories (default 256)")
    p.add_argument("--n-test", type=int, default=32, help="test trajectories (default 32)")
    p.add_argument("--num-steps", type=int, help="save points per trajectory (default: preset)")
    p.add_argument("--tf", type=float, help="final time (default: preset)")
    p.add_argument("--noise-alpha", type=float, default=0.0,
                   help="noise variance as a fraction of each trajectory's variance, "
                        "train split only (default 0)")
    p.add_argument("--regime", choices=[*REGIMES, "fixed"], default="train",
                   help="history sampling regime; 'fixed' uses the --spec file's history "
                        "(default train)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--outdir", default=".", help="output directory (default .)")
    p.add_argument("--name", help="file name prefix (default: preset or spec name)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("validate", help="run the oracle and discontinuity self-checks",
                       description="Run the self-check suite and print a pass/fail table. "
                                   "Exit status 0 iff every selected check passes.")
    p.add_argument("--only", nargs="+", choices=list(CHECKS), metavar="CHECK",
                   help=f"run only these checks: {', '.join(CHECKS)}")
    p.add_argument("--force-no-tracking", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--force-rtol", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("order-study", help="error versus tolerance against a reference",
                       description="Integrate at several tolerances and compare with a "
                                   "reference solution on a fixed probe grid.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--problem", choices=["linear", "ode"], default="linear",
                     help="built-in study problem: y'=-y+0.5y(t-1) with cos history, "
                          "or y'=-y (default linear)")
    src.add_argument("--spec", metavar="FILE",
                     help="JSON SystemSpec with constant delays (method-of-steps reference)")
    p.add_argument("--tolerances", type=float, nargs="+", default=[1e-6, 1e-8, 1e-10],
                   help="rtol = atol values (default 1e-6 1e-8 1e-10)")
    p.add_argument("--probe", type=int, default=200, help="probe points (default 200)")
    p.add_argument("--json", metavar="FILE", help="write the report as JSON")
    p.set_defaults(func=cmd_order_study)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DDE_SOLVE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
