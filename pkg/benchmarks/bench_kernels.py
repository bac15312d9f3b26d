"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]

Times each kernel in isolation on representative shapes (d = 1 scalar
systems, d = 100 diffusion grid) and then a full integration of two
benchmark systems with each backend, in a fresh interpreter so that the
backend selection at import time is honoured.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ddesolve import _pykernels
from ddesolve.rk import DOPRI5

try:
    from ddesolve import _ckernels
except ImportError:  # extension not built
    _ckernels = None

END_TO_END = r"""
import time, ddesolve
from ddesolve.systems import build_problem, default_spec
out = []
for name, hp in [("time_dependent_logistic", {"x0": 0.8}), ("delayed_diffusion", {"a": 2.0})]:
    p = build_problem(default_spec(name, **hp))
    best = float("inf")
    for _ in range(REPEAT):
        t = time.perf_counter(); ddesolve.integrate(p, ddesolve.SolverConfig(trace=False))
        best = min(best, time.perf_counter() - t)
    out.append(f"{name}={best * 1e3:.2f}")
print(ddesolve.BACKEND, *out)
"""


def kernel_cases(d):
    rng = np.random.default_rng(0)
    tab = DOPRI5
    S = tab.stages
    y = rng.standard_normal(d)
    K = rng.standard_normal((S, d))
    Y = rng.standard_normal((1000, d))
    out = np.empty(d)

    def rhs(t, yy):
        return -yy

    return {
        "rk_stages": lambda m: m.rk_stages(rhs, 0.0, 0.01, y, tab.A, tab.c, np.empty((S, d))),
        "combine": lambda m: m.combine(y, K, tab.b, 0.01, out),
        "error_norm": lambda m: m.error_norm(y, y, K, tab.e, 0.01, 1e-7, 1e-7),
        "dense_eval": lambda m: m.dense_eval(y, K, tab.P, 0.01, 0.37, out),
        "cubic_uniform": lambda m: m.cubic_uniform(Y, 1000, 0.0, 0.01, 5.123, out),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    if _ckernels is None:
        print("compiled extension not built; only the python backend is timed")

    print(f"{'kernel':<14} {'d':>4} " + " ".join(f"{n + ' [us]':>12}" for n, _ in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for d in (1, 100):
        for name, fn in kernel_cases(d).items():
            times = []
            for _, mod in backends:
                n = 2000
                t = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n
                times.append(t * 1e6)
            line = f"{name:<14} {d:>4} " + " ".join(f"{t:12.2f}" for t in times)
            if len(times) == 2:
                line += f"   {times[0] / times[1]:7.1f}x"
            print(line)

    print("\nend-to-end integrate (best of %d, ms)" % args.repeat)
    for label, pure in (("python", "1"), ("cython", "")):
        if label == "cython" and _ckernels is None:
            continue
        env = dict(os.environ, DDE_SOLVE_PURE_PYTHON=pure)
        code = END_TO_END.replace("REPEAT", str(args.repeat))
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        print(res.stdout.strip() or res.stderr.strip())


if __name__ == "__main__":
    main()
