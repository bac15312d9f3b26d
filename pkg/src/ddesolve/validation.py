"""Self-check suite behind ``ddesolve validate``.

Each check builds a small problem, solves it with :func:`ddesolve.integrate`
and compares against an independent reference (closed form, scalar root
finder, method of steps or the fixed-step RK4 oracle).
"""
from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import DDEProblem, DelayFunction, HistoryFunction, SolverConfig
from .integrator import integrate
from .oracle import fixed_step_reference, method_of_steps_solve
from .rk import DOPRI5
from .systems import SYSTEM_NAMES, build_problem, default_spec, sample_history_params

__all__ = ["CheckResult", "Overrides", "CHECKS", "run_checks", "linear_delay_problem"]


@dataclass
class Overrides:
    """Diagnostic overrides applied to the solver settings of every check."""

    track_discontinuities: bool | None = None
    rtol: float | None = None

    def apply(self, cfg: SolverConfig) -> SolverConfig:
        kw = {}
        if self.track_discontinuities is not None:
            kw["track_discontinuities"] = self.track_discontinuities
        if self.rtol is not None:
            kw["rtol"] = kw["atol"] = self.rtol
        return cfg.replace(**kw) if kw else cfg


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<16} {self.seconds:7.2f}s  {self.detail}"


def linear_delay_problem(tF: float = 3.0, tau: float = 1.0) -> DDEProblem:
    """``y' = -y(t - tau)`` with ``y = 1`` for ``t <= 0``."""
    return DDEProblem(lambda t, y, d: -d[0], [DelayFunction.constant(tau)],
                      HistoryFunction.constant(1.0), 0.0, tF, name="linear_delay")


def _linear_exact(t: float) -> float:
    """Closed form of ``y' = -y(t-1)``, ``phi = 1``, on ``[0, 3]`` (method of steps)."""
    if t <= 1:
        return 1.0 - t
    if t <= 2:
        return -2.0 * (t - 1) + (t * t - 1) / 2

    # Antiderivative of the [1, 2] piece; y(t) = y(2) - (F(t-1) - F(1)).
    def F(x):
        return -((x - 1) ** 2) + (x**3 / 3 - x) / 2

    return -0.5 - (F(t - 1) - F(1.0))


def check_analytic(ov: Overrides) -> CheckResult:
    p = linear_delay_problem(3.0)
    cfg = ov.apply(SolverConfig(rtol=1e-10, atol=1e-10))
    sol = integrate(p, cfg, [1.0, 2.0, 3.0])
    e1 = abs(sol.y[0, 0] - 0.0)
    e2 = abs(sol.y[1, 0] + 0.5)
    probe = np.linspace(0, 3, 200)
    ref = method_of_steps_solve(p).sample(probe)
    e_ref = float(np.max(np.abs(integrate(p, cfg, probe).y - ref)))
    ok = e1 <= 1e-8 and e2 <= 1e-8 and e_ref <= 1e-8
    return CheckResult("analytic", ok,
                       f"|y(1)|={e1:.2e} |y(2)+0.5|={e2:.2e} max|y-mos|={e_ref:.2e} (tol 1e-8)")


def check_lattice(ov: Overrides) -> CheckResult:
    p = linear_delay_problem(10.0, tau=2.0)
    sol = integrate(p, ov.apply(SolverConfig()), [10.0])
    found = [(d.t, d.order) for d in sol.discontinuities if d.t > p.t0]
    expect = [2.0, 4.0, 6.0, 8.0, 10.0]
    ok = len(found) == len(expect) and all(abs(t - e) <= 1e-9 for (t, _), e in zip(found, expect))
    orders = [o for _, o in found]
    ok = ok and all(b == a + 1 for a, b in zip(orders, orders[1:]))
    ok = ok and all(o <= sol.discontinuities.cutoff for o in orders)
    return CheckResult("lattice", ok, "found " + ", ".join(f"{t:.10g}(o{o})" for t, o in found))


def check_time_root(ov: Overrides) -> CheckResult:
    p = DDEProblem(lambda t, y, d: y * (1 - d[0]),
                   [DelayFunction.time_dependent(lambda t: 2.0 + math.sin(t))],
                   HistoryFunction.constant(0.5), 0.0, 5.0)
    sol = integrate(p, ov.apply(SolverConfig()), [5.0])
    root = brentq(lambda t: t - 2.0 - math.sin(t), 1.0, 4.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    first = [d.t for d in sol.discontinuities if d.t > p.t0]
    err = abs(first[0] - root) if first else math.inf
    return CheckResult("time_root", err <= 1e-8,
                       f"first={first[0] if first else None!r} root={root!r} |diff|={err:.2e}")


def check_oracle(ov: Overrides, draws: int = 5, seed: int = 2024, h: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = {}
    for name in SYSTEM_NAMES:
        base = default_spec(name)
        grid = np.linspace(0.0, base.tF, int(base.parameters["num_steps"]))
        w = 0.0
        for _ in range(draws):
            family, hp = sample_history_params(name, rng)
            p = build_problem(base.with_history(family, hp))
            y = integrate(p, ov.apply(SolverConfig(trace=False)), grid).y
            ref = fixed_step_reference(p, h).sample(grid)
            w = max(w, float(np.max(np.abs(y - ref))))
        worst[name] = w
    ok = all(v <= 1e-4 for v in worst.values())
    return CheckResult("oracle", ok, " ".join(f"{k}={v:.2e}" for k, v in worst.items()) + " (tol 1e-4)")


def check_overlap(ov: Overrides) -> CheckResult:
    p = linear_delay_problem(0.5, tau=0.1)
    cfg = ov.apply(SolverConfig(dt0=0.5))
    sol = integrate(p, cfg, [0.5])
    ref = fixed_step_reference(p, 1e-5)(0.5)
    overl = [r for r in sol.trace if r.overlapped]
    err = float(abs(sol.y[0, 0] - ref[0]))
    iters = max((r.fp_iterations for r in overl), default=0)
    ok = bool(overl) and iters <= cfg.fp_max_iters and err <= 1e-5
    return CheckResult("overlap", ok, f"overlapped trials={len(overl)} max sweeps={iters} "
                                      f"|y(0.5)-ref|={err:.2e}")


def check_pde_reduction(ov: Overrides, c: float = 0.5) -> CheckResult:
    spec = default_spec("delayed_diffusion").with_history("constant", {"x0": c, "dim": 100})
    pde = build_problem(spec)
    prm = spec.parameters
    r, tau = float(prm["r"]), float(prm["tau"])
    scalar = DDEProblem(lambda t, y, d: r * y * (1 - d[0]), [DelayFunction.constant(tau)],
                        HistoryFunction.constant(c), 0.0, pde.tF)
    grid = np.linspace(0.0, pde.tF, 401)
    cfg = ov.apply(SolverConfig(trace=False))
    U = integrate(pde, cfg, grid).y
    y = integrate(scalar, cfg, grid).y
    err = float(np.max(np.abs(U - y)))
    return CheckResult("pde_reduction", err <= 1e-6, f"max|u_j - y|={err:.2e} (tol 1e-6)")


def check_noise(ov: Overrides, alpha: float = 0.05, seed: int = 42) -> CheckResult:
    from .datagen import add_noise, generate, preset_config

    cfg = preset_config("time_dependent", seed=seed, n_test=0, solver=ov.apply(SolverConfig(trace=False)))
    train, _ = generate(cfg)
    noisy = add_noise(train, alpha, seed=seed + 1)
    ratio = pooled_noise_ratio(noisy.trajectories, train.trajectories)
    return CheckResult("noise", 0.04 <= ratio <= 0.06, f"pooled Var(noise)/Var(signal)={ratio:.4f}")


def pooled_noise_ratio(noisy, clean) -> float:
    """Sum of per-trajectory noise variances over sum of per-trajectory signal variances."""
    noise = np.asarray(noisy) - np.asarray(clean)
    return float(noise.var(axis=1).sum() / np.asarray(clean).var(axis=1).sum())


def check_tracking(ov: Overrides, rtol: float = 1e-3) -> CheckResult:
    p = linear_delay_problem(3.0)
    probe = np.linspace(0.0, 3.0, 301)
    exact = np.array([_linear_exact(t) for t in probe])
    base = SolverConfig(rtol=rtol, atol=rtol)
    on_cfg = ov.apply(base)
    off_cfg = ov.apply(base).replace(track_discontinuities=False)
    e_on = float(np.max(np.abs(integrate(p, on_cfg, probe).y[:, 0] - exact)))
    e_off = float(np.max(np.abs(integrate(p, off_cfg, probe).y[:, 0] - exact)))
    return CheckResult("tracking", e_on < e_off, f"err on={e_on:.2e} off={e_off:.2e}")


def check_complexity(ov: Overrides) -> CheckResult:
    S = DOPRI5.stages
    msgs, ok = [], True
    for d in (1, 4, 16):
        p = DDEProblem(lambda t, y, dl: -dl[0] + 0.1 * np.sin(t), [DelayFunction.constant(1.0)],
                       HistoryFunction.constant(np.ones(d)), 0.0, 3.0)
        sol = integrate(p, ov.apply(SolverConfig()))
        n = len(sol.buffer)
        expected = n * (S + 2) * d * 8
        ok &= sol.buffer.nbytes == expected
        plain = [r for r in sol.trace if r.accepted and not r.overlapped and r.truncated_to is None]
        ok &= bool(plain) and all(r.n_rhs == S for r in plain)
        msgs.append(f"d={d}: {n} steps {sol.buffer.nbytes}B")
    return CheckResult("complexity", bool(ok), "; ".join(msgs) + f"; {S} calls/step")


def check_reproducibility(ov: Overrides) -> CheckResult:
    from .datagen import generate, preset_config, write_dataset

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for i, jobs in enumerate((1, 2)):
            cfg = preset_config("state_dependent", seed=7, n_train=4, n_test=2, noise_alpha=0.05,
                                solver=ov.apply(SolverConfig(trace=False)))
            tr, te = generate(cfg, jobs=jobs)
            outs.append(write_dataset(os.path.join(tmp, str(i)), "sd", tr, te))
        same = all(filecmp.cmp(a, b, shallow=False) for a, b in zip(*outs))
    return CheckResult("reproducibility", same, "byte-identical across runs and --jobs" if same
                       else "files differ")


CHECKS = {
    "analytic": check_analytic,
    "lattice": check_lattice,
    "time_root": check_time_root,
    "oracle": check_oracle,
    "overlap": check_overlap,
    "pde_reduction": check_pde_reduction,
    "noise": check_noise,
    "tracking": check_tracking,
    "complexity": check_complexity,
    "reproducibility": check_reproducibility,
}


def run_checks(only=None, overrides: Overrides | None = None, report=None) -> list:
    """Run the named checks (all by default); solver errors count as failures."""
    ov = overrides or Overrides()
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        try:
            res = CHECKS[name](ov)
        except Exception as exc:  # noqa: BLE001 - reported as a failed check
            res = CheckResult(name, False, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if report is not None:
            report(res)
    return results
