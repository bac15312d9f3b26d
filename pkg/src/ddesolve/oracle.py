"""Independent reference solvers used to check the main integrator.

Two routes, both deliberately different from the adaptive Dormand-Prince
driver:

* :func:`fixed_step_reference` -- classical RK4 on a uniform grid with cubic
  Lagrange lookups of delayed values on that grid.
* :func:`method_of_steps_solve` -- constant delays only; the span is split at
  every propagated breaking point and each piece is solved as an ODE by
  scipy's DOP853 at tight tolerance.
"""
from __future__ import annotations

import json
import logging
import math
import time
from bisect import bisect_left
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .core import BudgetExceeded, DDEProblem, DomainError, OutOfRangeError, SolverConfig, as_state

__all__ = [
    "FixedStepReference",
    "fixed_step_reference",
    "MethodOfStepsReference",
    "method_of_steps_solve",
    "OrderStudyReport",
    "order_study",
]

logger = logging.getLogger(__name__)


class FixedStepReference:
    """Grid solution ``Y[k] = y(t0 + k h)`` with cubic interpolation between nodes."""

    def __init__(self, problem: DDEProblem, h: float, Y: np.ndarray, overlapped: bool = False):
        self.history = problem.history
        self.t0 = float(problem.t0)
        self.h = float(h)
        self.Y = Y
        self.overlapped = overlapped

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.Y.shape[0])

    @property
    def tF(self) -> float:
        return self.t0 + self.h * (self.Y.shape[0] - 1)

    def __call__(self, t: float) -> np.ndarray:
        if t <= self.t0:
            return self.history(t)
        if t > self.tF + 1e-9 * self.h:
            raise OutOfRangeError(f"t={t} beyond reference end {self.tF}")
        return _grid_lookup(self.Y, self.Y.shape[0], self.t0, self.h, t)

    def sample(self, times) -> np.ndarray:
        return np.array([self(float(t)) for t in times])


def _grid_lookup(Y, n, t0, h, s):
    if n >= 4:
        return kernels.cubic_uniform(Y, n, t0, h, s, np.empty(Y.shape[1]))
    # Fewer than four nodes: Lagrange through whatever is available.
    nodes = np.arange(n, dtype=np.float64)
    x = (s - t0) / h
    out = np.zeros(Y.shape[1])
    for j in range(n):
        w = 1.0
        for m in range(n):
            if m != j:
                w *= (x - nodes[m]) / (nodes[j] - nodes[m])
        out += w * Y[j]
    return out


def fixed_step_reference(problem: DDEProblem, h: float, tF: float | None = None,
                         max_steps: int = 5_000_000) -> FixedStepReference:
    """Classical RK4 with fixed step ``h`` (rounded so the grid ends at ``tF``).

    Delayed values come from the history for ``s <= t0`` and from cubic
    interpolation of the grid otherwise. If a delay is shorter than the step
    the lookup extrapolates from the last four nodes and a warning is logged.
    """
    t0 = float(problem.t0)
    tF = float(problem.tF if tF is None else tF)
    n = int(math.ceil((tF - t0) / h - 1e-9))
    if n > max_steps:
        raise BudgetExceeded(f"{n} fixed steps exceed the budget of {max_steps}")
    if n < 1:
        raise ValueError("need at least one step")
    h = (tF - t0) / n
    y0 = as_state(problem.history(t0))
    d = y0.shape[0]
    Y = np.empty((n + 1, d))
    Y[0] = y0
    history = problem.history
    delays = problem.delays
    f = problem.vector_field
    lookup = _grid_lookup
    warned = [False]

    def F(t, y, avail):
        delayed = []
        for dl in delays:
            tau = dl(t, y)
            if not tau > 0:
                raise DomainError(f"fixed-step reference needs positive delays, got {tau} at t={t}")
            s = t - tau
            if s <= t0:
                delayed.append(history(s))
                continue
            if s > t0 + (avail - 1) * h * (1 + 1e-12) and not warned[0]:
                warned[0] = True
                logger.warning("delay %.3g shorter than step %.3g at t=%.6g; extrapolating",
                               tau, h, t)
            delayed.append(lookup(Y, avail, t0, h, s))
        return np.asarray(f(t, y, delayed), dtype=np.float64)

    half = 0.5 * h
    sixth = h / 6.0
    for k in range(n):
        t = t0 + k * h
        y = Y[k]
        avail = k + 1
        k1 = F(t, y, avail)
        k2 = F(t + half, y + half * k1, avail)
        k3 = F(t + half, y + half * k2, avail)
        k4 = F(t + h, y + h * k3, avail)
        Y[k + 1] = y + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(Y).all():
        raise DomainError("fixed-step reference produced non-finite values")
    return FixedStepReference(problem, h, Y, overlapped=warned[0])


class MethodOfStepsReference:
    """Piecewise dense reference from :func:`method_of_steps_solve`."""

    def __init__(self, problem: DDEProblem, breaks, pieces):
        self.history = problem.history
        self.t0 = float(problem.t0)
        self.breaks = list(breaks)
        self.pieces = pieces
        self._ends = self.breaks[1:]

    @property
    def tF(self) -> float:
        return self.breaks[-1]

    def __call__(self, t: float) -> np.ndarray:
        if t <= self.t0:
            return self.history(t)
        if t > self.tF * (1 + 1e-14) + 1e-14:
            raise OutOfRangeError(f"t={t} beyond reference end {self.tF}")
        i = min(bisect_left(self._ends, t), len(self.pieces) - 1)
        return self.pieces[i](t)

    def sample(self, times) -> np.ndarray:
        return np.array([self(float(t)) for t in times])


def _lattice(seeds, taus, t0, tF, max_points):
    pts = []
    stack = sorted(set(seeds))
    seen = []
    while stack:
        p = stack.pop()
        for tau in taus:
            q = p + tau
            if q >= tF - 1e-12 * max(1.0, abs(tF)):
                continue
            if any(abs(q - s) <= 1e-12 * max(1.0, abs(q)) for s in seen):
                continue
            seen.append(q)
            stack.append(q)
            if q > t0:
                pts.append(q)
            if len(pts) > max_points:
                raise BudgetExceeded(f"more than {max_points} method-of-steps intervals")
    return sorted(pts)


def method_of_steps_solve(problem: DDEProblem, tF: float | None = None, rtol: float = 1e-12,
                          atol: float = 1e-12, max_intervals: int = 64) -> MethodOfStepsReference:
    """Solve a constant-delay DDE interval by interval.

    Interval ends are ``t0`` and the history jumps shifted by every
    non-negative integer combination of the delays. On each interval the
    delayed arguments fall in already-solved intervals or the history, so
    the problem is an ODE there.
    """
    for dl in problem.delays:
        if dl.kind != "constant":
            raise DomainError("method of steps requires constant delays")
        if not dl.value > 0:
            raise DomainError("method of steps requires positive delays")
    t0 = float(problem.t0)
    tF = float(problem.tF if tF is None else tF)
    taus = sorted({dl.value for dl in problem.delays})
    inner = _lattice([t0, *problem.history.known_jumps], taus, t0, tF, max_intervals) if taus else []
    breaks = [t0, *inner, tF]
    if len(breaks) - 1 > max_intervals:
        raise BudgetExceeded(f"{len(breaks) - 1} intervals exceed max_intervals={max_intervals}")

    history = problem.history
    delays = problem.delays
    f = problem.vector_field
    pieces = []
    ends = []

    def lookup(s):
        if s <= t0:
            return history(s)
        i = bisect_left(ends, s)
        if i >= len(pieces):
            # Only reachable through round-off at an interval boundary.
            i = len(pieces) - 1
        return pieces[i](s)

    def rhs(t, y):
        delayed = [lookup(t - dl.value) for dl in delays]
        return np.asarray(f(t, y, delayed), dtype=np.float64)

    y = as_state(history(t0))
    for a, b in zip(breaks[:-1], breaks[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise DomainError(f"method of steps failed on [{a}, {b}]: {sol.message}")
        pieces.append(sol.sol)
        ends.append(b)
        y = sol.y[:, -1].copy()
    return MethodOfStepsReference(problem, breaks, pieces)


@dataclass
class OrderStudyReport:
    """Errors of :func:`ddesolve.integrate` against a reference over a tolerance grid."""

    tolerances: list
    errors: list
    observed_order: float | None
    monotone: bool
    passed: bool
    runtimes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def order_study(problem: DDEProblem, reference, tolerances, n_probe: int = 200,
                cfg: SolverConfig | None = None, **integrate_kwargs) -> OrderStudyReport:
    """Run the integrator at ``rtol = atol = tol`` for each tolerance.

    Records the max-norm error over ``n_probe`` equally spaced points and the
    slope of log(error) against log(tol). Passes when errors decrease
    strictly and the last one is within 10x its tolerance.
    """
    from .integrator import integrate

    cfg = cfg or SolverConfig()
    probe = np.linspace(problem.t0, problem.tF, n_probe)
    ref = np.array([np.asarray(reference(float(t)), dtype=np.float64).ravel() for t in probe])
    tols, errs, runtimes = [], [], []
    for tol in tolerances:
        t_start = time.perf_counter()
        sol = integrate(problem, cfg.replace(rtol=tol, atol=tol), probe, **integrate_kwargs)
        runtimes.append(time.perf_counter() - t_start)
        err = float(np.max(np.abs(sol.y - ref)))
        tols.append(float(tol))
        errs.append(max(err, np.finfo(float).tiny))
    if len(tols) < 3:
        return OrderStudyReport(tols, errs, None, False, False, runtimes)
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    slope = float(np.polyfit(np.log(tols), np.log(errs), 1)[0])
    passed = monotone and errs[-1] <= 10 * tols[-1]
    return OrderStudyReport(tols, errs, slope, monotone, passed, runtimes)
