"""Problem definition types shared by the solver, oracles and systems.

A delay differential equation here has the form

    y'(t) = f(t, y(t), [y(t - tau_1(t, y(t))), ..., y(t - tau_k(t, y(t)))])
    y(t) = phi(t)   for t <= t0

States are flat ``float64`` vectors. Scalar problems use shape ``(1,)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DDESolveError",
    "DomainError",
    "VanishingDelayError",
    "MaxStepsExceeded",
    "FixedPointDivergence",
    "NonFiniteError",
    "ContiguityError",
    "OutOfRangeError",
    "BudgetExceeded",
    "as_state",
    "HistoryFunction",
    "DelayFunction",
    "DDEProblem",
    "SolverConfig",
    "eval_history",
    "eval_delays",
]


class DDESolveError(Exception):
    """Base class for solver errors. ``kind`` is a short machine-readable tag."""

    kind = "solver-error"


class DomainError(DDESolveError, ValueError):
    kind = "domain"


class VanishingDelayError(DDESolveError):
    kind = "vanishing-delay"


class MaxStepsExceeded(DDESolveError):
    kind = "max-steps-exceeded"


class FixedPointDivergence(DDESolveError):
    kind = "fixed-point-divergence"


class NonFiniteError(DDESolveError, FloatingPointError):
    kind = "non-finite"


class ContiguityError(DDESolveError, ValueError):
    kind = "contiguity"


class OutOfRangeError(DDESolveError, ValueError):
    kind = "out-of-range"


class BudgetExceeded(DDESolveError):
    kind = "budget-exceeded"


def as_state(y, dim: int | None = None) -> np.ndarray:
    """Convert ``y`` to a finite 1-d float64 array, optionally checking its size."""
    arr = np.array(y, dtype=np.float64, ndmin=1)
    if arr.ndim != 1:
        arr = arr.ravel()
    if dim is not None and arr.shape[0] != dim:
        raise DomainError(f"expected state of dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("state has non-finite components")
    return arr


class HistoryFunction:
    """Initial function ``phi`` on ``t <= t0``.

    Parameters
    ----------
    func : callable
        ``func(t)`` returning the state at time ``t``.
    t0 : float
        Right end of the history domain.
    known_jumps : sequence of float, optional
        Times ``<= t0`` where ``phi`` or one of its derivatives jumps.
    jump_orders : sequence of int, optional
        Derivative order of each jump (0 = jump in the value). Defaults to 0.
    """

    def __init__(
        self,
        func: Callable[[float], object],
        t0: float = 0.0,
        known_jumps: Sequence[float] = (),
        jump_orders: Sequence[int] | None = None,
    ):
        jumps = tuple(float(t) for t in known_jumps)
        if jump_orders is None:
            orders = (0,) * len(jumps)
        else:
            orders = tuple(int(k) for k in jump_orders)
        if len(orders) != len(jumps):
            raise ValueError("jump_orders must match known_jumps in length")
        if any(b <= a for a, b in zip(jumps, jumps[1:])):
            raise ValueError("known_jumps must be strictly increasing")
        if jumps and jumps[-1] > t0:
            raise ValueError("known_jumps must lie in the history domain t <= t0")
        if any(k < 0 for k in orders):
            raise ValueError("jump orders must be non-negative")
        self.func = func
        self.t0 = float(t0)
        self.known_jumps = jumps
        self.jump_orders = orders

    @classmethod
    def constant(cls, value, t0: float = 0.0) -> "HistoryFunction":
        v = as_state(value)
        v.setflags(write=False)
        return cls(lambda t: v.copy(), t0=t0)

    def __call__(self, t: float) -> np.ndarray:
        if t > self.t0:
            raise DomainError(f"history evaluated at t={t} > t0={self.t0}")
        return np.array(self.func(t), dtype=np.float64, ndmin=1)

    def __repr__(self):
        return f"HistoryFunction(t0={self.t0}, known_jumps={self.known_jumps})"


def eval_history(h: HistoryFunction, t: float) -> np.ndarray:
    return h(t)


@dataclass(frozen=True)
class DelayFunction:
    """A delay ``tau(t, y)``.

    ``kind`` is one of ``"constant"``, ``"time"`` or ``"state"``. Constant
    delays keep their value in ``value`` so they can be propagated exactly.
    """

    func: Callable[[float, np.ndarray], float]
    kind: str = "state"
    value: float | None = None

    KINDS = ("constant", "time", "state")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant delays need a value")

    @classmethod
    def constant(cls, tau: float) -> "DelayFunction":
        tau = float(tau)
        if not tau >= 0:
            raise ValueError("delay must be non-negative")
        return cls(lambda t, y: tau, kind="constant", value=tau)

    @classmethod
    def time_dependent(cls, func: Callable[[float], float]) -> "DelayFunction":
        return cls(lambda t, y: func(t), kind="time")

    @classmethod
    def state_dependent(cls, func: Callable[[float, np.ndarray], float]) -> "DelayFunction":
        return cls(func, kind="state")

    def __call__(self, t: float, y: np.ndarray) -> float:
        if self.value is not None:
            return self.value
        return float(self.func(t, y))


@dataclass(frozen=True)
class DDEProblem:
    """A DDE initial value problem on ``[t0, tF]``.

    ``vector_field(t, y, delayed)`` receives ``delayed`` as a list with one
    state per entry of ``delays``, in the same order. With no delays the
    problem is an ODE and ``delayed`` is empty.
    """

    vector_field: Callable[[float, np.ndarray, list], np.ndarray]
    delays: tuple = ()
    history: HistoryFunction = None
    t0: float = 0.0
    tF: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(self.delays))
        if self.history is None:
            raise ValueError("a history function is required")
        if not self.tF > self.t0:
            raise ValueError("tF must be greater than t0")
        if self.history.t0 != self.t0:
            raise ValueError("history.t0 must equal the problem t0")

    @property
    def y0(self) -> np.ndarray:
        return as_state(self.history(self.t0))

    @property
    def dim(self) -> int:
        return self.y0.shape[0]

    @property
    def n_delays(self) -> int:
        return len(self.delays)


def eval_delays(p: DDEProblem, t: float, y) -> list[float]:
    """Evaluate every delay of ``p`` at ``(t, y)``. Negative delays are a domain error."""
    y = as_state(y, p.dim)
    taus = [d(t, y) for d in p.delays]
    for i, tau in enumerate(taus):
        if not (tau >= 0 and math.isfinite(tau)):
            raise VanishingDelayError(f"delay {i} evaluated to {tau} at t={t}")
    return taus


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits for :func:`ddesolve.integrate`.

    ``fp_tol`` is measured in the weighted RMS norm used for step acceptance,
    so the default 0.1 stops the overlap iteration at a tenth of the local
    error budget.
    """

    rtol: float = 1e-7
    atol: float = 1e-7
    dt0: float | None = None
    max_steps: int = 100_000
    fp_tol: float = 0.1
    fp_max_iters: int = 25
    min_delay_guard: float = 1e-10
    discontinuity_order_cutoff: int = 6
    track_discontinuities: bool = True
    infer_from_rejections: bool = False
    h_max: float = math.inf
    trace: bool = True

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.fp_tol > 0):
            raise ValueError("rtol, atol and fp_tol must be positive")
        if self.max_steps < 1 or self.fp_max_iters < 1:
            raise ValueError("max_steps and fp_max_iters must be >= 1")
        if self.min_delay_guard < 0:
            raise ValueError("min_delay_guard must be >= 0")
        if self.discontinuity_order_cutoff < 0:
            raise ValueError("discontinuity_order_cutoff must be >= 0")
        if self.dt0 is not None and not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")

    def replace(self, **changes) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **changes)
