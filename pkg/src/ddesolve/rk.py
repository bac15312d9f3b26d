"""Embedded explicit Runge-Kutta steps and the PI step-size controller."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as Fr

import numpy as np

from . import kernels
from .core import NonFiniteError

__all__ = [
    "ButcherTableau",
    "DOPRI5",
    "BS23",
    "StepOutcome",
    "rk_step",
    "propose_step",
    "SAFETY",
    "MIN_FACTOR",
    "MAX_FACTOR",
]

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


def _f(rows):
    return np.array([[float(x) for x in r] for r in rows], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Explicit embedded RK pair with a continuous extension.

    ``b_err`` are the weights of the embedded (lower order) solution. The
    continuous extension is ``y(t + theta*h) = y + h * sum_j b_j(theta) k_j``
    with ``b_j(theta) = sum_r P[j, r] * theta**(r+1)``.
    """

    name: str
    A: np.ndarray
    b: np.ndarray
    b_err: np.ndarray
    c: np.ndarray
    P: np.ndarray
    order: int
    error_order: int

    def __post_init__(self):
        s = self.stages
        for arr in (self.A, self.b, self.b_err, self.c, self.P):
            arr.setflags(write=False)
        if self.A.shape != (s, s) or self.b.shape != (s,) or self.b_err.shape != (s,):
            raise ValueError("inconsistent tableau shapes")
        if self.P.shape[0] != s:
            raise ValueError("dense-output table needs one row per stage")
        if np.any(np.triu(self.A) != 0):
            raise ValueError("A must be strictly lower triangular")
        if self.c[0] != 0:
            raise ValueError("c_1 must be 0")
        if not np.allclose(self.A.sum(axis=1), self.c, atol=1e-14):
            raise ValueError("row sums of A must equal c")
        if abs(self.b.sum() - 1) > 1e-14 or abs(self.b_err.sum() - 1) > 1e-14:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "e", np.ascontiguousarray(self.b - self.b_err))

    @property
    def stages(self) -> int:
        return self.b.shape[0]

    def dense_weights(self, theta: float) -> np.ndarray:
        powers = theta ** np.arange(1, self.P.shape[1] + 1)
        return self.P @ powers


DOPRI5 = ButcherTableau(
    name="dopri5",
    A=_f([
        [0, 0, 0, 0, 0, 0, 0],
        [Fr(1, 5), 0, 0, 0, 0, 0, 0],
        [Fr(3, 40), Fr(9, 40), 0, 0, 0, 0, 0],
        [Fr(44, 45), Fr(-56, 15), Fr(32, 9), 0, 0, 0, 0],
        [Fr(19372, 6561), Fr(-25360, 2187), Fr(64448, 6561), Fr(-212, 729), 0, 0, 0],
        [Fr(9017, 3168), Fr(-355, 33), Fr(46732, 5247), Fr(49, 176), Fr(-5103, 18656), 0, 0],
        [Fr(35, 384), 0, Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84), 0],
    ]),
    b=_f([[Fr(35, 384), 0, Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84), 0]])[0],
    b_err=_f([[Fr(5179, 57600), 0, Fr(7571, 16695), Fr(393, 640), Fr(-92097, 339200),
               Fr(187, 2100), Fr(1, 40)]])[0],
    c=_f([[0, Fr(1, 5), Fr(3, 10), Fr(4, 5), Fr(8, 9), 1, 1]])[0],
    # Shampine's order-4 continuous extension, powers theta^1..theta^4.
    P=_f([
        [1, Fr(-8048581381, 2820520608), Fr(8663915743, 2820520608), Fr(-12715105075, 11282082432)],
        [0, 0, 0, 0],
        [0, Fr(131558114200, 32700410799), Fr(-68118460800, 10900136933), Fr(87487479700, 32700410799)],
        [0, Fr(-1754552775, 470086768), Fr(14199869525, 1410260304), Fr(-10690763975, 1880347072)],
        [0, Fr(127303824393, 49829197408), Fr(-318862633887, 49829197408), Fr(701980252875, 199316789632)],
        [0, Fr(-282668133, 205662961), Fr(2019193451, 616988883), Fr(-1453857185, 822651844)],
        [0, Fr(40617522, 29380423), Fr(-110615467, 29380423), Fr(69997945, 29380423)],
    ]),
    order=5,
    error_order=4,
)

# Bogacki-Shampine 3(2) with its cubic Hermite extension; used as a
# lower-order contrast in order studies.
BS23 = ButcherTableau(
    name="bs23",
    A=_f([
        [0, 0, 0, 0],
        [Fr(1, 2), 0, 0, 0],
        [0, Fr(3, 4), 0, 0],
        [Fr(2, 9), Fr(1, 3), Fr(4, 9), 0],
    ]),
    b=_f([[Fr(2, 9), Fr(1, 3), Fr(4, 9), 0]])[0],
    b_err=_f([[Fr(7, 24), Fr(1, 4), Fr(1, 3), Fr(1, 8)]])[0],
    c=_f([[0, Fr(1, 2), Fr(3, 4), 1]])[0],
    P=_f([
        [1, Fr(-4, 3), Fr(5, 9)],
        [0, 1, Fr(-2, 3)],
        [0, Fr(4, 3), Fr(-8, 9)],
        [0, -1, 1],
    ]),
    order=3,
    error_order=2,
)


@dataclass
class StepOutcome:
    """Result of one trial step. ``stages`` has shape ``(S, d)``."""

    y_next: np.ndarray
    err_norm: float
    stages: np.ndarray
    accepted: bool
    h_next: float


def propose_step(err_norm: float, h: float, err_prev: float = 1.0, order: int = 5) -> float:
    """PI controller with exponents ``0.7/order`` and ``0.4/order``.

    The factor on ``h`` is clamped to ``[MIN_FACTOR, MAX_FACTOR]``; a zero
    error grows the step by ``MAX_FACTOR``.
    """
    if err_norm == 0.0:
        return h * MAX_FACTOR
    alpha = 0.7 / order
    beta = 0.4 / order
    factor = SAFETY * err_norm ** (-alpha) * max(err_prev, 1e-16) ** beta
    return h * min(MAX_FACTOR, max(MIN_FACTOR, factor))


def rk_step(f_ode, t: float, h: float, y, *, rtol: float = 1e-7, atol: float = 1e-7,
            tableau: ButcherTableau = DOPRI5, err_prev: float = 1.0) -> StepOutcome:
    """Take one embedded RK step of ``y' = f_ode(t, y)`` from ``t`` to ``t + h``.

    The error is the weighted RMS of ``h * sum (b - b_err) k`` with weights
    ``atol + rtol * max(|y|, |y_next|)``; the step is accepted when it is at
    most 1. All ``S`` stages are evaluated (no FSAL reuse).
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    y = np.ascontiguousarray(y, dtype=np.float64)
    K = np.empty((tableau.stages, y.shape[0]))
    if not kernels.rk_stages(f_ode, t, h, y, tableau.A, tableau.c, K):
        raise NonFiniteError(f"non-finite derivative in step starting at t={t}")
    y_next = kernels.combine(y, K, tableau.b, h, np.empty_like(y))
    if not np.isfinite(y_next).all():
        raise NonFiniteError(f"non-finite state at t={t + h}")
    err = kernels.error_norm(y, y_next, K, tableau.e, h, atol, rtol)
    accepted = err <= 1.0
    h_next = propose_step(err, h, err_prev, tableau.error_order + 1)
    if not accepted:
        h_next = min(h_next, h)
    return StepOutcome(y_next=y_next, err_norm=err, stages=K, accepted=accepted, h_next=h_next)
