"""Piecewise-polynomial dense output over the integrated range."""
from __future__ import annotations

from bisect import bisect_left

import numpy as np

from . import kernels
from .core import ContiguityError, HistoryFunction, OutOfRangeError

__all__ = [
    "Segment",
    "ConstantInterpolant",
    "SolutionBuffer",
    "eval_solution",
    "eval_with_overlap",
    "append_segment",
]


class Segment:
    """Continuous extension of one accepted RK step on ``[t_start, t_end]``.

    Stores the stage derivatives ``K`` (shape ``(S, d)``) rather than
    monomial coefficients, so memory per step is ``(S + 2) * d`` floats.
    The polynomial may be evaluated beyond ``t_end``; callers that need a
    range check use :class:`SolutionBuffer` or :func:`eval_with_overlap`.
    """

    __slots__ = ("t_start", "t_end", "h", "y_start", "y_end", "K", "P")

    def __init__(self, t_start, t_end, y_start, y_end, K, P):
        if not t_end > t_start:
            raise ValueError("segment must have t_end > t_start")
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.h = self.t_end - self.t_start
        self.y_start = y_start
        self.y_end = y_end
        self.K = K
        self.P = P

    @property
    def coeffs(self) -> np.ndarray:
        """Monomial coefficients in theta, shape ``(d, q)``; column r multiplies theta**(r+1)."""
        return self.h * (self.P.T @ self.K).T

    @property
    def nbytes(self) -> int:
        return self.K.nbytes + self.y_start.nbytes + self.y_end.nbytes

    def __call__(self, t: float) -> np.ndarray:
        if t == self.t_end:
            return self.y_end.copy()
        if t == self.t_start:
            return self.y_start.copy()
        theta = (t - self.t_start) / self.h
        return kernels.dense_eval(self.y_start, self.K, self.P, self.h, theta,
                                  np.empty_like(self.y_start))

    eval = __call__

    def __repr__(self):
        return f"Segment([{self.t_start}, {self.t_end}], d={self.y_start.shape[0]})"


class ConstantInterpolant:
    """Constant extrapolation ``y(t) = value`` on ``[t_start, t_end]``."""

    __slots__ = ("t_start", "t_end", "value")

    def __init__(self, t_start, t_end, value):
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.value = np.array(value, dtype=np.float64, ndmin=1)

    def __call__(self, t: float) -> np.ndarray:
        return self.value.copy()

    eval = __call__


class SolutionBuffer:
    """History function plus contiguous accepted segments tiling ``[t0, frontier]``."""

    def __init__(self, history: HistoryFunction, t0: float | None = None):
        self.history = history
        self.t0 = float(history.t0 if t0 is None else t0)
        self.segments: list[Segment] = []
        self._ends: list[float] = []

    @property
    def frontier(self) -> float:
        return self._ends[-1] if self._ends else self.t0

    @property
    def nbytes(self) -> int:
        return sum(s.nbytes for s in self.segments)

    def __len__(self):
        return len(self.segments)

    def append(self, seg: Segment) -> None:
        if seg.t_start != self.frontier:
            raise ContiguityError(
                f"segment starts at {seg.t_start}, buffer frontier is {self.frontier}"
            )
        self.segments.append(seg)
        self._ends.append(seg.t_end)

    def __call__(self, t: float) -> np.ndarray:
        if t <= self.t0:
            return self.history(t)
        ends = self._ends
        if not ends or t > ends[-1]:
            raise OutOfRangeError(f"t={t} is beyond the solution frontier {self.frontier}")
        return self.segments[bisect_left(ends, t)](t)

    eval = __call__

    def sample(self, times) -> np.ndarray:
        return np.array([self(float(t)) for t in times])


def eval_solution(buf: SolutionBuffer, t: float) -> np.ndarray:
    return buf(t)


def append_segment(buf: SolutionBuffer, seg: Segment) -> None:
    buf.append(seg)


def eval_with_overlap(buf: SolutionBuffer, pi_n, t: float) -> np.ndarray:
    """Evaluate the buffer up to its frontier and the trial interpolant ``pi_n`` past it."""
    if t <= buf.frontier:
        return buf(t)
    if t > pi_n.t_end:
        raise OutOfRangeError(f"t={t} is beyond the trial interpolant end {pi_n.t_end}")
    return pi_n(t)
