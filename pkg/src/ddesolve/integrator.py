"""DDE driver: frozen-delay RK steps, overlapping fixed-point loop, breaking-point tracking."""
from __future__ import annotations

import logging
import math
from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DDEProblem,
    DDESolveError,
    FixedPointDivergence,
    MaxStepsExceeded,
    NonFiniteError,
    SolverConfig,
    VanishingDelayError,
    as_state,
)
from .dense import ConstantInterpolant, Segment, SolutionBuffer
from .rk import DOPRI5, MIN_FACTOR, ButcherTableau, rk_step

__all__ = [
    "Discontinuity",
    "DiscontinuitySet",
    "StepRecord",
    "Solution",
    "StepSizeUnderflow",
    "DDEIntegrator",
    "integrate",
    "detect_discontinuity",
    "bisect_root",
]

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
# Consecutive non-converging overlap iterations tolerated (each one shrinks
# the step) before FixedPointDivergence is raised.
_MAX_FP_FAILURES = 8


class StepSizeUnderflow(DDESolveError):
    kind = "step-size-underflow"


def _bracket_tol(t: float) -> float:
    return 1e-12 * max(1.0, abs(t))


@dataclass(frozen=True, order=True)
class Discontinuity:
    """Breaking point at ``t`` where the ``order``-th derivative may jump.

    ``inferred`` marks points located from rejected-step clusters rather
    than propagated; their order is unknown and they are not propagated.
    """

    t: float
    order: int
    inferred: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("discontinuity order must be >= 0")


class DiscontinuitySet:
    """Ordered set of breaking points, capped at ``cutoff`` derivative order."""

    def __init__(self, cutoff: int = 6):
        self.cutoff = int(cutoff)
        self.items: list[Discontinuity] = []

    @classmethod
    def seeded(cls, history, t0: float, cutoff: int = 6) -> "DiscontinuitySet":
        s = cls(cutoff)
        for t, k in zip(history.known_jumps, history.jump_orders):
            s.add(Discontinuity(t, k))
        s.add(Discontinuity(float(t0), 1))
        return s

    def find(self, t: float) -> int | None:
        tol = _bracket_tol(t)
        for i, d in enumerate(self.items):
            if abs(d.t - t) <= tol:
                return i
        return None

    def add(self, d: Discontinuity) -> bool:
        """Insert ``d``; returns False if it was dropped or merged into an existing point."""
        if d.order > self.cutoff:
            return False
        i = self.find(d.t)
        if i is not None:
            old = self.items[i]
            if d.order < old.order:
                self.items[i] = Discontinuity(old.t, d.order, d.inferred and old.inferred)
            return False
        insort(self.items, d)
        return True

    @property
    def times(self) -> np.ndarray:
        return np.array([d.t for d in self.items])

    @property
    def orders(self) -> list[int]:
        return [d.order for d in self.items]

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __repr__(self):
        inner = ", ".join(f"{d.t:.12g}:{d.order}" for d in self.items)
        return f"DiscontinuitySet({{{inner}}})"


def bisect_root(g, a: float, b: float, ga: float, gb: float, tol: float,
                max_iter: int = 200) -> float:
    """Locate a sign change of ``g`` in ``[a, b]`` to within ``tol``."""
    if gb == 0.0:
        return b
    for _ in range(max_iter):
        if b - a <= tol:
            return 0.5 * (a + b)
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            return m
        gm = g(m)
        if gm == 0.0:
            return m
        if (gm < 0.0) == (ga < 0.0):
            a, ga = m, gm
        else:
            b = m
    logger.warning("bisection did not reach tol=%g on [%r, %r]; using midpoint", tol, a, b)
    return 0.5 * (a + b)


def _find_breaking_point(t_n, t_next, discs, problem, lookup, cutoff, consumed=(),
                         gcache=None):
    """Smallest propagated breaking point in ``(t_n, t_next]``.

    Returns ``(Discontinuity or None, pairs, stale)`` where ``pairs`` are the
    ``(delay index, source time)`` pairs producing that root and ``stale``
    the pairs whose root lies at or before ``t_n``.
    """
    tol = _bracket_tol(t_next)
    candidates = []
    stale = []
    for i, dl in enumerate(problem.delays):
        for d in discs.items:
            if d.order >= cutoff or d.inferred:
                continue
            key = (i, d.t)
            if key in consumed:
                continue
            if dl.kind == "constant":
                root = d.t + dl.value
                if root <= t_n + tol:
                    stale.append((key, root))
                    continue
                if root > t_next + tol:
                    continue
                candidates.append((min(root, t_next), d.order + 1, key))
                continue

            lam = d.t

            def g(s, dl=dl, lam=lam):
                return s - dl(s, lookup(s)) - lam

            cached = gcache.get(key) if gcache is not None else None
            ga = cached[1] if cached is not None and cached[0] == t_n else g(t_n)
            gb = g(t_next)
            if gcache is not None:
                gcache[key] = (t_next, gb)
            if ga == 0.0:
                stale.append((key, t_n))
                continue
            if gb != 0.0 and (ga < 0.0) == (gb < 0.0):
                continue
            root = bisect_root(g, t_n, t_next, ga, gb, tol)
            if root <= t_n + tol:
                stale.append((key, t_n))
                continue
            candidates.append((root, d.order + 1, key))
    if not candidates:
        return None, [], stale
    root = min(c[0] for c in candidates)
    close = [c for c in candidates if c[0] <= root + _bracket_tol(root)]
    order = min(c[1] for c in close)
    return Discontinuity(root, order), [c[2] for c in close], stale


def detect_discontinuity(t_n: float, t_next: float, discs: DiscontinuitySet,
                         problem: DDEProblem, lookup, cutoff: int | None = None,
                         consumed=()):
    """Smallest root in ``(t_n, t_next]`` of ``t - tau_i(t, y(t)) - lambda_s``.

    ``lookup`` evaluates the solution estimate on ``[t0, t_next]``. Only
    sign changes are detected (odd-multiplicity roots). Points that would
    exceed the order cutoff are not returned.
    """
    if cutoff is None:
        cutoff = discs.cutoff
    found, _, _ = _find_breaking_point(t_n, t_next, discs, problem, lookup, cutoff, consumed)
    return found


@dataclass
class StepRecord:
    """Instrumentation for one step attempt."""

    t: float
    h: float
    accepted: bool
    err_norm: float
    n_rhs: int
    overlapped: bool = False
    fp_iterations: int = 0
    fp_deltas: tuple = ()
    truncated_to: float | None = None
    breaking_point: float | None = None


@dataclass
class Solution:
    """Integration result. ``t``/``y`` hold the requested save points."""

    buffer: SolutionBuffer
    discontinuities: DiscontinuitySet
    t: np.ndarray
    y: np.ndarray
    stats: dict
    trace: list = field(default_factory=list, repr=False)

    def __call__(self, t: float) -> np.ndarray:
        return self.buffer(t)

    @property
    def mesh(self) -> np.ndarray:
        b = self.buffer
        return np.array([b.t0] + [s.t_end for s in b.segments])


class _PendingBreak:
    __slots__ = ("disc", "pairs", "h_before")

    def __init__(self, disc, pairs, h_before):
        self.disc = disc
        self.pairs = pairs
        self.h_before = h_before


class _ExtrapolatedSegment:
    """Previous step's polynomial continued past its end, as a trial interpolant."""

    __slots__ = ("seg", "t_start", "t_end")

    def __init__(self, seg, t_start, t_end):
        self.seg = seg
        self.t_start = t_start
        self.t_end = t_end

    def __call__(self, t):
        return self.seg(t)


class DDEIntegrator:
    """Stateful driver; :meth:`step` performs one step attempt.

    Parameters
    ----------
    problem : DDEProblem
    cfg : SolverConfig, optional
    tableau : ButcherTableau
        Embedded pair with a continuous extension. Defaults to Dormand-Prince 5(4).
    """

    def __init__(self, problem: DDEProblem, cfg: SolverConfig | None = None,
                 tableau: ButcherTableau = DOPRI5):
        self.problem = problem
        self.cfg = cfg = cfg or SolverConfig()
        self.tableau = tableau
        self.buffer = SolutionBuffer(problem.history)
        self.t = float(problem.t0)
        self.y = as_state(problem.history(problem.t0))
        self.dim = self.y.shape[0]
        self.discs = DiscontinuitySet.seeded(
            problem.history, problem.t0, cfg.discontinuity_order_cutoff
        )
        self.err_prev = 1.0
        self.n_rhs = 0
        self.stats = {
            "n_steps": 0,
            "n_rejected": 0,
            "n_fp_iterations": 0,
            "n_overlap_steps": 0,
            "n_discontinuities_hit": 0,
            "n_redo": 0,
            "n_rhs": 0,
            "n_rhs_init": 0,
        }
        self.trace: list[StepRecord] = []
        self._consumed: set = set()
        self._gcache: dict = {}
        self._pending: _PendingBreak | None = None
        self._last_seg: Segment | None = None
        self._consecutive_rejects = 0
        self._fp_failures = 0
        self._nonfinite = False
        self.h = self._initial_step()

    def _rhs(self, t, y, delayed):
        self.n_rhs += 1
        return self.problem.vector_field(t, y, delayed)

    def _tau(self, i, dl, t, y):
        tau = dl.value if dl.value is not None else dl(t, y)
        if not tau >= self.cfg.min_delay_guard:
            raise VanishingDelayError(
                f"delay {i} is {tau!r} at t={t}, below the guard {self.cfg.min_delay_guard}"
            )
        return tau

    def _initial_step(self) -> float:
        cfg, p = self.cfg, self.problem
        span = p.tF - p.t0
        if cfg.dt0 is not None:
            return min(cfg.dt0, span, cfg.h_max)
        t0, y0 = self.t, self.y
        taus = [self._tau(i, dl, t0, y0) for i, dl in enumerate(p.delays)]
        delayed = [self.buffer(t0 - tau) for tau in taus]
        f0 = as_state(p.vector_field(t0, y0, delayed), self.dim)
        self.stats["n_rhs_init"] += 1
        scale = cfg.atol + cfg.rtol * np.abs(y0)
        d0 = math.sqrt(np.mean((y0 / scale) ** 2))
        d1 = math.sqrt(np.mean((f0 / scale) ** 2))
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        if taus:
            h = min(h, min(taus))
        return min(h, span, cfg.h_max)

    def _trial_guess(self, t_end):
        if self._last_seg is None:
            return ConstantInterpolant(self.t, t_end, self.y)
        return _ExtrapolatedSegment(self._last_seg, self.t, t_end)

    def _wrms(self, delta, ref):
        scale = self.cfg.atol + self.cfg.rtol * np.abs(ref)
        return math.sqrt(np.mean((delta / scale) ** 2))

    def _attempt(self, t_end):
        """One trial step to ``t_end``; returns (outcome, segment, overlapped, fp deltas)."""
        cfg, tab = self.cfg, self.tableau
        t, y = self.t, self.y
        h = t_end - t
        frontier = self.buffer.frontier
        buf = self.buffer
        delays = self.problem.delays
        state = {"pi": self._trial_guess(t_end), "overlap": False, "pi_state": False}
        tau_of = self._tau
        rhs = self._rhs

        def f_ode(tj, yj):
            pi = state["pi"]
            delayed = []
            for i, dl in enumerate(delays):
                ystate = pi(tj) if (state["pi_state"] and dl.kind == "state") else yj
                s = tj - tau_of(i, dl, tj, ystate)
                if s > frontier:
                    state["overlap"] = True
                    delayed.append(pi(s))
                else:
                    delayed.append(buf(s))
            return rhs(tj, yj, delayed)

        kw = dict(rtol=cfg.rtol, atol=cfg.atol, tableau=tab, err_prev=self.err_prev)
        out = rk_step(f_ode, t, h, y, **kw)
        deltas = []
        overlapped = state["overlap"]
        if overlapped:
            state["pi_state"] = True
            while True:
                state["pi"] = Segment(t, t_end, y, out.y_next, out.stages, tab.P)
                new = rk_step(f_ode, t, h, y, **kw)
                delta = self._wrms(new.y_next - out.y_next, new.y_next)
                deltas.append(delta)
                out = new
                if delta <= cfg.fp_tol:
                    break
                if len(deltas) >= cfg.fp_max_iters:
                    raise FixedPointDivergence(
                        f"overlap iteration on [{t}, {t_end}] did not converge in "
                        f"{cfg.fp_max_iters} sweeps (last change {delta:.3g})"
                    )
        seg = Segment(t, t_end, y, out.y_next, out.stages, tab.P)
        return out, seg, overlapped, deltas

    def _lookup_with(self, seg):
        buf, frontier = self.buffer, self.buffer.frontier

        def lookup(s):
            return buf(s) if s <= frontier else seg(s)

        return lookup

    @property
    def done(self) -> bool:
        return self.t >= self.problem.tF

    def step(self) -> StepRecord:
        """Attempt one step from the current frontier (Algorithm-1 style)."""
        cfg, p = self.cfg, self.problem
        if self.done:
            raise RuntimeError("integration already reached tF")
        total = self.stats["n_steps"] + self.stats["n_rejected"] + self.stats["n_redo"]
        if total >= cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at t={self.t}")

        t = self.t
        pending = self._pending
        if pending is not None:
            t_next = pending.disc.t
        else:
            h = min(self.h, cfg.h_max)
            if h >= (p.tF - t) - 4 * _EPS * max(1.0, abs(p.tF)):
                t_next = p.tF
            else:
                t_next = t + h
        h = t_next - t
        if h <= 16 * _EPS * max(1.0, abs(t)):
            if self._nonfinite:
                raise NonFiniteError(f"non-finite values persist down to step size {h!r} at t={t}")
            raise StepSizeUnderflow(f"step size {h!r} too small at t={t}")

        calls0 = self.n_rhs
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                out, seg, overlapped, deltas = self._attempt(t_next)
        except (NonFiniteError, FixedPointDivergence) as exc:
            # Blow-up or a non-contracting overlap iteration: treat as a
            # rejection with the strongest allowed reduction.
            if isinstance(exc, FixedPointDivergence):
                self._fp_failures += 1
                if self._fp_failures >= _MAX_FP_FAILURES:
                    raise
            self._nonfinite = isinstance(exc, NonFiniteError)
            rec = StepRecord(t=t, h=h, accepted=False, err_norm=math.inf,
                             n_rhs=self.n_rhs - calls0, overlapped=False,
                             fp_iterations=0, fp_deltas=())
            self.stats["n_rhs"] = self.n_rhs
            self.stats["n_rejected"] += 1
            self._consecutive_rejects += 1
            self._pending = None
            self.h = h * MIN_FACTOR
            if cfg.trace:
                self.trace.append(rec)
            return rec
        rec = StepRecord(t=t, h=h, accepted=out.accepted, err_norm=out.err_norm,
                         n_rhs=self.n_rhs - calls0, overlapped=overlapped,
                         fp_iterations=len(deltas), fp_deltas=tuple(deltas))
        self.stats["n_rhs"] = self.n_rhs
        self.stats["n_fp_iterations"] += len(deltas)
        if cfg.trace:
            self.trace.append(rec)

        found = pairs = None
        if cfg.track_discontinuities:
            lookup = self._lookup_with(seg)
            found, pairs, stale = _find_breaking_point(
                t, t_next, self.discs, p, lookup,
                self.discs.cutoff, self._consumed, self._gcache,
            )
            self._consumed.update(key for key, _ in stale)
            if found is not None and found.t < t_next - _bracket_tol(t_next):
                # Redo the step up to the breaking point. Rejected trials are
                # redirected the same way instead of being shrunk blindly.
                h_before = max(h, out.h_next) if out.accepted else out.h_next
                self._pending = _PendingBreak(found, pairs, h_before)
                if out.accepted:
                    self.stats["n_redo"] += 1
                else:
                    self.stats["n_rejected"] += 1
                    self._consecutive_rejects += 1
                rec.truncated_to = found.t
                return rec

        if not out.accepted:
            self.stats["n_rejected"] += 1
            self._consecutive_rejects += 1
            self._pending = None
            self._nonfinite = False
            self.h = out.h_next
            return rec

        if cfg.track_discontinuities:
            hit = None
            if found is not None:
                hit = Discontinuity(t_next, found.order)
                self._consumed.update(pairs)
            if pending is not None:
                # The target came from an earlier trial; confirm it against
                # this step's solution before recording.
                snap = 1e-9 * max(1.0, abs(t_next))
                for key in pending.pairs:
                    if key in self._consumed:
                        continue
                    i, lam = key
                    dl = p.delays[i]
                    if abs(t_next - dl(t_next, out.y_next) - lam) <= snap:
                        self._consumed.add(key)
                        if hit is None or pending.disc.order < hit.order:
                            hit = Discontinuity(t_next, pending.disc.order)
            if hit is not None:
                self.discs.add(hit)
                self.stats["n_discontinuities_hit"] += 1
                rec.breaking_point = t_next

        if cfg.infer_from_rejections and self._consecutive_rejects >= 3:
            self.discs.add(Discontinuity(t_next, self.discs.cutoff, inferred=True))

        self.buffer.append(seg)
        self._last_seg = seg
        self.t = t_next
        self.y = out.y_next
        self.err_prev = max(out.err_norm, 1e-4)
        self.h = out.h_next if pending is None else max(out.h_next, pending.h_before)
        self._pending = None
        self._consecutive_rejects = 0
        self._fp_failures = 0
        self._nonfinite = False
        self.stats["n_steps"] += 1
        if overlapped:
            self.stats["n_overlap_steps"] += 1
        return rec

    def run(self) -> "DDEIntegrator":
        while not self.done:
            self.step()
        return self


def integrate(problem: DDEProblem, cfg: SolverConfig | None = None, save_times=None,
              *, tableau: ButcherTableau = DOPRI5) -> Solution:
    """Integrate ``problem`` over ``[t0, tF]``.

    Parameters
    ----------
    problem : DDEProblem
    cfg : SolverConfig, optional
        Defaults to ``SolverConfig()`` (rtol = atol = 1e-7).
    save_times : array_like, optional
        Sorted times in ``[t0, tF]`` at which to sample the dense output.
        Defaults to the accepted step mesh.

    Returns
    -------
    Solution
    """
    it = DDEIntegrator(problem, cfg, tableau).run()
    if save_times is None:
        ts = np.array([it.buffer.t0] + [s.t_end for s in it.buffer.segments])
    else:
        ts = np.asarray(save_times, dtype=np.float64).ravel()
        if ts.size and (np.any(np.diff(ts) < 0) or ts[0] < problem.t0 or ts[-1] > problem.tF):
            raise ValueError("save_times must be sorted and lie within [t0, tF]")
    ys = it.buffer.sample(ts) if ts.size else np.empty((0, it.dim))
    return Solution(buffer=it.buffer, discontinuities=it.discs, t=ts, y=ys,
                    stats=dict(it.stats), trace=it.trace)
