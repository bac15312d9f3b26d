import numpy as np
import pytest

import ddesolve as dde
from ddesolve.dense import ConstantInterpolant
from ddesolve.oracle import fixed_step_reference
from ddesolve.rk import DOPRI5, rk_step

from conftest import linear_problem


def _segment(t0, h, y0, f=lambda t, y: -y):
    out = rk_step(f, t0, h, np.atleast_1d(np.asarray(y0, float)))
    return dde.Segment(t0, t0 + h, np.atleast_1d(np.asarray(y0, float)), out.y_next, out.stages,
                       DOPRI5.P)


def test_empty_buffer_is_history():
    buf = dde.SolutionBuffer(dde.HistoryFunction.constant(1.0))
    assert dde.eval_solution(buf, -0.3)[0] == 1.0
    assert buf.frontier == 0.0
    with pytest.raises(dde.OutOfRangeError):
        buf(0.1)


def test_constant_solution_preserved():
    buf = dde.SolutionBuffer(dde.HistoryFunction.constant(2.0))
    dde.append_segment(buf, _segment(0.0, 1.0, 2.0, lambda t, y: np.zeros_like(y)))
    assert buf(0.5)[0] == 2.0


def test_linear_dde_dense_value():
    sol = dde.integrate(linear_problem(tF=1.0), dde.SolverConfig(rtol=1e-10, atol=1e-10))
    assert sol(0.5)[0] == pytest.approx(0.5, abs=1e-8)


def test_endpoints_exact_and_continuity():
    sol = dde.integrate(linear_problem(tF=3.0))
    segs = sol.buffer.segments
    for a, b in zip(segs, segs[1:]):
        assert a.t_end == b.t_start
        np.testing.assert_array_equal(a(a.t_end), b(b.t_start))
        # the polynomial itself (not the stored endpoint) matches to round-off
        theta_end = a.y_start + a.h * (a.P.T @ a.K).sum(axis=0)
        np.testing.assert_allclose(theta_end, a.y_end, atol=1e-14)


def test_coeffs_match_evaluation():
    seg = _segment(0.2, 0.3, [1.0])
    theta = 0.37
    powers = theta ** np.arange(1, seg.P.shape[1] + 1)
    manual = seg.y_start + seg.coeffs @ powers
    np.testing.assert_allclose(seg(0.2 + theta * 0.3), manual, atol=1e-15)


def test_append_contiguity():
    buf = dde.SolutionBuffer(dde.HistoryFunction.constant(1.0))
    seg = _segment(0.0, 0.1, 1.0)
    buf.append(seg)
    assert buf.frontier == pytest.approx(0.1)
    with pytest.raises(dde.ContiguityError):
        buf.append(_segment(0.5, 0.1, 1.0))


def test_hundred_appends():
    buf = dde.SolutionBuffer(dde.HistoryFunction.constant(1.0))
    t, y, h = 0.0, np.array([1.0]), 0.01
    for _ in range(100):
        seg = _segment(t, h, y)
        buf.append(seg)
        t, y = seg.t_end, seg.y_end
    assert len(buf) == 100
    assert buf.frontier == pytest.approx(100 * h, abs=1e-12)
    assert buf(0.555)[0] == pytest.approx(np.exp(-0.555), abs=1e-10)


def test_segment_validation():
    with pytest.raises(ValueError):
        dde.Segment(1.0, 1.0, np.zeros(1), np.zeros(1), np.zeros((7, 1)), DOPRI5.P)


def test_eval_with_overlap_delegates_below_frontier():
    buf = dde.SolutionBuffer(dde.HistoryFunction.constant(1.0))
    buf.append(_segment(0.0, 0.2, 1.0))
    pi = ConstantInterpolant(0.2, 0.5, 3.0)
    np.testing.assert_array_equal(dde.eval_with_overlap(buf, pi, 0.1), buf(0.1))
    np.testing.assert_array_equal(dde.eval_with_overlap(buf, pi, -1.0), buf(-1.0))
    assert dde.eval_with_overlap(buf, pi, 0.35)[0] == 3.0
    with pytest.raises(dde.OutOfRangeError):
        dde.eval_with_overlap(buf, pi, 0.6)


def test_overlap_interpolant_matches_oracle():
    # Integrate accurately past the tracked breaking points, then take one
    # trial step longer than the delay and inspect the converged interpolant.
    p = linear_problem(tF=1.0, tau=0.1)
    ref = fixed_step_reference(p, 1e-5)
    it = dde.DDEIntegrator(p, dde.SolverConfig(rtol=1e-9, atol=1e-9))
    while it.t < 0.7:
        it.step()
    out, seg, overlapped, deltas = it._attempt(it.t + 0.15)
    assert overlapped and 1 <= len(deltas) <= it.cfg.fp_max_iters
    t = it.t + 0.1
    assert seg(t)[0] == pytest.approx(ref(t)[0], abs=1e-5)


def test_memory_formula():
    d = 3
    p = dde.DDEProblem(lambda t, y, dl: -dl[0], [dde.DelayFunction.constant(1.0)],
                       dde.HistoryFunction.constant(np.ones(d)), 0.0, 2.0)
    sol = dde.integrate(p)
    S = DOPRI5.stages
    assert sol.buffer.nbytes == len(sol.buffer) * (S + 2) * d * 8
    assert all(s.nbytes == (S + 2) * d * 8 for s in sol.buffer.segments)


def test_sample_shape():
    sol = dde.integrate(linear_problem(tF=1.0))
    assert sol.buffer.sample([-1.0, 0.0, 0.5, 1.0]).shape == (4, 1)
