import math

import numpy as np
import pytest
from scipy.optimize import brentq

import ddesolve as dde
from ddesolve.integrator import bisect_root
from ddesolve.oracle import method_of_steps_solve
from ddesolve.rk import DOPRI5
from ddesolve.systems import build_problem, default_spec

from conftest import decay_ode, linear_problem


def test_ode_exponential():
    sol = dde.integrate(decay_ode(), save_times=[1.0])
    assert sol.y[0, 0] == pytest.approx(math.exp(-1), abs=1e-7)
    assert sol.buffer.frontier == 1.0


def test_linear_dde_method_of_steps_values():
    sol = dde.integrate(linear_problem(tF=2.0), dde.SolverConfig(rtol=1e-10, atol=1e-10),
                        [1.0, 2.0])
    assert sol.y[0, 0] == pytest.approx(0.0, abs=1e-8)
    assert sol.y[1, 0] == pytest.approx(-0.5, abs=1e-8)


def test_logistic_equilibrium():
    p = build_problem(default_spec("time_dependent_logistic", x0=1.0))
    sol = dde.integrate(p, save_times=np.linspace(0, 20, 200))
    np.testing.assert_allclose(sol.y, 1.0, atol=1e-12)


def test_step_truncated_at_breaking_point():
    sol = dde.integrate(linear_problem(tF=1.5), dde.SolverConfig(dt0=0.4, h_max=0.4))
    rec = [r for r in sol.trace if r.t == pytest.approx(0.8)]
    assert rec and rec[0].h == pytest.approx(0.4) and rec[0].truncated_to == pytest.approx(1.0)
    assert 1.0 in [pytest.approx(t) for t in sol.mesh]


def test_short_step_skips_fixed_point():
    sol = dde.integrate(linear_problem(tF=0.5), dde.SolverConfig(dt0=0.5))
    first = sol.trace[0]
    assert first.h == 0.5 and not first.overlapped and first.fp_iterations == 0
    assert first.n_rhs == DOPRI5.stages


def test_overlap_branch_converges():
    p = linear_problem(tF=0.5, tau=0.1)
    cfg = dde.SolverConfig(dt0=0.5)
    sol = dde.integrate(p, cfg, [0.5])
    overl = [r for r in sol.trace if r.overlapped]
    assert overl and sol.trace[0].h == 0.5 and sol.trace[0].overlapped
    for r in overl:
        assert 1 <= r.fp_iterations <= cfg.fp_max_iters
        if len(r.fp_deltas) >= 2:
            assert r.fp_deltas[-1] < r.fp_deltas[0]
    exact = method_of_steps_solve(p)(0.5)[0]
    assert sol.y[0, 0] == pytest.approx(exact, abs=1e-5)


def test_rhs_calls_bounded_by_fixed_point_sweeps():
    p = linear_problem(tF=2.0, tau=0.1)
    sol = dde.integrate(p, dde.SolverConfig(dt0=0.5, track_discontinuities=False))
    assert any(r.overlapped for r in sol.trace)
    for r in sol.trace:
        assert r.n_rhs <= DOPRI5.stages * (1 + r.fp_iterations)
    assert sol.stats["n_rhs"] == sum(r.n_rhs for r in sol.trace)


def _lookup(value):
    return lambda s: np.array([value])


def test_detect_constant_delay():
    p = linear_problem(tF=10.0, tau=2.0)
    discs = dde.DiscontinuitySet.seeded(p.history, 0.0)
    found = dde.detect_discontinuity(1.5, 2.5, discs, p, _lookup(1.0))
    assert found.t == pytest.approx(2.0, abs=1e-12) and found.order == 2


def test_detect_time_dependent_root():
    p = dde.DDEProblem(lambda t, y, d: y * (1 - d[0]),
                       [dde.DelayFunction.time_dependent(lambda t: 2 + math.sin(t))],
                       dde.HistoryFunction.constant(0.5), 0.0, 5.0)
    discs = dde.DiscontinuitySet.seeded(p.history, 0.0)
    found = dde.detect_discontinuity(2.0, 3.0, discs, p, _lookup(0.5))
    root = brentq(lambda t: t - 2 - math.sin(t), 2.0, 3.0, xtol=1e-15)
    assert found.t == pytest.approx(root, abs=1e-10)
    assert found.t == pytest.approx(2.554, abs=1e-3)


def test_detect_nothing():
    p = linear_problem(tF=10.0, tau=2.0)
    discs = dde.DiscontinuitySet.seeded(p.history, 0.0)
    assert dde.detect_discontinuity(0.5, 1.5, discs, p, _lookup(1.0)) is None


def test_detect_respects_cutoff():
    p = linear_problem(tF=10.0, tau=2.0)
    discs = dde.DiscontinuitySet(cutoff=1)
    discs.add(dde.Discontinuity(0.0, 1))
    assert dde.detect_discontinuity(1.5, 2.5, discs, p, _lookup(1.0)) is None


def test_bisect_root():
    r = bisect_root(lambda t: t**3 - 2, 0.0, 2.0, -2.0, 6.0, 1e-13)
    assert r == pytest.approx(2 ** (1 / 3), abs=1e-12)


def test_discontinuity_set_rules():
    s = dde.DiscontinuitySet(cutoff=3)
    assert s.add(dde.Discontinuity(1.0, 2))
    assert not s.add(dde.Discontinuity(2.0, 4))
    assert not s.add(dde.Discontinuity(1.0 + 1e-14, 1))
    assert s.orders == [1]
    seeded = dde.DiscontinuitySet.seeded(
        dde.HistoryFunction(lambda t: 0.0, known_jumps=[-1.0], jump_orders=[0]), 0.0)
    assert [(d.t, d.order) for d in seeded] == [(-1.0, 0), (0.0, 1)]


@pytest.mark.parametrize("tau", [0.7, 1.0, 2.0])
def test_lattice_constant_delay(tau):
    tF = 8.0
    sol = dde.integrate(linear_problem(tF=tF, tau=tau))
    expect = [k * tau for k in range(int(tF / tau + 1e-9) + 1) if k + 1 <= 6]
    got = sol.discontinuities.times
    assert len(got) == len(expect)
    np.testing.assert_allclose(got, expect, atol=1e-9)
    assert sol.discontinuities.orders == list(range(1, len(expect) + 1))


def test_breaking_points_are_step_boundaries():
    for name, hp in (("time_dependent_logistic", {"x0": 0.5}),
                     ("state_dependent_mackey_glass", {"x0": 0.3})):
        sol = dde.integrate(build_problem(default_spec(name, **hp)))
        mesh = sol.mesh
        for d in sol.discontinuities:
            if d.t > 0:
                assert np.min(np.abs(mesh - d.t)) <= 1e-9


def test_step_history_jump_propagates():
    spec = default_spec("time_dependent_logistic").with_history(
        "step", {"y0": 0.5, "y1": 1.5, "t_jump": -1.0})
    sol = dde.integrate(build_problem(spec))
    d = sol.discontinuities
    assert (-1.0, 0) in [(x.t, x.order) for x in d]
    first = brentq(lambda t: t - 2 - math.sin(t) + 1.0, 0.0, 3.0, xtol=1e-15)
    assert any(abs(x.t - first) < 1e-8 and x.order == 1 for x in d)


def test_convergence_with_tracking():
    p = linear_problem(tF=3.0)
    ref = method_of_steps_solve(
        dde.DDEProblem(lambda t, y, d: -y + 0.5 * d[0], [dde.DelayFunction.constant(1.0)],
                       dde.HistoryFunction(lambda t: np.array([math.cos(t)])), 0.0, 3.0))
    probe = np.linspace(0, 3, 200)
    prob = dde.DDEProblem(lambda t, y, d: -y + 0.5 * d[0], [dde.DelayFunction.constant(1.0)],
                          dde.HistoryFunction(lambda t: np.array([math.cos(t)])), 0.0, 3.0)
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        y = dde.integrate(prob, dde.SolverConfig(rtol=tol, atol=tol), probe).y
        errs.append(np.max(np.abs(y - ref.sample(probe))))
    assert errs[0] > errs[1] > errs[2]
    # the polynomial problem is integrated to round-off at every tolerance
    exact = method_of_steps_solve(p).sample(probe)
    for tol in (1e-6, 1e-8, 1e-10):
        y = dde.integrate(p, dde.SolverConfig(rtol=tol, atol=tol), probe).y
        assert np.max(np.abs(y - exact)) < 1e-12


def test_tracking_matters():
    p = linear_problem(tF=3.0)
    probe = np.linspace(0, 3, 301)
    exact = method_of_steps_solve(p).sample(probe)
    base = dde.SolverConfig(rtol=1e-3, atol=1e-3)
    e_on = np.max(np.abs(dde.integrate(p, base, probe).y - exact))
    e_off = np.max(np.abs(dde.integrate(p, base.replace(track_discontinuities=False), probe).y - exact))
    assert e_on < e_off


def test_inferred_discontinuities_mode():
    p = linear_problem(tF=3.0)
    cfg = dde.SolverConfig(rtol=1e-8, atol=1e-8, track_discontinuities=False,
                           infer_from_rejections=True)
    sol = dde.integrate(p, cfg)
    assert sol.buffer.frontier == 3.0
    assert all(d.inferred for d in sol.discontinuities if d.t > 0)


def test_state_dependent_delays_stay_positive():
    spec = default_spec("state_dependent_mackey_glass")
    rng = np.random.default_rng(3)
    for x0 in rng.uniform(0.1, 1.0, size=4):
        p = build_problem(spec.with_history("constant", {"x0": float(x0)}))
        sol = dde.integrate(p)
        taus = [p.delays[0](t, sol(t)) for t in np.linspace(0, p.tF, 300)]
        assert min(taus) > 0.27 and max(taus) <= 0.5


def test_errors():
    with pytest.raises(dde.MaxStepsExceeded):
        dde.integrate(decay_ode(), dde.SolverConfig(max_steps=2))
    vanishing = dde.DDEProblem(lambda t, y, d: -d[0], [dde.DelayFunction.constant(0.0)],
                               dde.HistoryFunction.constant(1.0), 0.0, 1.0)
    with pytest.raises(dde.VanishingDelayError):
        dde.integrate(vanishing)
    blowup = dde.DDEProblem(lambda t, y, d: np.array([np.nan]) if t > 0.5 else -y, [],
                            dde.HistoryFunction.constant(1.0), 0.0, 1.0)
    with pytest.raises(dde.NonFiniteError):
        dde.integrate(blowup)


def test_fixed_point_divergence():
    # Strong delayed feedback, tiny delay, forced huge first step and a single
    # allowed sweep: every shrink still overlaps and never contracts.
    p = dde.DDEProblem(lambda t, y, d: -1e4 * d[0], [dde.DelayFunction.constant(1e-6)],
                       dde.HistoryFunction.constant(1.0), 0.0, 1.0)
    with pytest.raises(dde.FixedPointDivergence):
        dde.integrate(p, dde.SolverConfig(dt0=1.0, fp_max_iters=1, track_discontinuities=False))


def test_fixed_point_failure_shrinks_step():
    # A non-contracting long step is retried with a shorter one.
    p = dde.DDEProblem(lambda t, y, d: -20.0 * d[0], [dde.DelayFunction.constant(0.01)],
                       dde.HistoryFunction.constant(1.0), 0.0, 0.5)
    sol = dde.integrate(p, dde.SolverConfig(dt0=0.5, track_discontinuities=False))
    assert sol.trace[0].h == 0.5 and not sol.trace[0].accepted
    assert sol.buffer.frontier == 0.5


def test_save_times_validation():
    with pytest.raises(ValueError):
        dde.integrate(decay_ode(), save_times=[0.5, 0.2])
    with pytest.raises(ValueError):
        dde.integrate(decay_ode(), save_times=[1.5])


def test_deterministic_and_stats():
    p = build_problem(default_spec("state_dependent_mackey_glass", x0=0.7))
    a = dde.integrate(p, save_times=np.linspace(0, 10, 150))
    b = dde.integrate(p, save_times=np.linspace(0, 10, 150))
    np.testing.assert_array_equal(a.y, b.y)
    for key in ("n_steps", "n_rejected", "n_fp_iterations", "n_discontinuities_hit"):
        assert key in a.stats
    assert a.stats == b.stats


def test_vector_state_problem():
    # y1' = -y2(t-1), y2' = y1(t-1): rotation with delay, compare with method of steps
    p = dde.DDEProblem(lambda t, y, d: np.array([-d[0][1], d[0][0]]),
                       [dde.DelayFunction.constant(1.0)],
                       dde.HistoryFunction(lambda t: np.array([math.cos(t), math.sin(t)])),
                       0.0, 3.0)
    probe = np.linspace(0, 3, 50)
    y = dde.integrate(p, dde.SolverConfig(rtol=1e-10, atol=1e-10), probe).y
    np.testing.assert_allclose(y, method_of_steps_solve(p).sample(probe), atol=1e-8)
