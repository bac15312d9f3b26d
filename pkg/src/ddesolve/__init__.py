"""Delay differential equation solver with breaking-point tracking.

Supports constant, time-dependent and state-dependent delays using a
Dormand-Prince 5(4) pair with dense output, propagation of derivative
discontinuities, and fixed-point iteration for steps longer than a delay.
"""
__version__ = "0.1.0"

from .core import (
    BudgetExceeded,
    ContiguityError,
    DDEProblem,
    DDESolveError,
    DelayFunction,
    DomainError,
    FixedPointDivergence,
    HistoryFunction,
    MaxStepsExceeded,
    NonFiniteError,
    OutOfRangeError,
    SolverConfig,
    VanishingDelayError,
    eval_delays,
    eval_history,
)
from .dense import Segment, SolutionBuffer, append_segment, eval_solution, eval_with_overlap
from .integrator import (
    DDEIntegrator,
    Discontinuity,
    DiscontinuitySet,
    Solution,
    StepSizeUnderflow,
    detect_discontinuity,
    integrate,
)
from .kernels import BACKEND
from .rk import BS23, DOPRI5, ButcherTableau, StepOutcome, propose_step, rk_step
from .systems import SystemSpec, build_problem, default_spec, make_history
from .oracle import fixed_step_reference, method_of_steps_solve, order_study
from .datagen import DatasetConfig, TrajectoryDataset, add_noise, generate, mse
