"""Benchmark DDE systems and history-function families.

Three built-in systems:

``time_dependent_logistic``
    y' = y (1 - y(t - tau(t))),  tau(t) = 2 + sin t
``state_dependent_mackey_glass``
    y' = -a(t) y + b(t) yd^2 / (1 + yd^2) + b(t),  tau(y) = cos(y) / 2,
    b(t) = sin t + sin(sqrt(2t)) + 1/(1 + t^2),  a(t) = 4 + b(t)
``delayed_diffusion``
    u_t = D u_xx + r u (1 - u(x, t - tau)) on a periodic grid (method of lines)

A ``custom`` system is described by expression strings; see :class:`SystemSpec`.
"""
from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import DDEProblem, DelayFunction, DomainError, HistoryFunction, as_state

__all__ = [
    "SYSTEM_NAMES",
    "PRESETS",
    "HISTORY_FAMILIES",
    "SystemSpec",
    "logistic_rhs",
    "mackey_glass_coefficient",
    "mackey_glass_sd_rhs",
    "diffusion_rhs",
    "diffusion_grid",
    "make_history",
    "sample_history_params",
    "build_problem",
    "default_spec",
]

SYSTEM_NAMES = ("time_dependent_logistic", "state_dependent_mackey_glass", "delayed_diffusion")
PRESETS = {
    "time_dependent": "time_dependent_logistic",
    "state_dependent": "state_dependent_mackey_glass",
    "diffusion": "delayed_diffusion",
}
HISTORY_FAMILIES = ("constant", "step", "diffusion_profile")

DEFAULT_PARAMETERS = {
    "time_dependent_logistic": {"tau_offset": 2.0, "tau_amplitude": 1.0, "tF": 20.0, "num_steps": 200},
    "state_dependent_mackey_glass": {"tau_scale": 0.5, "tF": 10.0, "num_steps": 150},
    "delayed_diffusion": {
        "D": 0.01, "r": 0.9, "tau": 2.0, "dx": 0.01, "length": 1.0,
        "tF": 4.0, "num_steps": 100,
    },
}
_REQUIRED = {
    "time_dependent_logistic": ("tau_offset", "tau_amplitude"),
    "state_dependent_mackey_glass": ("tau_scale",),
    "delayed_diffusion": ("D", "r", "tau", "dx", "length"),
    "custom": ("rhs",),
}

# History sampling ranges: training data, out-of-range constants, and the
# step family (tau_max, c0, c1).
TRAIN_RANGE = {
    "time_dependent_logistic": (0.1, 2.0),
    "state_dependent_mackey_glass": (0.1, 1.0),
    "delayed_diffusion": (0.1, 4.0),
}
EXTRAPOLATION_RANGE = {
    "time_dependent_logistic": (2.0, 3.0),
    "state_dependent_mackey_glass": (-1.0, 0.1),
}
STEP_FAMILY = {
    "time_dependent_logistic": {"tau_max": 3.0, "c0": 0.1, "c1": 3.0},
    "state_dependent_mackey_glass": {"tau_max": 0.5, "c0": -1.0, "c1": 1.0},
}
REGIMES = ("train", "extrapolation", "step")


def logistic_rhs(t, y, y_delayed):
    return y * (1.0 - y_delayed)


def mackey_glass_coefficient(t: float) -> float:
    """``sin t + sin(sqrt(2t)) + 1/(1+t^2)``; defined for ``t >= 0``."""
    if t < 0:
        raise DomainError(f"coefficient needs t >= 0, got {t}")
    return math.sin(t) + math.sin(math.sqrt(2.0 * t)) + 1.0 / (1.0 + t * t)


def mackey_glass_sd_rhs(t, y, y_delayed):
    b = mackey_glass_coefficient(t)
    yd2 = y_delayed * y_delayed
    return -(4.0 + b) * y + b * yd2 / (1.0 + yd2) + b


def diffusion_rhs(t, u, u_delayed, D=0.01, r=0.9, dx=0.01):
    """Three-point periodic Laplacian plus delayed logistic reaction."""
    u = np.asarray(u)
    u_delayed = np.asarray(u_delayed)
    if u.shape != u_delayed.shape:
        raise DomainError(f"grid dimension mismatch: {u.shape} vs {u_delayed.shape}")
    lap = np.roll(u, 1) - 2.0 * u + np.roll(u, -1)
    return (D / (dx * dx)) * lap + r * u * (1.0 - u_delayed)


def diffusion_grid(dx: float = 0.01, length: float = 1.0) -> np.ndarray:
    n = int(round(length / dx))
    return np.arange(n) * dx


def make_history(family: str, params: dict, t0: float = 0.0, grid=None) -> HistoryFunction:
    """Build a history function.

    Families
    --------
    constant
        ``{"x0": value}``; scalar or vector. An optional ``"dim"`` broadcasts a scalar.
    step
        ``{"y0", "y1", "t_jump"}``: ``y0`` for ``t <= t_jump``, ``y1`` afterwards.
    diffusion_profile
        ``{"a", "wavenumber"}`` on ``grid``: ``a sin(x) exp(-0.01 t)``, or
        ``a sin(2 pi k x) exp(-0.01 t)`` when ``wavenumber`` k is set.
    """
    if family == "constant":
        x0 = np.array(params["x0"], dtype=np.float64, ndmin=1)
        if "dim" in params and x0.size == 1:
            x0 = np.full(int(params["dim"]), x0[0])
        return HistoryFunction.constant(x0, t0=t0)
    if family == "step":
        y0 = as_state(params["y0"])
        y1 = as_state(params["y1"])
        if "dim" in params:
            y0 = np.broadcast_to(y0, (int(params["dim"]),)).copy()
            y1 = np.broadcast_to(y1, (int(params["dim"]),)).copy()
        t_jump = float(params["t_jump"])
        if t_jump > t0:
            raise ValueError("t_jump must lie in the history domain")

        def phi(t):
            return y0.copy() if t <= t_jump else y1.copy()

        return HistoryFunction(phi, t0=t0, known_jumps=[t_jump], jump_orders=[0])
    if family == "diffusion_profile":
        if grid is None:
            raise ValueError("diffusion_profile history needs a spatial grid")
        a = float(params["a"])
        k = params.get("wavenumber")
        x = np.asarray(grid, dtype=np.float64)
        profile = a * (np.sin(x) if k is None else np.sin(2.0 * np.pi * float(k) * x))
        profile.setflags(write=False)

        def phi(t):
            return profile * math.exp(-0.01 * t)

        return HistoryFunction(phi, t0=t0)
    raise ValueError(f"unknown history family {family!r}; expected one of {HISTORY_FAMILIES}")


def sample_history_params(name: str, rng: np.random.Generator, regime: str = "train"):
    """Draw ``(family, params)`` for a system under a sampling regime."""
    if regime == "train":
        lo, hi = TRAIN_RANGE[name]
        v = float(rng.uniform(lo, hi))
        if name == "delayed_diffusion":
            return "diffusion_profile", {"a": v}
        return "constant", {"x0": v}
    if regime == "extrapolation":
        if name not in EXTRAPOLATION_RANGE:
            raise ValueError(f"no extrapolation regime for {name}")
        lo, hi = EXTRAPOLATION_RANGE[name]
        return "constant", {"x0": float(rng.uniform(lo, hi))}
    if regime == "step":
        if name not in STEP_FAMILY:
            raise ValueError(f"no step-history regime for {name}")
        s = STEP_FAMILY[name]
        t_jump = float(rng.uniform(-s["tau_max"], 0.0))
        y0, y1 = (float(v) for v in rng.uniform(s["c0"], s["c1"], size=2))
        return "step", {"y0": y0, "y1": y1, "t_jump": t_jump}
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


# --- custom systems from expression strings ---------------------------------

_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp, "log": math.log,
    "sqrt": math.sqrt, "tanh": math.tanh, "abs": abs, "min": min, "max": max,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
    ast.Call, ast.Subscript, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod,
    ast.USub, ast.UAdd, ast.IfExp, ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


def _compile_expr(src: str, names):
    """Compile an arithmetic expression over ``names`` and whitelisted math functions."""
    tree = ast.parse(src, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax {type(node).__name__} in {src!r}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS \
                and node.id not in _CONSTS:
            raise ValueError(f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _FUNCS
        ):
            raise ValueError(f"only {sorted(_FUNCS)} may be called in {src!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"only numeric constants allowed in {src!r}")
    code = compile(tree, "<spec>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}
    return code, env


def _custom_problem(spec: "SystemSpec") -> DDEProblem:
    prm = spec.parameters
    dim = int(prm.get("dim", 1))
    rhs_src = prm["rhs"]
    if isinstance(rhs_src, str):
        rhs_src = [rhs_src]
    if len(rhs_src) != dim:
        raise ValueError(f"custom system needs {dim} rhs expressions, got {len(rhs_src)}")
    rhs_code = [_compile_expr(s, {"t", "y", "yd"}) for s in rhs_src]

    delays = []
    for d in prm.get("delays", []):
        kind = d.get("kind", "constant")
        if kind == "constant":
            delays.append(DelayFunction.constant(float(d["value"])))
            continue
        code, env = _compile_expr(d["expr"], {"t", "y"})

        def tau(t, y, code=code, env=env):
            return float(eval(code, env, {"t": t, "y": y}))

        if kind == "time":
            delays.append(DelayFunction(tau, kind="time"))
        elif kind == "state":
            delays.append(DelayFunction(tau, kind="state"))
        else:
            raise ValueError(f"unknown delay kind {kind!r}")

    def vf(t, y, delayed):
        local = {"t": t, "y": y, "yd": delayed}
        return np.array([eval(c, env, local) for c, env in rhs_code], dtype=np.float64)

    t0 = float(prm.get("t0", 0.0))
    hp = dict(spec.history_params)
    hp.setdefault("dim", dim)
    history = make_history(spec.history_family, hp, t0=t0)
    return DDEProblem(vf, delays, history, t0=t0, tF=float(prm.get("tF", 1.0)), name="custom")


@dataclass
class SystemSpec:
    """Serializable description of a problem: system, parameters and history.

    For ``name="custom"`` the parameters hold ``dim``, ``rhs`` (one
    expression per component over ``t``, ``y[i]``, ``yd[k][i]``), ``delays``
    (``{"kind": "constant", "value": v}`` or ``{"kind": "time"|"state",
    "expr": ...}``), ``t0`` and ``tF``.
    """

    name: str
    parameters: dict = field(default_factory=dict)
    history_family: str = "constant"
    history_params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.name not in SYSTEM_NAMES and self.name != "custom":
            raise ValueError(f"unknown system {self.name!r}")
        if self.history_family not in HISTORY_FAMILIES:
            raise ValueError(f"unknown history family {self.history_family!r}")
        merged = dict(DEFAULT_PARAMETERS.get(self.name, {}))
        merged.update(self.parameters)
        self.parameters = merged
        missing = [k for k in _REQUIRED[self.name] if k not in self.parameters]
        if missing:
            raise ValueError(f"system {self.name} is missing parameters {missing}")

    @property
    def dim(self) -> int:
        if self.name == "delayed_diffusion":
            return diffusion_grid(self.parameters["dx"], self.parameters["length"]).size
        return int(self.parameters.get("dim", 1))

    @property
    def tF(self) -> float:
        return float(self.parameters.get("tF", 1.0))

    def with_history(self, family: str, params: dict) -> "SystemSpec":
        return SystemSpec(self.name, dict(self.parameters), family, dict(params), self.seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "parameters": dict(self.parameters),
            "history_family": self.history_family,
            "history_params": dict(self.history_params),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        unknown = set(d) - {"name", "parameters", "history_family", "history_params", "seed"}
        if unknown:
            raise ValueError(f"unknown SystemSpec fields {sorted(unknown)}")
        return cls(
            name=d["name"],
            parameters=dict(d.get("parameters", {})),
            history_family=d.get("history_family", "constant"),
            history_params=dict(d.get("history_params", {})),
            seed=d.get("seed"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SystemSpec":
        return cls.from_dict(json.loads(text))

    def build(self, tF: float | None = None) -> DDEProblem:
        return build_problem(self, tF)


def default_spec(name: str, **history) -> SystemSpec:
    """Spec for a built-in system with its default history family."""
    name = PRESETS.get(name, name)
    family = "diffusion_profile" if name == "delayed_diffusion" else "constant"
    return SystemSpec(name, {}, family, history)


def build_problem(spec: SystemSpec, tF: float | None = None) -> DDEProblem:
    if spec.name == "custom":
        p = _custom_problem(spec)
        if tF is not None:
            p = DDEProblem(p.vector_field, p.delays, p.history, p.t0, tF, p.name)
        return p
    prm = spec.parameters
    tF = float(prm["tF"] if tF is None else tF)
    hp = spec.history_params

    if spec.name == "time_dependent_logistic":
        off, amp = float(prm["tau_offset"]), float(prm["tau_amplitude"])
        delays = [DelayFunction.time_dependent(lambda t: off + amp * math.sin(t))]
        history = make_history(spec.history_family, hp)

        def vf(t, y, d):
            return y * (1.0 - d[0])

    elif spec.name == "state_dependent_mackey_glass":
        scale = float(prm["tau_scale"])
        delays = [DelayFunction.state_dependent(lambda t, y: scale * math.cos(y[0]))]
        history = make_history(spec.history_family, hp)

        def vf(t, y, d):
            return mackey_glass_sd_rhs(t, y, d[0])

    else:
        D, r, dx = float(prm["D"]), float(prm["r"]), float(prm["dx"])
        grid = diffusion_grid(dx, float(prm["length"]))
        delays = [DelayFunction.constant(float(prm["tau"]))]
        hp = dict(hp)
        if spec.history_family != "diffusion_profile":
            hp.setdefault("dim", grid.size)
        history = make_history(spec.history_family, hp, grid=grid)

        def vf(t, u, d):
            return diffusion_rhs(t, u, d[0], D, r, dx)

    p = DDEProblem(vf, delays, history, t0=0.0, tF=tF, name=spec.name)
    if p.dim != spec.dim:
        raise ValueError(f"history dimension {p.dim} does not match system dimension {spec.dim}")
    return p
