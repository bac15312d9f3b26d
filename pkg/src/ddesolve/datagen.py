"""Trajectory dataset generation for the benchmark systems.

History parameters for the train and test splits come from one RNG stream
(train drawn first), noise from a second independent stream; both are
children of ``np.random.SeedSequence(seed)``. Trajectories may be solved in
worker processes but are always merged in index order, so the output only
depends on the configuration.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import DDESolveError, SolverConfig
from .integrator import integrate
from .systems import PRESETS, SystemSpec, build_problem, default_spec, sample_history_params

__all__ = [
    "DatasetConfig",
    "TrajectoryDataset",
    "TrajectoryError",
    "preset_config",
    "generate",
    "add_noise",
    "mse",
    "write_dataset",
    "read_dataset",
    "STAT_KEYS",
]

logger = logging.getLogger(__name__)

STAT_KEYS = ("n_steps", "n_rejected", "n_rhs", "n_fp_iterations", "n_overlap_steps",
             "n_discontinuities_hit")


class TrajectoryError(DDESolveError):
    """A solver failure while generating trajectory ``index`` of ``split``."""

    def __init__(self, split: str, index: int, cause: Exception):
        self.split = split
        self.index = index
        self.cause = cause
        self.kind = getattr(cause, "kind", type(cause).__name__)
        super().__init__(f"{split} trajectory {index}: {cause}")


@dataclass
class DatasetConfig:
    """What to generate.

    ``system`` is a template: its history family/params are replaced by the
    per-trajectory draws unless ``regime`` is ``"fixed"``, in which case every
    trajectory uses the template history as is.
    """

    system: SystemSpec
    n_train: int = 256
    n_test: int = 32
    num_steps: int | None = None
    tF: float | None = None
    seed: int = 0
    noise_alpha: float = 0.0
    regime: str = "train"
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(trace=False))

    def __post_init__(self):
        if self.num_steps is None:
            self.num_steps = int(self.system.parameters.get("num_steps", 100))
        if self.tF is None:
            self.tF = float(self.system.tF)
        if self.num_steps < 2:
            raise ValueError("num_steps must be >= 2")
        if not self.tF > 0:
            raise ValueError("tF must be positive (the start time is always 0)")
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("split sizes must be non-negative")
        if not self.noise_alpha >= 0:
            raise ValueError("noise_alpha must be >= 0")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.tF, self.num_steps)

    def to_dict(self) -> dict:
        solver = {k: (None if isinstance(v, float) and math.isinf(v) else v)
                  for k, v in asdict(self.solver).items()}
        return {
            "system": self.system.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "num_steps": self.num_steps,
            "tF": self.tF,
            "seed": self.seed,
            "noise_alpha": self.noise_alpha,
            "regime": self.regime,
            "solver": solver,
        }


def preset_config(preset: str, **overrides) -> DatasetConfig:
    """Dataset configuration for ``time_dependent``, ``state_dependent`` or ``diffusion``."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    return DatasetConfig(system=default_spec(PRESETS[preset]), **overrides)


@dataclass
class TrajectoryDataset:
    """``trajectories`` has shape ``(n, num_steps, d)``."""

    times: np.ndarray
    trajectories: np.ndarray
    history_params: list
    meta: dict = field(default_factory=dict)
    clean: np.ndarray | None = None

    def __len__(self):
        return self.trajectories.shape[0]

    @property
    def shape(self):
        return self.trajectories.shape


def _solve_one(job):
    spec_dict, solver_kw, times, tF = job
    spec = SystemSpec.from_dict(spec_dict)
    cfg = SolverConfig(**solver_kw)
    sol = integrate(build_problem(spec, tF=tF), cfg, times)
    return sol.y, {k: sol.stats.get(k, 0) for k in STAT_KEYS}


def _draw_specs(cfg: DatasetConfig, rng, n):
    specs, params = [], []
    for _ in range(n):
        if cfg.regime == "fixed":
            spec = cfg.system
        else:
            family, hp = sample_history_params(cfg.system.name, rng, cfg.regime)
            spec = cfg.system.with_history(family, hp)
        specs.append(spec)
        params.append({"family": spec.history_family, **spec.history_params})
    return specs, params


def _run(split, specs, cfg, jobs):
    solver_kw = asdict(cfg.solver)
    work = [(s.to_dict(), solver_kw, cfg.times, cfg.tF) for s in specs]
    results = []
    if jobs <= 1 or len(work) <= 1:
        for i, job in enumerate(work):
            try:
                results.append(_solve_one(job))
            except Exception as exc:  # noqa: BLE001 - re-raised with the index
                raise TrajectoryError(split, i, exc) from exc
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_solve_one, job) for job in work]
        for i, fut in enumerate(futures):
            try:
                results.append(fut.result())
            except Exception as exc:  # noqa: BLE001
                for f in futures[i + 1:]:
                    f.cancel()
                raise TrajectoryError(split, i, exc) from exc
    return results


def _summarise(stats):
    return {k: int(sum(s[k] for s in stats)) for k in STAT_KEYS}


def generate(cfg: DatasetConfig, jobs: int = 1):
    """Integrate every trajectory of both splits.

    Returns ``(train, test)``. With ``noise_alpha > 0`` the train split is
    made noisy (its clean copy kept in ``train.clean``); the test split is
    always clean.
    """
    param_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(param_seq)
    train_specs, train_params = _draw_specs(cfg, rng, cfg.n_train)
    test_specs, test_params = _draw_specs(cfg, rng, cfg.n_test)
    jobs = max(1, int(jobs))
    d = cfg.system.dim
    out = []
    for split, specs, params in (("train", train_specs, train_params),
                                 ("test", test_specs, test_params)):
        res = _run(split, specs, cfg, jobs)
        Y = np.array([r[0] for r in res]) if res else np.empty((0, cfg.num_steps, d))
        stats = [r[1] for r in res]
        if not np.isfinite(Y).all():
            bad = int(np.flatnonzero(~np.isfinite(Y).reshape(len(Y), -1).all(axis=1))[0])
            raise TrajectoryError(split, bad, ValueError("non-finite samples"))
        meta = {
            "split": split,
            "config": cfg.to_dict(),
            "version": __version__,
            "solver_stats": _summarise(stats),
            "noise_alpha": 0.0,
        }
        out.append(TrajectoryDataset(cfg.times.copy(), Y, params, meta))
    train, test = out
    if cfg.noise_alpha > 0:
        train = add_noise(train, cfg.noise_alpha, rng=np.random.default_rng(noise_seq))
    return train, test


def add_noise(ds: TrajectoryDataset, alpha: float, seed=None, rng=None) -> TrajectoryDataset:
    """Add Gaussian noise with variance ``alpha * Var_i`` to each trajectory.

    ``Var_i`` is the empirical variance of trajectory ``i`` over its own time
    samples, computed per channel. ``alpha = 0`` returns the data unchanged.
    """
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    clean = ds.trajectories if ds.clean is None else ds.clean
    meta = dict(ds.meta, noise_alpha=float(alpha))
    if alpha == 0:
        return TrajectoryDataset(ds.times, ds.trajectories.copy(), ds.history_params, meta,
                                 clean=None if ds.clean is None else ds.clean.copy())
    rng = rng if rng is not None else np.random.default_rng(seed)
    std = np.sqrt(alpha * clean.var(axis=1, keepdims=True))
    noise = rng.standard_normal(clean.shape) * std
    return TrajectoryDataset(ds.times, clean + noise, ds.history_params, meta, clean=clean)


def mse(pred, truth) -> float:
    """Mean squared error over every trajectory, time point and channel."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def _write_csv(path, ds: TrajectoryDataset):
    n, m, d = ds.trajectories.shape
    header = ",".join(["traj_id", "t"] + [f"y_{j}" for j in range(d)])
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(header + "\n")
        if n == 0:
            return
        body = np.empty((n * m, d + 2))
        body[:, 0] = np.repeat(np.arange(n), m)
        body[:, 1] = np.tile(ds.times, n)
        body[:, 2:] = ds.trajectories.reshape(n * m, d)
        np.savetxt(fh, body, fmt=["%d"] + ["%.17g"] * (d + 1), delimiter=",", newline="\n")


def write_dataset(outdir, name: str, train: TrajectoryDataset, test: TrajectoryDataset) -> list:
    """Write ``<name>_train.csv``, ``<name>_test.csv`` and ``<name>_meta.json``."""
    os.makedirs(outdir, exist_ok=True)
    paths = [os.path.join(outdir, f"{name}_{s}.csv") for s in ("train", "test")]
    _write_csv(paths[0], train)
    _write_csv(paths[1], test)
    meta = {
        "name": name,
        "config": train.meta.get("config"),
        "version": train.meta.get("version", __version__),
        "times": {"t0": float(train.times[0]), "tF": float(train.times[-1]),
                  "num_steps": int(train.times.size)},
        "train": {"n": len(train), "noise_alpha": train.meta.get("noise_alpha", 0.0),
                  "solver_stats": train.meta.get("solver_stats"),
                  "history_params": train.history_params},
        "test": {"n": len(test), "noise_alpha": test.meta.get("noise_alpha", 0.0),
                 "solver_stats": test.meta.get("solver_stats"),
                 "history_params": test.history_params},
    }
    meta_path = os.path.join(outdir, f"{name}_meta.json")
    with open(meta_path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [*paths, meta_path]


def _read_csv(path, times_n):
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        d = len(header) - 2
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return np.empty(0), np.empty((0, times_n, d))
    n = int(data[:, 0].max()) + 1
    Y = data[:, 2:].reshape(n, -1, d)
    return data[: Y.shape[1], 1], Y


def read_dataset(outdir, name: str):
    """Inverse of :func:`write_dataset`; returns ``(train, test)``."""
    with open(os.path.join(outdir, f"{name}_meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    m = meta["times"]["num_steps"]
    out = []
    for split in ("train", "test"):
        t, Y = _read_csv(os.path.join(outdir, f"{name}_{split}.csv"), m)
        if t.size == 0:
            t = np.linspace(meta["times"]["t0"], meta["times"]["tF"], m)
        info = meta[split]
        out.append(TrajectoryDataset(t, Y, info["history_params"],
                                     {"config": meta["config"], "noise_alpha": info["noise_alpha"],
                                      "solver_stats": info["solver_stats"], "split": split}))
    return tuple(out)
