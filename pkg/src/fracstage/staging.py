"""Residual spectra and the multistage training loop.

Each correction stage fits the normalized error of the running composite
``u_0 + sum_k eps_k u_k``. Since the operator is linear, the error ``e`` of the
composite solves ``D e - e_xx = -r``, where ``r`` is the composite's residual,
with initial and boundary data equal to the composite's data misfit. Writing
``e = eps u`` with ``eps`` the estimated error amplitude gives a stage problem
with O(1) source ``-r / eps`` and data ``misfit / eps``.

``correction_data="zero"`` drops the misfit and fits zero data instead. The
correction can then only remove interior residual, never a boundary or
initial error left by earlier stages.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .bench import SubdiffusionProblem, l2_relative_error, shift_to_zero_initial
from .l1frac import build_l1_table
from .mesh import SpatialGrid, TemporalMesh, build_spatial, build_temporal
from .model import DenseNet, MultiscaleNet, init_dense, init_multiscale, multiscale_scales
from .train import (
    STAGE1_BUDGET,
    STAGE2_BUDGET,
    LossWeights,
    OptimizerBudget,
    StageTargets,
    TrainReport,
    physics_residual_field,
    train_stage,
)

__all__ = [
    "SamplingWarning",
    "rms",
    "ResidualSpectrum",
    "dominant_frequency",
    "StageConfig",
    "StagePlan",
    "plan_next_stage",
    "CompositeSolution",
    "evaluate_composite",
    "StageRecord",
    "MultistageConfig",
    "correction_targets",
    "run_multistage",
]

log = logging.getLogger(__name__)

UNDERFLOW = 1e-14
CORRECTION_DATA = ("misfit", "zero")


class SamplingWarning(UserWarning):
    """A lattice is too coarse for the frequency it is asked to resolve."""


def rms(values) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("rms of an empty collection")
    return math.sqrt(float(np.mean(v * v)))


@dataclass(frozen=True)
class ResidualSpectrum:
    eps_r: float
    f_x: float
    f_t: float


def _uniform_in_time(field_: np.ndarray, mesh: TemporalMesh) -> np.ndarray:
    if mesh.is_uniform:
        return field_
    t_new = np.linspace(0.0, mesh.T, 4 * mesh.N + 1)
    out = np.empty((t_new.size, field_.shape[1]))
    for m in range(field_.shape[1]):
        out[:, m] = np.interp(t_new, mesh.t, field_[:, m])
    return out


def _peak(marginal: np.ndarray) -> int:
    n = marginal.size
    half = n // 2
    folded = marginal[: half + 1].copy()
    folded[1 : (n + 1) // 2] += marginal[n - 1 : n // 2 : -1]
    return int(np.argmax(folded))


def dominant_frequency(field_: np.ndarray, grid: SpatialGrid, mesh: TemporalMesh) -> ResidualSpectrum:
    """RMS and per-axis peak frequencies (cycles per unit length/time) of ``field_[n, m]``.

    Graded meshes are first resampled to ``4N`` uniform intervals. The last
    sample on each axis is dropped so that DFT bin ``k`` means ``k`` whole
    periods across the domain.
    """
    field_ = np.asarray(field_, dtype=np.float64)
    if field_.shape != (mesh.N + 1, grid.M + 1):
        raise ValueError(f"field shape {field_.shape} does not match the lattice")
    eps_r = rms(field_)
    if eps_r == 0.0:
        return ResidualSpectrum(0.0, 0.0, 0.0)
    u = _uniform_in_time(field_, mesh)[:-1, :-1]
    u = u - u.mean()
    mag = np.abs(np.fft.fft2(u))
    if not mag.any():
        return ResidualSpectrum(eps_r, 0.0, 0.0)
    kx = _peak(mag.sum(axis=0))
    kt = _peak(mag.sum(axis=1))
    return ResidualSpectrum(eps_r, kx / grid.l, kt / mesh.T)


@dataclass(frozen=True)
class StageConfig:
    """Lattice, network and optimizer settings for one stage."""

    M: int = 10
    N: int = 10
    widths: tuple[int, ...] = (2,) + (20,) * 8 + (1,)
    budget: OptimizerBudget = STAGE1_BUDGET
    repeats: int = 3
    seeds: tuple[int, ...] = (1, 2, 3)
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if self.M < 2 or self.N < 1:
            raise ValueError(f"stage lattice must have M >= 2 and N >= 1, got ({self.M}, {self.N})")
        if len(self.seeds) != self.repeats:
            raise ValueError(f"need {self.repeats} seeds, got {len(self.seeds)}")


DEFAULT_STAGES = (
    StageConfig(10, 10),
    StageConfig(40, 40, widths=(2,) + (32,) * 6 + (1,), budget=STAGE2_BUDGET),
)


@dataclass(frozen=True)
class StagePlan:
    epsilon: float
    scales: tuple[float, ...]
    M: int
    N: int
    budget: OptimizerBudget
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"stage pre-factor must be positive, got {self.epsilon}")
        if not self.scales or list(self.scales) != sorted(self.scales):
            raise ValueError(f"scales must be non-empty and ascending, got {self.scales}")


def plan_next_stage(spectrum: ResidualSpectrum, alpha: float, config: StageConfig) -> StagePlan:
    """Pre-factor and scale factors for the next correction stage."""
    f_x = spectrum.f_x
    if f_x >= 1.0:
        eps = spectrum.eps_r / (2.0 * math.pi * f_x) ** 2
    else:
        eps = spectrum.eps_r
    for n_points, axis in ((config.M + 1, "x"), (config.N + 1, "t")):
        if n_points <= 3.0 * math.pi * f_x:
            warnings.warn(
                f"{n_points} points along {axis} under-resolve frequency {f_x:g} (need > {3 * math.pi * f_x:.1f})",
                SamplingWarning,
                stacklevel=2,
            )
    return StagePlan(eps, multiscale_scales(f_x, alpha), config.M, config.N, config.budget, 1.0)


class CompositeSolution:
    """``u_0 + sum_k eps_k u_k``; earlier stages are frozen once a later one exists."""

    def __init__(self, base, corrections: Sequence[tuple[float, object]] = ()):
        self.base = base
        self.corrections = tuple((float(e), net) for e, net in corrections)

    @property
    def n_stages(self) -> int:
        return 1 + len(self.corrections)

    @property
    def frozen(self) -> tuple[bool, ...]:
        return (True,) * (self.n_stages - 1) + (False,)

    def add(self, epsilon: float, net) -> CompositeSolution:
        return CompositeSolution(self.base, self.corrections + ((epsilon, net),))

    def __call__(self, x, t):
        out = np.asarray(self.base(x, t), dtype=np.float64)
        for eps, net in self.corrections:
            out = out + eps * np.asarray(net(x, t), dtype=np.float64)
        return out

    def jet(self, x, t):
        u, ux, uxx = ad.eval_with_jet(self.base, x, t)
        for eps, net in self.corrections:
            v, vx, vxx = ad.eval_with_jet(net, x, t)
            u, ux, uxx = u + eps * v, ux + eps * vx, uxx + eps * vxx
        return u, ux, uxx


def evaluate_composite(comp: CompositeSolution, x, t):
    return comp(x, t)


@dataclass
class StageRecord:
    stage: int
    eps_r: float
    f_x: float
    f_t: float
    epsilon: float
    scales: tuple[float, ...]
    final_loss: float
    l2_rel_error: float | None
    wall_time_s: float
    iterations: int = 0
    report: TrainReport | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("report", "iterations")}
        d["scales"] = list(self.scales)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class MultistageConfig:
    r: float
    stages: tuple[StageConfig, ...] = DEFAULT_STAGES
    shift: bool = True
    weights: LossWeights = LossWeights()
    eval_grid: tuple[int, int] = (100, 100)
    correction_data: str = "misfit"

    def __post_init__(self) -> None:
        if self.correction_data not in CORRECTION_DATA:
            raise ValueError(f"correction_data must be one of {CORRECTION_DATA}, got {self.correction_data!r}")
        if not self.stages:
            raise ValueError("at least one stage is required")
        if not self.r >= 1.0:
            raise ValueError(f"grading exponent must be >= 1, got {self.r}")


def _lattice(problem: SubdiffusionProblem, cfg: StageConfig, r: float):
    grid = build_spatial(problem.l, cfg.M)
    mesh = build_temporal(problem.T, cfg.N, r)
    return grid, mesh, build_l1_table(mesh, problem.alpha)


def run_multistage(
    problem: SubdiffusionProblem, config: MultistageConfig
) -> tuple[CompositeSolution, list[StageRecord]]:
    """Train a dense base stage, then one multiscale correction per extra stage.

    Each record's ``eps_r, f_x, f_t`` describe the residual that stage starts
    from (for stage 0, the residual of the zero function, i.e. ``-f``).
    Errors are measured for the original problem, undoing any shift.
    """
    work = shift_to_zero_initial(problem) if config.shift else problem
    offset = work.offset

    def error_of(comp):
        if problem.exact is None:
            return None

        def sol(x, t):
            u = comp(x, t)
            return u if offset is None else u + offset(x)

        return l2_relative_error(sol, problem.original_exact, config.eval_grid, problem.l, problem.T)

    records: list[StageRecord] = []
    cfg0 = config.stages[0]
    grid, mesh, table = _lattice(work, cfg0, config.r)
    t0 = time.perf_counter()
    spec0 = dominant_frequency(physics_residual_field(_Zero(), work, grid, mesh, table), grid, mesh)
    net0 = init_dense(cfg0.widths, "tanh", kappa=cfg0.kappa, seed=cfg0.seeds[0])
    net0, rep = train_stage(net0, work, grid, mesh, config.weights, cfg0.budget, cfg0.repeats, cfg0.seeds, table)
    comp = CompositeSolution(net0)
    records.append(
        StageRecord(0, spec0.eps_r, spec0.f_x, spec0.f_t, 1.0, (1.0,), rep.final_loss, error_of(comp),
                    time.perf_counter() - t0, rep.iterations, rep)
    )
    log.info("stage 0: loss %.3e, L2 %s", rep.final_loss, records[-1].l2_rel_error)

    for k, cfg in enumerate(config.stages[1:], start=1):
        t0 = time.perf_counter()
        grid, mesh, table = _lattice(work, cfg, config.r)
        r = physics_residual_field(comp, work, grid, mesh, table)
        spec = dominant_frequency(r, grid, mesh)
        if spec.eps_r < UNDERFLOW:
            log.info("stage %d skipped: residual rms %.3e underflows", k, spec.eps_r)
            break
        plan = plan_next_stage(spec, work.alpha, cfg)
        targets = correction_targets(comp, work, grid, r, plan.epsilon, mesh, config.correction_data)
        net = init_multiscale(cfg.widths, plan.scales, seed=cfg.seeds[0], kappa=plan.kappa)
        net, rep = train_stage(net, targets, grid, mesh, config.weights, plan.budget, cfg.repeats, cfg.seeds, table)
        comp = comp.add(plan.epsilon, net)
        records.append(
            StageRecord(k, spec.eps_r, spec.f_x, spec.f_t, plan.epsilon, plan.scales, rep.final_loss,
                        error_of(comp), time.perf_counter() - t0, rep.iterations, rep)
        )
        log.info("stage %d: eps %.3e f_x %g loss %.3e L2 %s", k, plan.epsilon, spec.f_x, rep.final_loss,
                 records[-1].l2_rel_error)
    return comp, records


class _Zero:
    def jet(self, x, t):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
        return z, z, z

    def __call__(self, x, t):
        return self.jet(x, t)[0]


def correction_targets(
    comp: CompositeSolution,
    problem: SubdiffusionProblem,
    grid: SpatialGrid,
    residual: np.ndarray,
    epsilon: float,
    mesh: TemporalMesh,
    mode: str = "misfit",
) -> StageTargets:
    """Targets for the next correction net, so that ``comp + epsilon * net`` fits ``problem``."""
    source = -residual / epsilon
    if mode == "zero":
        targets = StageTargets(problem.alpha, source, np.zeros(grid.M + 1))
        _check_zero_data(targets)
        return targets
    if mode != "misfit":
        raise ValueError(f"unknown correction data mode {mode!r}")
    phi = np.asarray(problem.phi(grid.x), dtype=np.float64) * np.ones_like(grid.x)
    initial = (phi - comp(grid.x, np.zeros_like(grid.x))) / epsilon
    t = mesh.t
    boundary = np.stack(
        [-comp(np.zeros_like(t), t), -comp(np.full_like(t, grid.l), t)], axis=1
    ) / epsilon
    return StageTargets(problem.alpha, source, initial, boundary)


def _check_zero_data(targets: StageTargets) -> None:
    if np.any(targets.initial != 0.0) or np.any(targets.boundary_values() != 0.0):
        raise AssertionError("zero-data correction stages must have zero initial and boundary data")
