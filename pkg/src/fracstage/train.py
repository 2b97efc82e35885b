"""fPINN loss on the collocation lattice and the Adam / L-BFGS optimizers.

The loss is

    w_physics * mean(r^2 over interior nodes)
  + w_data * (mean((u - b)^2 over boundary nodes)
              + mean((u - phi)^2 over initial nodes))

where ``b`` is the boundary data (zero unless a stage sets it) and the
residual ``r = D_N u - u_xx - g`` uses the L1 table for the time
derivative and forward jets for the Laplacian. The network is evaluated once
per lattice node; the fractional term is then a dense ``(N, N+1)`` product.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import autodiff as ad
from .bench import SubdiffusionProblem
from .l1frac import L1OperatorTable, build_l1_table
from .mesh import SpatialGrid, TemporalMesh
from .model import DenseNet, MultiscaleNet, init_dense, init_multiscale

__all__ = [
    "TrainingError",
    "NonFiniteLoss",
    "AllTrialsDiverged",
    "LossWeights",
    "OptimizerBudget",
    "STAGE1_BUDGET",
    "STAGE2_BUDGET",
    "HistoryRow",
    "OptResult",
    "TrainReport",
    "StageTargets",
    "stage_targets",
    "physics_residual_field",
    "total_loss",
    "LatticeLoss",
    "adam_minimize",
    "lbfgs_minimize",
    "reinitialize",
    "train_stage",
    "write_history_csv",
]

log = logging.getLogger(__name__)

Net = Union[DenseNet, MultiscaleNet]
LossFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class TrainingError(RuntimeError):
    pass


class NonFiniteLoss(TrainingError):
    pass


class AllTrialsDiverged(TrainingError):
    pass


class _Diverged(Exception):
    pass


@dataclass(frozen=True)
class LossWeights:
    w_data: float = 0.5
    w_physics: float = 0.5

    def __post_init__(self) -> None:
        if not (self.w_data >= 0 and self.w_physics >= 0):
            raise ValueError(f"loss weights must be non-negative, got {self}")


@dataclass(frozen=True)
class OptimizerBudget:
    adam_iters: int = 1000
    adam_lr: float = 1e-3
    lbfgs_max_iters: int = 5000
    lbfgs_initial_lr: float = 1.0
    lbfgs_grad_tol: float = 1e-12
    lbfgs_memory: int = 20

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"budget field {name} must be positive, got {v!r}")


STAGE1_BUDGET = OptimizerBudget(adam_iters=1000)
STAGE2_BUDGET = OptimizerBudget(adam_iters=300)


@dataclass(frozen=True)
class HistoryRow:
    iter: int
    phase: str
    loss: float
    grad_inf_norm: float


@dataclass
class OptResult:
    theta: np.ndarray
    loss: float
    iterations: int
    status: str  # "done", "converged", "line_search_failed", "max_iters"

    @property
    def line_search_failed(self) -> bool:
        return self.status == "line_search_failed"


@dataclass
class TrainReport:
    history: list[HistoryRow]
    final_loss: float
    residual: np.ndarray = field(repr=False)
    wall_time_s: float
    iterations: int
    seed: int
    status: str = "done"
    trial_losses: tuple[float, ...] = ()


def write_history_csv(history: Sequence[HistoryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "phase", "loss", "grad_inf_norm"])
        for row in history:
            w.writerow([row.iter, row.phase, f"{row.loss:.17g}", f"{row.grad_inf_norm:.17g}"])


# ---------------------------------------------------------------------------
# targets and residuals


@dataclass(frozen=True, eq=False)
class StageTargets:
    """What one stage is fitted to, sampled on its lattice.

    ``source[n, m]`` is the physics right-hand side (only interior nodes are
    read), ``initial[m]`` the data at ``t = 0`` and ``boundary[n]`` the
    values at ``(x = 0, x = l)`` on level ``n``; ``None`` means zero.
    """

    alpha: float
    source: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)
    boundary: np.ndarray | None = field(default=None, repr=False)

    def boundary_values(self) -> np.ndarray:
        if self.boundary is None:
            return np.zeros((self.source.shape[0], 2))
        return self.boundary


def stage_targets(problem: SubdiffusionProblem | StageTargets, grid: SpatialGrid, mesh: TemporalMesh) -> StageTargets:
    if isinstance(problem, StageTargets):
        if problem.source.shape != (mesh.N + 1, grid.M + 1):
            raise ValueError("stage targets were sampled on a different lattice")
        if problem.boundary is not None and problem.boundary.shape != (mesh.N + 1, 2):
            raise ValueError("boundary targets must have shape (N+1, 2)")
        return problem
    tt, xx = np.meshgrid(mesh.t, grid.x, indexing="ij")
    src = np.asarray(problem.source(xx, tt), dtype=np.float64) * np.ones_like(xx)
    ini = np.asarray(problem.phi(grid.x), dtype=np.float64) * np.ones_like(grid.x)
    return StageTargets(problem.alpha, src, ini)


def _table_for(table, mesh, alpha):
    if table is None:
        return build_l1_table(mesh, alpha)
    if table.alpha != alpha or table.mesh.N != mesh.N or not np.array_equal(table.mesh.t, mesh.t):
        raise ValueError("L1 table does not match the mesh/alpha")
    return table


def physics_residual_field(
    model,
    problem: SubdiffusionProblem | StageTargets,
    grid: SpatialGrid,
    mesh: TemporalMesh,
    table: L1OperatorTable | None = None,
) -> np.ndarray:
    """``r[n, m] = D_N u - u_xx - f`` on interior nodes, zero elsewhere."""
    tg = stage_targets(problem, grid, mesh)
    table = _table_for(table, mesh, tg.alpha)
    tt, xx = np.meshgrid(mesh.t, grid.x, indexing="ij")
    u, _, uxx = ad.eval_with_jet(model, xx, tt)
    u = np.asarray(u, dtype=np.float64) * np.ones_like(xx)
    uxx = np.asarray(uxx, dtype=np.float64) * np.ones_like(xx)
    r = np.zeros_like(xx)
    r[1:, 1:-1] = table.apply(u)[:, 1:-1] - uxx[1:, 1:-1] - tg.source[1:, 1:-1]
    return r


def total_loss(model, problem, collocation, weights: LossWeights = LossWeights(), table=None) -> float:
    """Loss of ``model`` on a :class:`~fracstage.mesh.CollocationSet`."""
    grid, mesh = collocation.grid, collocation.mesh
    tg = stage_targets(problem, grid, mesh)
    r = physics_residual_field(model, tg, grid, mesh, table)
    ii = collocation.interior
    phys = float(np.mean(r[ii[:, 0], ii[:, 1]] ** 2))
    xb, tb = collocation.points("boundary")
    b = collocation.boundary
    gb = tg.boundary_values()[b[:, 0], np.where(b[:, 1] == 0, 0, 1)]
    bnd = float(np.mean((np.asarray(model(xb, tb), dtype=np.float64) - gb) ** 2))
    xi, ti = collocation.points("initial")
    ini = float(np.mean((np.asarray(model(xi, ti), dtype=np.float64) - tg.initial[collocation.initial[:, 1]]) ** 2))
    return weights.w_physics * phys + weights.w_data * (bnd + ini)


class LatticeLoss:
    """``theta -> (loss, grad)`` for networks shaped like ``template``.

    Equivalent to :func:`total_loss` but written on the tape so the reverse
    sweep gives the parameter gradient.
    """

    def __init__(
        self,
        template: Net,
        problem: SubdiffusionProblem | StageTargets,
        grid: SpatialGrid,
        mesh: TemporalMesh,
        weights: LossWeights = LossWeights(),
        table: L1OperatorTable | None = None,
    ):
        self.template = template
        self.grid, self.mesh = grid, mesh
        self.targets = stage_targets(problem, grid, mesh)
        self.table = _table_for(table, mesh, self.targets.alpha)
        self.weights = weights
        tt, xx = np.meshgrid(mesh.t, grid.x, indexing="ij")
        self._x, self._t = xx.ravel(), tt.ravel()
        self._A = self.table.matrix
        self._f = self.targets.source[1:, 1:-1]
        self._phi = self.targets.initial
        self._g = self.targets.boundary_values()
        self.n_evals = 0

    def _loss(self, *params):
        N1, M1 = self.mesh.N + 1, self.grid.M + 1
        out = self.template.stacked_jet(params, self._x, self._t)
        u = out[0].reshape(N1, M1)
        uxx = out[2].reshape(N1, M1)
        frac = ad.matmul(self._A, u)
        res = frac[:, 1:-1] - uxx[1:, 1:-1] - self._f
        phys = ad.mean(ad.square(res))
        # boundary set: both ends at every level, t = 0 corners included
        g = self._g
        bnd = (ad.sum(ad.square(u[:, 0] - g[:, 0])) + ad.sum(ad.square(u[:, M1 - 1] - g[:, 1]))) * (1.0 / (2 * N1))
        ini = ad.mean(ad.square(u[0] - self._phi))
        w = self.weights
        return phys * w.w_physics + (bnd + ini) * w.w_data

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        layout = self.template.layout
        loss, grads = ad.value_and_grad(self._loss, layout.unflatten(theta))
        return loss, layout.flatten(grads)

    def value(self, theta: np.ndarray) -> float:
        return float(self._loss(*self.template.layout.unflatten(theta)))

    def residual(self, theta: np.ndarray) -> np.ndarray:
        return physics_residual_field(self.template.unflatten(theta), self.targets, self.grid, self.mesh, self.table)


# ---------------------------------------------------------------------------
# optimizers


def _inf_norm(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


def adam_minimize(
    loss_fn: LossFn,
    params: np.ndarray,
    budget: OptimizerBudget,
    history: list[HistoryRow] | None = None,
    start_iter: int = 0,
) -> OptResult:
    """Full-batch Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""
    b1, b2, eps = 0.9, 0.999, 1e-8
    theta = np.array(params, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lr = budget.adam_lr
    loss = math.nan
    for k in range(1, budget.adam_iters + 1):
        loss, g = loss_fn(theta)
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            raise NonFiniteLoss(f"Adam step {k}: loss {loss!r}, gradient finite: {bool(np.all(np.isfinite(g)))}")
        if history is not None:
            history.append(HistoryRow(start_iter + k, "adam", loss, _inf_norm(g)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1**k)
        vhat = v / (1.0 - b2**k)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return OptResult(theta, loss, budget.adam_iters, "done")


def _two_loop(g, S, Y, rho):
    q = g.copy()
    alphas = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * float(s @ q)
        q -= a * y
        alphas.append(a)
    if S:
        q *= float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
        b = r * float(y @ q)
        q += (a - b) * s
    return -q


def _cubic_min(a1, f1, g1, a2, f2, g2, lo, hi):
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (a1 - a2)
    disc = d1 * d1 - g1 * g2
    if disc >= 0.0:
        d2 = math.copysign(math.sqrt(disc), a2 - a1)
        denom = g2 - g1 + 2.0 * d2
        if denom != 0.0:
            a = a2 - (a2 - a1) * (g2 + d2 - d1) / denom
            if math.isfinite(a):
                return min(max(a, lo), hi)
    return 0.5 * (lo + hi)


def _strong_wolfe(fun, x, f0, g0, d, t0, c1=1e-4, c2=0.9, max_evals=25):
    """Line search along ``d``; returns ``(t, f, g, ok)``.

    ``ok`` is False only when no point with lower loss was found.
    """
    gtd0 = float(g0 @ d)
    dnorm = _inf_norm(d)
    evals = 0

    def phi(t):
        nonlocal evals
        evals += 1
        f, g = fun(x + t * d)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            return math.inf, None, math.inf
        return f, g, float(g @ d)

    def zoom(lo, hi):
        # lo = (t, f, g, gtd) satisfies sufficient decrease with the lowest f seen
        while evals < max_evals:
            tl, fl, _, dl = lo
            th, fh, _, dh = hi
            if abs(th - tl) * dnorm < 1e-16:
                break
            width = abs(th - tl)
            a, b = min(tl, th) + 0.1 * width, max(tl, th) - 0.1 * width
            if math.isfinite(fh) and math.isfinite(dh):
                t = _cubic_min(tl, fl, dl, th, fh, dh, a, b)
            else:
                t = 0.5 * (tl + th)
            f, g, gtd = phi(t)
            if f > f0 + c1 * t * gtd0 or f >= fl:
                hi = (t, f, g, gtd)
            else:
                if abs(gtd) <= -c2 * gtd0:
                    return t, f, g, True
                if gtd * (th - tl) >= 0:
                    hi = lo
                lo = (t, f, g, gtd)
        tl, fl, gl, _ = lo
        return tl, fl, gl, tl > 0 and fl < f0

    prev = (0.0, f0, g0, gtd0)
    t = t0
    while evals < max_evals:
        f, g, gtd = phi(t)
        if f > f0 + c1 * t * gtd0 or (prev[0] > 0 and f >= prev[1]):
            return zoom(prev, (t, f, g, gtd))
        if abs(gtd) <= -c2 * gtd0:
            return t, f, g, True
        if gtd >= 0:
            return zoom((t, f, g, gtd), prev)
        prev = (t, f, g, gtd)
        t = t * 2.0
    tp, fp, gp, _ = prev
    return tp, fp, gp, tp > 0 and fp < f0


def lbfgs_minimize(
    loss_fn: LossFn,
    params: np.ndarray,
    budget: OptimizerBudget,
    history: list[HistoryRow] | None = None,
    start_iter: int = 0,
) -> OptResult:
    """Limited-memory BFGS with a strong-Wolfe line search (c1 1e-4, c2 0.9).

    Stops when the gradient infinity norm drops to ``lbfgs_grad_tol``, at the
    iteration cap, or when the line search finds no decrease; in the last case
    the best point so far is returned with status ``"line_search_failed"``.
    Accepted iterates never increase the loss.
    """
    x = np.array(params, dtype=np.float64)
    f, g = loss_fn(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteLoss(f"L-BFGS start: loss {f!r}")
    S: deque = deque(maxlen=budget.lbfgs_memory)
    Y: deque = deque(maxlen=budget.lbfgs_memory)
    rho: deque = deque(maxlen=budget.lbfgs_memory)
    status = "max_iters"
    it = 0
    while it < budget.lbfgs_max_iters:
        if _inf_norm(g) <= budget.lbfgs_grad_tol:
            status = "converged"
            break
        d = _two_loop(g, S, Y, rho)
        if not float(g @ d) < 0.0:
            S.clear(), Y.clear(), rho.clear()
            d = -g
        t0 = budget.lbfgs_initial_lr
        if not S:
            t0 *= min(1.0, 1.0 / float(np.sum(np.abs(g))))
        t, f_new, g_new, ok = _strong_wolfe(loss_fn, x, f, g, d, t0)
        if not ok:
            status = "line_search_failed"
            break
        s = t * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(y @ y):
            S.append(s), Y.append(y), rho.append(1.0 / sy)
        x = x + s
        f, g = f_new, g_new
        it += 1
        if history is not None:
            history.append(HistoryRow(start_iter + it, "lbfgs", f, _inf_norm(g)))
    return OptResult(x, f, it, status)


# ---------------------------------------------------------------------------
# trials


def reinitialize(template: Net, seed: int) -> Net:
    """Fresh network with the architecture of ``template``."""
    if isinstance(template, MultiscaleNet):
        return init_multiscale(template.widths, template.scales, seed=seed, kappa=template.kappa)
    return init_dense(template.widths, template.activations, kappa=template.kappa, seed=seed)


def train_stage(
    model: Net,
    problem: SubdiffusionProblem | StageTargets,
    grid: SpatialGrid,
    mesh: TemporalMesh,
    weights: LossWeights = LossWeights(),
    budget: OptimizerBudget = STAGE1_BUDGET,
    repeats: int = 3,
    seeds: Sequence[int] | None = None,
    table: L1OperatorTable | None = None,
) -> tuple[Net, TrainReport]:
    """Adam then L-BFGS from ``repeats`` initializations; keep the lowest loss.

    Each trial re-initializes ``model``'s architecture from its seed.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    seeds = list(range(1, repeats + 1)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != repeats:
        raise ValueError(f"need {repeats} seeds, got {len(seeds)}")
    loss_fn = LatticeLoss(model, problem, grid, mesh, weights, table)
    best: tuple[float, np.ndarray, TrainReport] | None = None
    losses = []
    for seed in seeds:
        t_start = time.perf_counter()
        net = reinitialize(model, seed)
        history: list[HistoryRow] = []
        theta, loss, status, iters = _run_trial(loss_fn, net.flatten(), budget, history)
        losses.append(loss)
        wall = time.perf_counter() - t_start
        log.info("trial seed=%d loss=%.6e status=%s iters=%d %.1fs", seed, loss, status, iters, wall)
        if not math.isfinite(loss):
            continue
        if best is None or loss < best[0]:
            rep = TrainReport(history, loss, np.empty(0), wall, iters, seed, status)
            best = (loss, theta, rep)
    if best is None:
        raise AllTrialsDiverged(f"all {repeats} trials produced non-finite losses")
    loss, theta, rep = best
    rep.residual = loss_fn.residual(theta)
    rep.trial_losses = tuple(losses)
    return model.unflatten(theta), rep


def _run_trial(loss_fn, theta0, budget, history):
    """``(theta, loss, status, iterations)``; non-finite trials score ``inf``."""
    # the divergence guard watches Adam iterates only; L-BFGS never accepts an increase
    record = {"loss": math.inf, "theta": theta0, "initial": None, "guard": True}

    def guarded(theta):
        f, g = loss_fn(theta)
        if record["initial"] is None:
            record["initial"] = f
        if math.isfinite(f) and f < record["loss"]:
            record["loss"], record["theta"] = f, theta
        if record["guard"] and math.isfinite(f) and f > 1e6 * record["initial"]:
            raise _Diverged
        return f, g

    try:
        res = adam_minimize(guarded, theta0, budget, history)
        record["guard"] = False
        res = lbfgs_minimize(guarded, res.theta, budget, history, start_iter=budget.adam_iters)
        iters = budget.adam_iters + res.iterations
        # the line search can end on a probe; report the best evaluated point
        return record["theta"], record["loss"], res.status, iters
    except _Diverged:
        return record["theta"], record["loss"], "diverged", len(history)
    except NonFiniteLoss:
        return record["theta"], math.inf, "non_finite", len(history)
