"""Benchmark subdiffusion problems, the zero-initial shift and error metrics.

Problems are of the form ``D_t^alpha u - u_xx = f`` on ``(0, l) x (0, T]`` with
``u(0, t) = u(l, t) = 0`` and ``u(x, 0) = phi(x)``. All callables take numpy
arrays (or scalars) and broadcast. ``exact`` and ``phi`` are written with plain
arithmetic so they also accept :class:`~fracstage.autodiff.Jet2` spatial
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .specfun import gamma, mittag_leffler

__all__ = [
    "ProblemError",
    "SubdiffusionProblem",
    "exponential_benchmark",
    "polynomial_benchmark",
    "zero_benchmark",
    "shift_to_zero_initial",
    "get_benchmark",
    "l2_relative_error",
    "uniform_eval_lattice",
]

Field = Callable[..., object]


class ProblemError(ValueError):
    pass


def _zero(x, t=None):
    return 0.0 * x


@dataclass(frozen=True)
class SubdiffusionProblem:
    name: str
    alpha: float
    source: Field
    phi: Field
    l: float = 1.0
    T: float = 1.0
    exact: Optional[Field] = None
    phi_xx: Optional[Field] = None
    # phi removed by shift_to_zero_initial; the original solution is u + offset(x)
    offset: Optional[Field] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ProblemError(f"alpha must lie in (0,1), got {self.alpha!r}")
        ends = np.asarray(self.phi(np.array([0.0, self.l])), dtype=float)
        if np.any(np.abs(ends) > 1e-12):
            raise ProblemError(f"initial data must vanish at x=0 and x=l, got {ends}")

    @property
    def zero_initial(self) -> bool:
        xs = np.linspace(0.0, self.l, 101)
        return bool(np.all(np.asarray(self.phi(xs)) == 0.0))

    def original_exact(self, x, t):
        """Exact solution of the problem before any zero-initial shift."""
        if self.exact is None:
            raise ProblemError(f"problem {self.name!r} has no exact solution")
        u = self.exact(x, t)
        return u if self.offset is None else u + self.offset(x)


def exponential_benchmark(alpha: float) -> SubdiffusionProblem:
    """``u = x (1 - x^2)^2 exp(-t)`` with its Mittag-Leffler source."""

    def spatial(x):
        s = 1.0 - x * x
        return x * s * s

    def exact(x, t):
        return spatial(x) * np.exp(-np.asarray(t, dtype=float))

    def ml_factor(t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        vals = {v: mittag_leffler(1.0, 2.0 - alpha, -v) for v in np.unique(flat)}
        out = np.array([(v ** (1.0 - alpha)) * vals[v] for v in flat]).reshape(t.shape)
        return out

    def source(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        return -ml_factor(t) * spatial(x) + 4.0 * x * (3.0 - 5.0 * x * x) * np.exp(-t)

    def phi_xx(x):
        return -12.0 * x + 20.0 * x * x * x

    return SubdiffusionProblem(
        name="exp", alpha=float(alpha), source=source, phi=spatial, exact=exact, phi_xx=phi_xx
    )


def polynomial_benchmark(alpha: float) -> SubdiffusionProblem:
    """``u = x (1 - x) t`` with zero initial data."""
    g2 = gamma(2.0 - alpha)

    def exact(x, t):
        return x * (1.0 - x) * t

    def source(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        return x * (1.0 - x) * t ** (1.0 - alpha) / g2 + 2.0 * t

    return SubdiffusionProblem(
        name="poly", alpha=float(alpha), source=source, phi=_zero, exact=exact, phi_xx=_zero
    )


def zero_benchmark(alpha: float) -> SubdiffusionProblem:
    """Homogeneous problem with zero data; its solution is identically zero."""
    return SubdiffusionProblem(name="zero", alpha=float(alpha), source=_zero, phi=_zero, exact=_zero, phi_xx=_zero)


_BENCHMARKS = {"exp": exponential_benchmark, "poly": polynomial_benchmark, "zero": zero_benchmark}


def get_benchmark(name: str, alpha: float) -> SubdiffusionProblem:
    try:
        return _BENCHMARKS[name](alpha)
    except KeyError:
        raise ProblemError(f"unknown problem {name!r}; choose from {sorted(_BENCHMARKS)}") from None


def shift_to_zero_initial(problem: SubdiffusionProblem) -> SubdiffusionProblem:
    """Subtract the initial data: ``v = u - phi`` solves ``D v - v_xx = f + phi''``."""
    if problem.zero_initial:
        return problem
    if problem.phi_xx is None:
        raise ProblemError(f"problem {problem.name!r} lacks phi'' required for the zero-initial shift")
    f, phi, phi_xx = problem.source, problem.phi, problem.phi_xx

    def source(x, t):
        return f(x, t) + phi_xx(np.asarray(x, dtype=float))

    exact = None
    if problem.exact is not None:
        u = problem.exact

        def exact(x, t):
            return u(x, t) - phi(x)

    return replace(
        problem,
        name=problem.name,
        source=source,
        phi=_zero,
        phi_xx=_zero,
        exact=exact,
        offset=phi,
    )


def uniform_eval_lattice(M_e: int = 100, N_e: int = 100, l: float = 1.0, T: float = 1.0):
    """Uniform evaluation points with the ``t = 0`` row dropped, flattened."""
    x = np.linspace(0.0, l, M_e + 1)
    t = np.linspace(0.0, T, N_e + 1)[1:]
    tt, xx = np.meshgrid(t, x, indexing="ij")
    return xx.ravel(), tt.ravel()


def l2_relative_error(solution, exact, eval_grid: tuple[int, int] = (100, 100), l: float = 1.0, T: float = 1.0) -> float:
    """Relative discrete L2 error on a uniform lattice excluding ``t = 0``."""
    x, t = uniform_eval_lattice(eval_grid[0], eval_grid[1], l, T)
    u = np.asarray(solution(x, t), dtype=float)
    ue = np.asarray(exact(x, t), dtype=float)
    denom = float(np.sum(ue * ue))
    if denom == 0.0:
        raise ProblemError("exact solution vanishes on the evaluation lattice")
    return math.sqrt(float(np.sum((u - ue) ** 2)) / denom)
