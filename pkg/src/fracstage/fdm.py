"""Implicit L1 / central-difference reference solver.

Solves ``D_N u^n_m - delta_x^2 u^n_m = f(x_m, t_n)`` level by level with a
Thomas sweep. It shares the L1 weight table with the network loss but is
otherwise independent of it, which makes it usable as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bench import SubdiffusionProblem
from .l1frac import L1OperatorTable, build_l1_table
from .mesh import SpatialGrid, TemporalMesh

__all__ = ["SingularSystemError", "GridSolution", "thomas", "fdm_solve", "grid_error_norms", "discrete_operator"]


class SingularSystemError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Nodal values ``u[n, m]`` on the ``(N+1) x (M+1)`` lattice."""

    u: np.ndarray = field(repr=False)
    grid: SpatialGrid
    mesh: TemporalMesh


def thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system.

    ``lower[i]`` multiplies ``x[i-1]`` (``lower[0]`` ignored) and ``upper[i]``
    multiplies ``x[i+1]`` (``upper[-1]`` ignored).
    """
    n = len(diag)
    c = np.empty(n)
    d = np.empty(n)
    piv = diag[0]
    if piv == 0.0:
        raise SingularSystemError("zero pivot in row 0")
    c[0] = upper[0] / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * c[i - 1]
        if piv == 0.0:
            raise SingularSystemError(f"zero pivot in row {i}")
        c[i] = upper[i] / piv
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def fdm_solve(
    problem: SubdiffusionProblem,
    grid: SpatialGrid,
    mesh: TemporalMesh,
    table: L1OperatorTable | None = None,
) -> GridSolution:
    if table is None:
        table = build_l1_table(mesh, problem.alpha)
    elif table.mesh is not mesh or table.alpha != problem.alpha:
        raise ValueError("L1 table does not match the mesh/alpha")
    M, N = grid.M, mesh.N
    x = grid.x
    inner = x[1:-1]
    ih2 = 1.0 / grid.h**2
    U = np.zeros((N + 1, M + 1))
    U[0] = problem.phi(x)
    U[1:, 0] = 0.0
    U[1:, -1] = 0.0
    off = np.full(M - 1, -ih2)
    dU = np.zeros((N, M - 1))  # increments u^{k+1} - u^k on interior nodes
    for n in range(1, N + 1):
        w = table.row(n)
        lead = w[-1]
        hist = w[:-1] @ dU[: n - 1] if n > 1 else 0.0
        rhs = np.asarray(problem.source(inner, mesh.t[n]), dtype=float) + lead * U[n - 1, 1:-1] - hist
        # boundary values are zero, so no boundary contribution to rhs
        diag = np.full(M - 1, lead + 2.0 * ih2)
        sol = thomas(off, diag, off, rhs)
        res = diag * sol - rhs
        res[1:] -= ih2 * sol[:-1]
        res[:-1] -= ih2 * sol[1:]
        scale = max(1.0, float(np.abs(rhs).max()))
        if float(np.abs(res).max()) > 1e-12 * scale:
            raise SingularSystemError(f"tridiagonal residual {np.abs(res).max():.3e} at level {n}")
        U[n, 1:-1] = sol
        dU[n - 1] = sol - U[n - 1, 1:-1]
    return GridSolution(u=U, grid=grid, mesh=mesh)


def discrete_operator(U: np.ndarray, table: L1OperatorTable, grid: SpatialGrid) -> np.ndarray:
    """``L_{M,N} U`` on interior nodes, shape ``(N, M-1)`` for levels ``1..N``."""
    frac = table.apply(U)[:, 1:-1]
    lap = (U[1:, 2:] - 2.0 * U[1:, 1:-1] + U[1:, :-2]) / grid.h**2
    return frac - lap


def grid_error_norms(sol: GridSolution, exact) -> tuple[float, float]:
    """``(max_abs, l2_rel)`` against ``exact(x, t)`` on the lattice.

    ``max_abs`` covers every node; ``l2_rel`` covers levels ``n >= 1``. When
    both the exact solution and the error vanish, both norms are zero.
    """
    tt, xx = np.meshgrid(sol.mesh.t, sol.grid.x, indexing="ij")
    ue = np.asarray(exact(xx, tt), dtype=float) * np.ones_like(xx)
    diff = sol.u - ue
    max_abs = float(np.abs(diff).max())
    denom = float(np.sum(ue[1:] ** 2))
    if denom == 0.0:
        if max_abs == 0.0:
            return 0.0, 0.0
        raise ZeroDivisionError("exact solution vanishes on the lattice")
    return max_abs, math.sqrt(float(np.sum(diff[1:] ** 2)) / denom)
