"""Caputo L1 weights on arbitrary (graded) temporal meshes."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mesh import TemporalMesh, build_temporal
from .specfun import gamma

__all__ = ["L1Error", "L1OperatorTable", "build_l1_table", "cached_l1_table", "apply_l1", "solve_scalar_l1"]


class L1Error(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class L1OperatorTable:
    """Increment-form L1 weights.

    Row ``n`` (1-based) encodes ``D_N u^n = sum_{k<n} w[n][k] (u^{k+1} - u^k)``.
    ``weights`` is stored as an ``N x N`` lower-triangular array with
    ``weights[n-1, k] = w[n][k]``; entries with ``k >= n`` are zero.
    """

    alpha: float
    mesh: TemporalMesh
    weights: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.mesh.N

    def row(self, n: int) -> np.ndarray:
        return self.weights[n - 1, :n]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to every level at once; ``values`` has leading axis ``N+1``.

        Returns an array with leading axis ``N`` holding ``D_N u^n`` for
        ``n = 1..N``.
        """
        return self.matrix @ values


def _brackets(t: np.ndarray, tau: np.ndarray, n: int, beta: float) -> np.ndarray:
    # (t_n - t_k)^beta - (t_n - t_{k+1})^beta for k = 0..n-1, written as
    # b^beta * expm1(beta * log1p(tau/b)) with b = t_n - t_{k+1} to avoid cancellation
    b = t[n] - t[1 : n + 1]
    step = tau[:n]
    out = np.empty(n)
    out[-1] = np.exp(beta * np.log(step[-1]))
    bb = b[:-1]
    out[:-1] = np.exp(beta * np.log(bb)) * np.expm1(beta * np.log1p(step[:-1] / bb))
    return out


def build_l1_table(mesh: TemporalMesh, alpha: float) -> L1OperatorTable:
    if not 0.0 < alpha < 1.0:
        raise L1Error(f"alpha must lie in (0,1), got {alpha!r}")
    N = mesh.N
    beta = 1.0 - alpha
    g2 = gamma(2.0 - alpha)
    W = np.zeros((N, N))
    for n in range(1, N + 1):
        W[n - 1, :n] = _brackets(mesh.t, mesh.tau, n, beta) / (g2 * mesh.tau[:n])
    A = np.zeros((N, N + 1))
    A[:, 1:] += W
    A[:, :-1] -= W
    W.setflags(write=False)
    A.setflags(write=False)
    return L1OperatorTable(alpha=float(alpha), mesh=mesh, weights=W, matrix=A)


@lru_cache(maxsize=64)
def cached_l1_table(T: float, N: int, r: float, alpha: float) -> L1OperatorTable:
    return build_l1_table(build_temporal(T, N, r), alpha)


def apply_l1(table: L1OperatorTable, history, n: int) -> float:
    """``D_N u^n`` from the history ``u^0..u^n``."""
    history = np.asarray(history, dtype=np.float64)
    if not 1 <= n <= table.N:
        raise L1Error(f"level n={n} outside 1..{table.N}")
    if history.shape != (n + 1,):
        raise L1Error(f"history must have length n+1={n + 1}, got shape {history.shape}")
    return float(np.dot(table.row(n), np.diff(history)))


def solve_scalar_l1(table: L1OperatorTable, rhs, u0: float = 0.0) -> np.ndarray:
    """March ``D_N u^n = rhs[n]`` for ``n = 1..N`` from ``u^0 = u0``.

    ``rhs`` is either a scalar or an array indexed by level (entry 0 unused).
    """
    N = table.N
    rhs = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (N + 1,))
    u = np.empty(N + 1)
    u[0] = u0
    du = np.empty(N)
    for n in range(1, N + 1):
        w = table.row(n)
        hist = float(np.dot(w[:-1], du[: n - 1]))
        du[n - 1] = (rhs[n] - hist) / w[-1]
        u[n] = u[n - 1] + du[n - 1]
    return u
