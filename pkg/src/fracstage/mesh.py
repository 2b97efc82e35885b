"""Temporal graded meshes, uniform spatial grids and the collocation lattice."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "TemporalMesh",
    "SpatialGrid",
    "CollocationSet",
    "build_temporal",
    "build_spatial",
    "build_collocation",
    "optimal_grading",
]

log = logging.getLogger(__name__)

MAX_OPTIMAL_GRADING = 19.0
SMALL_FIRST_STEP = 1e-14


class MeshError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TemporalMesh:
    """Nodes ``t[n] = T (n/N)**r`` for ``n = 0..N`` and steps ``tau[n-1] = t[n] - t[n-1]``.

    ``tau`` is stored zero-based: ``tau[k]`` is the step usually written with
    index ``k+1``.
    """

    T: float
    N: int
    r: float
    t: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    @property
    def is_uniform(self) -> bool:
        return self.r == 1.0


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    l: float
    M: int
    h: float
    x: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class CollocationSet:
    """Index sets on the ``(N+1) x (M+1)`` lattice, as ``(n, m)`` integer pairs.

    Interior nodes are ``1 <= m <= M-1, 1 <= n <= N``. Boundary nodes are
    ``m in {0, M}`` at every level ``n = 0..N`` and initial nodes are every
    ``m`` at ``n = 0``; the two corners at ``t = 0`` belong to both of these.
    """

    grid: SpatialGrid
    mesh: TemporalMesh
    interior: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mesh.N + 1, self.grid.M + 1

    def points(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates ``(x, t)`` of the named index set."""
        idx = getattr(self, which)
        return self.grid.x[idx[:, 1]], self.mesh.t[idx[:, 0]]

    def lattice(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened full-lattice coordinates in ``(n, m)`` row-major order."""
        tt, xx = np.meshgrid(self.mesh.t, self.grid.x, indexing="ij")
        return xx.ravel(), tt.ravel()


def optimal_grading(alpha: float) -> float:
    """The grading exponent ``(2 - alpha) / alpha``, capped at 19 (alpha = 0.1)."""
    if not 0.0 < alpha < 1.0:
        raise MeshError(f"alpha must lie in (0,1), got {alpha!r}")
    r = (2.0 - alpha) / alpha
    if r > MAX_OPTIMAL_GRADING + 1e-12:
        raise MeshError(f"optimal grading {r:.4g} for alpha={alpha} exceeds the cap {MAX_OPTIMAL_GRADING}")
    return min(r, MAX_OPTIMAL_GRADING)


def build_temporal(T: float, N: int, r: float) -> TemporalMesh:
    if not T > 0:
        raise MeshError(f"horizon T must be positive, got {T!r}")
    if int(N) != N or N < 1:
        raise MeshError(f"N must be a positive integer, got {N!r}")
    if not r >= 1:
        raise MeshError(f"grading r must be >= 1, got {r!r}")
    N = int(N)
    n = np.arange(N + 1, dtype=np.float64)
    t = T * (n / N) ** r
    t[0] = 0.0
    t[-1] = T
    tau = np.diff(t)
    if not np.all(tau > 0):
        raise MeshError(f"mesh (T={T}, N={N}, r={r}) is not strictly increasing in double precision")
    if tau[0] < SMALL_FIRST_STEP * T:
        log.warning("first time step %.3e is below %.0e*T; round-off may dominate", tau[0], SMALL_FIRST_STEP)
    return TemporalMesh(T=float(T), N=N, r=float(r), t=_frozen(t), tau=_frozen(tau))


def build_spatial(l: float, M: int) -> SpatialGrid:
    if not l > 0:
        raise MeshError(f"length l must be positive, got {l!r}")
    if int(M) != M or M < 2:
        raise MeshError(f"M must be an integer >= 2, got {M!r}")
    M = int(M)
    h = l / M
    x = np.arange(M + 1, dtype=np.float64) * h
    x[-1] = l
    return SpatialGrid(l=float(l), M=M, h=h, x=_frozen(x))


def build_collocation(grid: SpatialGrid, mesh: TemporalMesh) -> CollocationSet:
    M, N = grid.M, mesh.N
    nn, mm = np.meshgrid(np.arange(1, N + 1), np.arange(1, M), indexing="ij")
    interior = np.stack([nn.ravel(), mm.ravel()], axis=1)
    levels = np.arange(N + 1)
    boundary = np.concatenate(
        [np.stack([levels, np.zeros_like(levels)], 1), np.stack([levels, np.full_like(levels, M)], 1)]
    )
    cols = np.arange(M + 1)
    initial = np.stack([np.zeros_like(cols), cols], axis=1)
    for a in (interior, boundary, initial):
        a.setflags(write=False)
    return CollocationSet(grid=grid, mesh=mesh, interior=interior, boundary=boundary, initial=initial)
