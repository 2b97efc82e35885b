"""Fused single-pass kernels for jet activations on ``(S, 3, P, W)`` arrays.

The transcendental part (``tanh`` or ``sin``/``cos`` of the value component) is
left to numpy, whose vectorised routines are faster than scalar calls; the
kernels fuse the chain-rule arithmetic around it. The numpy expressions in
:mod:`fracstage.autodiff` stay as the reference.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

TANH, SIN = 0, 1
KIND_CODES = {"tanh": TANH, "sin": SIN}


def primal(J: np.ndarray, kind: int) -> tuple[np.ndarray, np.ndarray]:
    """``(sigma(v), aux)`` for the value slice; ``aux`` is ``cos(v)`` for sin, else unused."""
    v = J[:, 0]
    if kind == TANH:
        return np.tanh(v), v
    return np.sin(v), np.cos(v)


if njit is not None:

    @njit(cache=True, fastmath=True)
    def jet_act_forward(J, y, aux, kind):
        S, _, P, W = J.shape
        out = np.empty_like(J)
        for s in range(S):
            for p in range(P):
                for w in range(W):
                    a = J[s, 1, p, w]
                    b = J[s, 2, p, w]
                    ys = y[s, p, w]
                    if kind == TANH:
                        s1 = 1.0 - ys * ys
                        s2 = -2.0 * ys * s1
                    else:
                        s1 = aux[s, p, w]
                        s2 = -ys
                    out[s, 0, p, w] = ys
                    out[s, 1, p, w] = s1 * a
                    out[s, 2, p, w] = s2 * a * a + s1 * b
        return out

    @njit(cache=True, fastmath=True)
    def jet_act_backward(J, y, aux, G, kind):
        S, _, P, W = J.shape
        gJ = np.empty_like(J)
        for s in range(S):
            for p in range(P):
                for w in range(W):
                    a = J[s, 1, p, w]
                    b = J[s, 2, p, w]
                    ys = y[s, p, w]
                    if kind == TANH:
                        s1 = 1.0 - ys * ys
                        s2 = -2.0 * ys * s1
                        s3 = s1 * (4.0 * ys * ys - 2.0 * s1)
                    else:
                        s1 = aux[s, p, w]
                        s2 = -ys
                        s3 = -s1
                    g0 = G[s, 0, p, w]
                    g1 = G[s, 1, p, w]
                    g2 = G[s, 2, p, w]
                    gJ[s, 0, p, w] = g0 * s1 + a * (g1 * s2 + g2 * s3 * a) + g2 * s2 * b
                    gJ[s, 1, p, w] = g1 * s1 + 2.0 * g2 * s2 * a
                    gJ[s, 2, p, w] = g2 * s1
        return gJ

    AVAILABLE = True
else:  # pragma: no cover
    AVAILABLE = False
    jet_act_forward = jet_act_backward = None
