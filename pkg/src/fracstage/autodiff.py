"""Small differentiation engine.

Two pieces work together:

* :class:`Jet2` and :class:`Dual` carry input derivatives forward. A ``Jet2``
  holds ``(value, d/dx, d2/dx2)`` and propagates second-order Taylor rules; a
  ``Dual`` is first order and may be nested.
* :class:`Tape` / :class:`Var` implement reverse mode over numpy arrays, used
  for gradients of scalar losses with respect to parameters.

Jet components may themselves be :class:`Var` nodes, so a Laplacian computed by
forward jets is differentiated exactly by the reverse sweep. Networks use the
fused primitives :func:`jet_act` and :func:`jet_bias`, which act on a stacked
array whose axis 1 holds the three jet components.

Reductions use numpy's pairwise summation in a fixed order, so repeated runs
on the same inputs give bit-identical gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Tape",
    "Var",
    "Jet2",
    "Dual",
    "grad",
    "value_and_grad",
    "eval_with_jet",
    "sin",
    "cos",
    "tanh",
    "exp",
    "matmul",
    "jet_act",
    "jet_bias",
    "jet_affine",
    "sum",
    "mean",
    "square",
]


# ---------------------------------------------------------------------------
# reverse mode

# fused numba kernels for jet activations when available
USE_KERNELS = _kernels.AVAILABLE


class Tape:
    """Records operations in creation order; the reverse sweep walks it backwards."""

    def __init__(self) -> None:
        self.nodes: list[Var] = []

    def variable(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), self)

    def backward(self, out: Var, seed=None) -> None:
        if out.tape is not self:
            raise ValueError("output does not belong to this tape")
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(self.nodes):
            g = node.grad
            vjp = node._vjp
            if g is None or vjp is None:
                continue
            for parent, gp in zip(node._parents, vjp(g)):
                if gp is None or not isinstance(parent, Var):
                    continue
                parent.grad = gp if parent.grad is None else parent.grad + gp
            node._vjp = None
            node._parents = ()


class Var:
    """A tape node holding a numpy value."""

    __slots__ = ("value", "grad", "tape", "_parents", "_vjp")
    __array_priority__ = 1000

    def __init__(self, value: np.ndarray, tape: Tape, parents: tuple = (), vjp: Callable | None = None):
        self.value = value
        self.grad = None
        self.tape = tape
        self._parents = parents
        self._vjp = vjp
        tape.nodes.append(self)

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(other))

    def __rsub__(self, other):
        return _add(_neg(self), other)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return _mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return _neg(self)

    def __pow__(self, k):
        if k == 2:
            return square(self)
        if k == 1:
            return self
        raise TypeError("only powers 1 and 2 are supported on Var")

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return _reshape(self, shape)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def _val(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a + b
    av, bv = _val(a), _val(b)
    sa, sb = np.shape(av), np.shape(bv)
    return Var(av + bv, tape, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def _neg(a):
    if not isinstance(a, Var):
        return -a
    return Var(-a.value, a.tape, (a,), lambda g: (-g,))


def _mul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a * b
    av, bv = _val(a), _val(b)
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        ga = _unbroadcast(g * bv, sa) if isinstance(a, Var) else None
        gb = _unbroadcast(g * av, sb) if isinstance(b, Var) else None
        return ga, gb

    return Var(av * bv, tape, (a, b), vjp)


def square(a):
    if not isinstance(a, Var):
        return a * a
    av = a.value
    return Var(av * av, a.tape, (a,), lambda g: (2.0 * g * av,))


def matmul(a, b):
    """Matrix product with numpy broadcasting; 1-D operands are promoted."""
    tape = _tape_of(a, b)
    if tape is None:
        return a @ b
    av = np.asarray(_val(a), dtype=np.float64)
    bv = np.asarray(_val(b), dtype=np.float64)
    a2 = av[None, :] if av.ndim == 1 else av
    b2 = bv[:, None] if bv.ndim == 1 else bv
    out2 = a2 @ b2
    out = out2
    if av.ndim == 1:
        out = out[..., 0, :]
    if bv.ndim == 1:
        out = out[..., 0]

    def vjp(g):
        g2 = g.reshape(out2.shape)
        ga = gb = None
        if isinstance(a, Var):
            ga = _unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape).reshape(av.shape)
        if isinstance(b, Var):
            gb = _unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape).reshape(bv.shape)
        return ga, gb

    return Var(out, tape, (a, b), vjp)


def _getitem(a: Var, idx):
    shape = a.value.shape

    def vjp(g):
        full = np.zeros(shape)
        if _fancy(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return Var(a.value[idx], a.tape, (a,), vjp)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def _reshape(a: Var, shape):
    old = a.value.shape
    return Var(a.value.reshape(shape), a.tape, (a,), lambda g: (g.reshape(old),))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    if not isinstance(a, Var):
        return np.sum(a, axis=axis)
    shape = a.value.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Var(np.asarray(np.sum(a.value, axis=axis)), a.tape, (a,), vjp)


def mean(a, axis=None):
    if not isinstance(a, Var):
        return np.mean(a, axis=axis)
    n = a.value.size if axis is None else a.value.shape[axis]
    return sum(a, axis) * (1.0 / n)


def _unary(a, f, df):
    y = f(a.value)
    return Var(y, a.tape, (a,), lambda g: (g * df(a.value, y),))


# ---------------------------------------------------------------------------
# forward mode


class Jet2:
    """Second-order jet ``(value, d1, d2)`` in one input direction.

    Components may be floats, numpy arrays, :class:`Var` nodes or
    :class:`Dual` numbers.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value, d1=0.0, d2=0.0):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def variable(cls, x) -> Jet2:
        """Seed the independent variable: ``(x, 1, 0)``."""
        return cls(x, 1.0 + 0.0 * x, 0.0 * x)

    @classmethod
    def constant(cls, c) -> Jet2:
        return cls(c, 0.0 * c, 0.0 * c)

    def __iter__(self):
        yield self.value
        yield self.d1
        yield self.d2

    def __repr__(self) -> str:
        return f"Jet2({self.value!r}, {self.d1!r}, {self.d2!r})"

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)
        return Jet2(self.value + other, self.d1, self.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.value * other.value,
                self.d1 * other.value + self.value * other.d1,
                self.d2 * other.value + 2.0 * (self.d1 * other.d1) + self.value * other.d2,
            )
        return Jet2(self.value * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            raise TypeError("division by a Jet2 is not supported")
        return self * (1.0 / other)

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise TypeError("Jet2 supports non-negative integer powers only")
        out = Jet2.constant(1.0 + 0.0 * self.value)
        for _ in range(int(k)):
            out = out * self
        return out

    def __matmul__(self, w):
        return Jet2(matmul(self.value, w), matmul(self.d1, w), matmul(self.d2, w))

    def _chain(self, f0, f1, f2):
        a = self.d1
        return Jet2(f0, f1 * a, f2 * (a * a) + f1 * self.d2)


class Dual:
    """First-order dual number ``val + eps * dot``; components may be Duals."""

    __slots__ = ("val", "dot")

    def __init__(self, val, dot=0.0):
        self.val = val
        self.dot = dot

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + other, self.dot)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.dot * other.val + self.val * other.dot)
        return Dual(self.val * other, self.dot * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    def __matmul__(self, w):
        return Dual(self.val @ w, self.dot @ w)


# ---------------------------------------------------------------------------
# elementwise functions dispatching on argument type


def tanh(x):
    if isinstance(x, Jet2):
        s = tanh(x.value)
        s1 = 1.0 - s * s
        return x._chain(s, s1, -2.0 * (s * s1))
    if isinstance(x, Dual):
        s = tanh(x.val)
        return Dual(s, (1.0 - s * s) * x.dot)
    if isinstance(x, Var):
        return _unary(x, np.tanh, lambda v, y: 1.0 - y * y)
    return np.tanh(x)


def sin(x):
    if isinstance(x, Jet2):
        s, c = sin(x.value), cos(x.value)
        return x._chain(s, c, -s)
    if isinstance(x, Dual):
        return Dual(sin(x.val), cos(x.val) * x.dot)
    if isinstance(x, Var):
        return _unary(x, np.sin, lambda v, y: np.cos(v))
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet2):
        s, c = sin(x.value), cos(x.value)
        return x._chain(c, -s, -c)
    if isinstance(x, Dual):
        return Dual(cos(x.val), -sin(x.val) * x.dot)
    if isinstance(x, Var):
        return _unary(x, np.cos, lambda v, y: -np.sin(v))
    return np.cos(x)


def exp(x):
    if isinstance(x, Jet2):
        e = exp(x.value)
        return x._chain(e, e, e)
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, e * x.dot)
    if isinstance(x, Var):
        return _unary(x, np.exp, lambda v, y: y)
    return np.exp(x)


def identity(x):
    return x


ACTIVATIONS: dict[str, Callable] = {"tanh": tanh, "sin": sin, "identity": identity}


# ---------------------------------------------------------------------------
# fused jet primitives on stacked arrays, components on axis 1


def _act_derivs(kind: str, v: np.ndarray):
    if kind == "tanh":
        s = np.tanh(v)
        s1 = 1.0 - s * s
        s2 = -2.0 * s * s1
        return s, s1, s2, s
    if kind == "sin":
        s = np.sin(v)
        c = np.cos(v)
        return s, c, -s, c
    raise ValueError(f"unknown activation {kind!r}")


def _act_third(kind: str, s1, s2, aux):
    if kind == "tanh":
        # tanh''' = -2 s1^2 + 4 s^2 s1 with s = aux
        return s1 * (4.0 * aux * aux - 2.0 * s1)
    return -aux  # sin''' = -cos


def jet_act(J, kind: str):
    """Apply an activation to a stacked jet ``J[:, c]``, ``c = value, d1, d2``."""
    Jv = _val(J)
    if USE_KERNELS and Jv.ndim == 4 and Jv.flags.c_contiguous:
        code = _kernels.KIND_CODES[kind]
        y, aux = _kernels.primal(Jv, code)
        out = _kernels.jet_act_forward(Jv, y, aux, code)
        if not isinstance(J, Var):
            return out
        return Var(out, J.tape, (J,), lambda G: (_kernels.jet_act_backward(Jv, y, aux, np.ascontiguousarray(G), code),))
    return _jet_act_numpy(J, kind)


def _jet_act_numpy(J, kind: str):
    Jv = _val(J)
    v, a, b = Jv[:, 0], Jv[:, 1], Jv[:, 2]
    s0, s1, s2, aux = _act_derivs(kind, v)
    out = np.empty_like(Jv)
    out[:, 0] = s0
    out[:, 1] = s1 * a
    out[:, 2] = s2 * (a * a) + s1 * b
    if not isinstance(J, Var):
        return out

    def vjp(G):
        g0, g1, g2 = G[:, 0], G[:, 1], G[:, 2]
        s3 = _act_third(kind, s1, s2, aux)
        gJ = np.empty_like(Jv)
        g2s2 = g2 * s2
        gJ[:, 0] = g0 * s1 + a * (g1 * s2 + g2 * s3 * a) + g2s2 * b
        gJ[:, 1] = g1 * s1 + 2.0 * g2s2 * a
        gJ[:, 2] = g2 * s1
        return (gJ,)

    return Var(out, J.tape, (J,), vjp)


def jet_affine(J, W, b):
    """``J @ W + b`` for a stacked jet ``J`` ``(S, 3, P, fan_in)``; bias hits the value only."""
    Jv, Wv, bv = _val(J), _val(W), _val(b)
    S, _, P, fan_in = Jv.shape
    J2 = Jv.reshape(S, 3 * P, fan_in)
    out = (J2 @ Wv).reshape(S, 3, P, Wv.shape[-1])
    out[:, 0] += bv[:, None, :]
    tape = _tape_of(J, W, b)
    if tape is None:
        return out

    def vjp(G):
        G2 = G.reshape(S, 3 * P, -1)
        gJ = (G2 @ np.swapaxes(Wv, -1, -2)).reshape(Jv.shape) if isinstance(J, Var) else None
        gW = np.swapaxes(J2, -1, -2) @ G2 if isinstance(W, Var) else None
        gb = G[:, 0].sum(axis=1) if isinstance(b, Var) else None
        return gJ, gW, gb

    return Var(out, tape, (J, W, b), vjp)


def jet_bias(J, b):
    """Add bias ``b`` (shape ``(S, W)``) to the value component of ``J`` ``(S, 3, P, W)``."""
    Jv, bv = _val(J), _val(b)
    out = Jv.copy()
    out[:, 0] += bv[:, None, :]
    tape = _tape_of(J, b)
    if tape is None:
        return out

    def vjp(G):
        return (G if isinstance(J, Var) else None, G[:, 0].sum(axis=1) if isinstance(b, Var) else None)

    return Var(out, tape, (J, b), vjp)


# ---------------------------------------------------------------------------
# user-facing helpers


def value_and_grad(fn: Callable, params: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``fn(*vars)`` and its gradient with respect to every array in ``params``."""
    tape = Tape()
    leaves = [tape.variable(p) for p in params]
    out = fn(*leaves)
    if not isinstance(out, Var):
        return float(out), [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]
    if out.value.size != 1:
        raise ValueError("value_and_grad needs a scalar output")
    tape.backward(out)
    grads = [np.zeros_like(v.value) if v.grad is None else v.grad for v in leaves]
    # nodes point back at the tape; dropping the list breaks the cycle so
    # intermediates are freed now rather than at the next full collection
    tape.nodes.clear()
    return float(out.value), grads


def grad(loss: Callable, params) -> np.ndarray:
    """Gradient of the scalar ``loss(theta)`` at the parameter vector ``params``."""
    _, (g,) = value_and_grad(loss, [np.asarray(params, dtype=np.float64)])
    return g


def eval_with_jet(model, x, t):
    """``(u, u_x, u_xx)`` of ``model`` at ``(x, t)``.

    ``model`` is either an object with a ``jet(x, t)`` method (networks,
    composite solutions) or a plain callable written with arithmetic and the
    functions of this module, which is called on a seeded :class:`Jet2`.
    """
    scalar = np.ndim(x) == 0 and np.ndim(t) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ta = np.broadcast_to(np.asarray(t, dtype=np.float64), xa.shape)
    if hasattr(model, "jet"):
        u, ux, uxx = model.jet(xa, ta)
    else:
        out = model(Jet2.variable(xa), ta)
        if not isinstance(out, Jet2):
            out = Jet2.constant(np.broadcast_to(np.asarray(out, dtype=np.float64), xa.shape))
        u, ux, uxx = out
    u, ux, uxx = (np.broadcast_to(np.asarray(c, dtype=np.float64), xa.shape) for c in (u, ux, uxx))
    if scalar:
        return float(u[0]), float(ux[0]), float(uxx[0])
    return u, ux, uxx
