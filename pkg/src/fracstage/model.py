"""Dense and multiscale networks ``(x, t) -> u``.

Both kinds store their layers stacked over subnetworks: layer ``k`` has weights
of shape ``(S, fan_in, fan_out)`` and biases ``(S, fan_out)``. A
:class:`DenseNet` is the ``S = 1`` case with unit scale and no head. Subnets
never share parameters, which is the block-diagonal structure of the
multiscale architecture.

Flat parameter order is layer-major: ``W0, b0, W1, b1, ..., W_L, b_L`` and then
the head weights for multiscale nets, each array in C order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad

__all__ = [
    "ModelError",
    "ParamLayout",
    "DenseNet",
    "MultiscaleNet",
    "init_dense",
    "init_multiscale",
    "multiscale_scales",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = "FRACSTAGE-CHECKPOINT 1"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ParamLayout:
    """Maps flat parameter slots to ``(name, shape)`` arrays."""

    names: tuple[str, ...]
    shapes: tuple[tuple[int, ...], ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(math.prod(s) for s in self.shapes)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def flatten(self, arrays: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])

    def unflatten(self, theta: np.ndarray) -> list[np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ModelError(f"expected {self.size} parameters, got shape {theta.shape}")
        out, pos = [], 0
        for shape, n in zip(self.shapes, self.sizes):
            out.append(theta[pos : pos + n].reshape(shape).copy())
            pos += n
        return out

    def locate(self, slot: int) -> tuple[int, str, tuple[int, ...]]:
        """``(subnet, array name, index within that subnet's block)`` for a flat slot.

        Head weights report their own index as the subnet.
        """
        pos = 0
        for name, shape, n in zip(self.names, self.shapes, self.sizes):
            if slot < pos + n:
                idx = np.unravel_index(slot - pos, shape)
                return int(idx[0]), name, tuple(int(i) for i in idx[1:])
            pos += n
        raise IndexError(slot)


class _StackedNet:
    kind = "abstract"

    def __init__(
        self,
        widths: Sequence[int],
        activations: Sequence[str],
        scales: Sequence[float],
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        head: np.ndarray | None,
        kappa: float = 1.0,
    ):
        self.widths = tuple(int(w) for w in widths)
        self.activations = tuple(activations)
        self.scales = np.asarray(scales, dtype=np.float64)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.head = None if head is None else np.asarray(head, dtype=np.float64)
        self.kappa = float(kappa)
        _check_architecture(self.widths, self.activations)
        S = len(self.scales)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (S, self.widths[k], self.widths[k + 1]) or b.shape != (S, self.widths[k + 1]):
                raise ModelError(f"layer {k} has shapes {w.shape}, {b.shape}")

    @property
    def n_subnets(self) -> int:
        return len(self.scales)

    @property
    def layout(self) -> ParamLayout:
        names, shapes = [], []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            names += [f"W{k}", f"b{k}"]
            shapes += [w.shape, b.shape]
        if self.head is not None:
            names.append("head")
            shapes.append(self.head.shape)
        return ParamLayout(tuple(names), tuple(shapes))

    @property
    def n_params(self) -> int:
        return self.layout.size

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        if self.head is not None:
            out.append(self.head)
        return out

    def flatten(self) -> np.ndarray:
        return self.layout.flatten(self.params())

    def with_params(self, params: Sequence[np.ndarray]) -> _StackedNet:
        params = list(params)
        L = len(self.weights)
        head = params[2 * L] if self.head is not None else None
        return type(self)._from_parts(self, params[0 : 2 * L : 2], params[1 : 2 * L : 2], head)

    def unflatten(self, theta: np.ndarray) -> _StackedNet:
        return self.with_params(self.layout.unflatten(theta))

    @classmethod
    def _from_parts(cls, proto, weights, biases, head):
        return cls(proto.widths, proto.activations, proto.scales, weights, biases, head, proto.kappa)

    # -- evaluation -------------------------------------------------------

    def stacked_jet(self, params: Sequence, x: np.ndarray, t: np.ndarray):
        """``(3, P)`` array of ``(u, u_x, u_xx)`` at points ``(x, t)``.

        ``params`` follows :attr:`layout` and may hold :class:`~fracstage.autodiff.Var`
        nodes, in which case the result is recorded on their tape.
        """
        x = np.asarray(x, dtype=np.float64).ravel()
        t = np.asarray(t, dtype=np.float64).ravel()
        P, S = x.size, self.n_subnets
        a = self.scales[:, None]
        J = np.zeros((S, 3, P, 2))
        J[:, 0, :, 0] = a * x
        J[:, 0, :, 1] = a * t
        J[:, 1, :, 0] = a
        L = len(self.weights)
        for k in range(L):
            W, b = params[2 * k], params[2 * k + 1]
            J = ad.jet_affine(J, W, b)
            if self.activations[k] != "identity":
                J = ad.jet_act(J, self.activations[k])
        J = J.reshape(S, 3 * P)
        if self.head is None:
            return J.reshape(3, P)
        head = params[2 * L]
        return ad.matmul(head.reshape(1, S), J).reshape(3, P)

    def jet(self, x, t):
        """``(u, u_x, u_xx)`` arrays at the given points."""
        x = np.asarray(x, dtype=np.float64)
        out = self.stacked_jet(self.params(), x, np.broadcast_to(t, x.shape))
        return tuple(c.reshape(x.shape) for c in out)

    def forward(self, x, t):
        """Network output for scalar/array ``x``, ``t``; ``x`` may be a Jet2 or Dual."""
        total = 0.0
        for s in range(self.n_subnets):
            a = self.scales[s]
            h = _subnet_input(x, t, a, self.weights[0][s])
            h = h + self.biases[0][s]
            h = ad.ACTIVATIONS[self.activations[0]](h)
            for k in range(1, len(self.weights)):
                h = h @ self.weights[k][s] + self.biases[k][s]
                h = ad.ACTIVATIONS[self.activations[k]](h)
            out = _column(h)
            total = out if self.head is None else total + self.head[s] * out
        return total

    def __call__(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape)
        return self._values(x.ravel(), t.ravel()).reshape(x.shape)

    def _values(self, x, t):
        S = self.n_subnets
        a = self.scales[:, None, None]
        h = a * np.stack([x, t], axis=1)[None]
        L = len(self.weights)
        for k in range(L):
            h = h @ self.weights[k] + self.biases[k][:, None, :]
            if self.activations[k] != "identity":
                h = ad.ACTIVATIONS[self.activations[k]](h)
        h = h[..., 0]
        if self.head is None:
            return h[0]
        return self.head.reshape(1, S) @ h


def _subnet_input(x, t, a, W0):
    # (a x, a t) @ W0 for scalar, array, Dual or Jet2 x; W0 has shape (2, width)
    xs = _as_column(x)
    ts = np.asarray(t, dtype=np.float64)
    ts = ts[..., None] if ts.ndim else ts
    return xs * (a * W0[0]) + ts * (a * W0[1])


def _as_column(x):
    if isinstance(x, ad.Jet2):
        return ad.Jet2(_as_column(x.value), _as_column(x.d1), _as_column(x.d2))
    if isinstance(x, ad.Dual):
        return ad.Dual(_as_column(x.val), _as_column(x.dot))
    x = np.asarray(x, dtype=np.float64)
    return x[..., None] if x.ndim else x


def _column(h):
    if isinstance(h, ad.Jet2):
        return ad.Jet2(_column(h.value), _column(h.d1), _column(h.d2))
    if isinstance(h, ad.Dual):
        return ad.Dual(_column(h.val), _column(h.dot))
    return h[..., 0]


class DenseNet(_StackedNet):
    """Fully connected ``2 -> hidden... -> 1`` network."""

    kind = "dense"

    @classmethod
    def _from_parts(cls, proto, weights, biases, head):
        return cls(proto.widths, proto.activations, weights, biases, proto.kappa)

    def __init__(self, widths, activations, weights, biases, kappa: float = 1.0):
        super().__init__(widths, activations, [1.0], weights, biases, None, kappa)


class MultiscaleNet(_StackedNet):
    """Parallel subnets on inputs scaled by ``a_i``, combined by a trainable linear head."""

    kind = "multiscale"

    def __init__(self, widths, activations, scales, weights, biases, head, kappa: float = 1.0):
        if head is None or np.shape(head) != (len(scales),):
            raise ModelError("multiscale net needs one head weight per subnet")
        super().__init__(widths, activations, scales, weights, biases, head, kappa)

    def subnet(self, i: int) -> DenseNet:
        return DenseNet(
            self.widths,
            self.activations,
            [w[i : i + 1].copy() for w in self.weights],
            [b[i : i + 1].copy() for b in self.biases],
            self.kappa,
        )

    @property
    def subnets(self) -> list[DenseNet]:
        return [self.subnet(i) for i in range(self.n_subnets)]


def _check_architecture(widths: Sequence[int], activations: Sequence[str]) -> None:
    if len(widths) < 2 or widths[0] != 2 or widths[-1] != 1 or any(w < 1 for w in widths):
        raise ModelError(f"widths must run from 2 inputs to 1 output, got {tuple(widths)}")
    if len(activations) != len(widths) - 1:
        raise ModelError("need one activation per layer")
    if activations[-1] != "identity":
        raise ModelError("output layer must be linear")
    for a in activations:
        if a not in ad.ACTIVATIONS:
            raise ModelError(f"unknown activation {a!r}")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _init_layers(rng, widths, n_subnets, kappa):
    weights = [np.empty((n_subnets, widths[k], widths[k + 1])) for k in range(len(widths) - 1)]
    biases = [np.zeros((n_subnets, widths[k + 1])) for k in range(len(widths) - 1)]
    for s in range(n_subnets):
        for k in range(len(widths) - 1):
            weights[k][s] = _glorot(rng, widths[k], widths[k + 1])
        weights[0][s] *= kappa
    return weights, biases


def init_dense(widths: Sequence[int], activations: Sequence[str] | str = "tanh", kappa: float = 1.0, seed: int = 0) -> DenseNet:
    """Glorot-uniform weights, zero biases, first layer scaled by ``kappa``.

    ``activations`` may be a single name applied to every hidden layer.
    """
    widths = tuple(int(w) for w in widths)
    if not kappa > 0:
        raise ModelError(f"kappa must be positive, got {kappa!r}")
    if isinstance(activations, str):
        activations = (activations,) * (len(widths) - 2) + ("identity",)
    _check_architecture(widths, activations)
    rng = np.random.default_rng(seed)
    weights, biases = _init_layers(rng, widths, 1, kappa)
    return DenseNet(widths, activations, weights, biases, kappa)


def init_multiscale(
    subnet_widths: Sequence[int], scales: Sequence[float], seed: int = 0, kappa: float = 1.0
) -> MultiscaleNet:
    """Subnets with a sine first hidden layer and tanh afterwards; head starts at ``1/S``."""
    scales = [float(a) for a in scales]
    if not scales or any(not a > 0 for a in scales):
        raise ModelError(f"scale factors must be positive and non-empty, got {scales}")
    widths = tuple(int(w) for w in subnet_widths)
    n_hidden = len(widths) - 2
    if n_hidden < 1:
        raise ModelError("multiscale subnets need at least one hidden layer")
    activations = ("sin",) + ("tanh",) * (n_hidden - 1) + ("identity",)
    _check_architecture(widths, activations)
    rng = np.random.default_rng(seed)
    weights, biases = _init_layers(rng, widths, len(scales), kappa)
    head = np.full(len(scales), 1.0 / len(scales))
    return MultiscaleNet(widths, activations, scales, weights, biases, head, kappa)


def multiscale_scales(f_x: float, alpha: float) -> tuple[float, ...]:
    """Scale factors for a dominant spatial frequency ``f_x``.

    ``(alpha, 1, 2, ..., ceil(f_x))`` below 10, otherwise
    ``(alpha, 1, 2, 4, ..., 2**n)`` with ``2**n >= f_x``.
    """
    if f_x < 10:
        top = max(1, math.ceil(f_x))
        return (float(alpha),) + tuple(float(k) for k in range(1, top + 1))
    out = [float(alpha), 1.0]
    p = 2.0
    while True:
        out.append(p)
        if p >= f_x:
            return tuple(out)
        p *= 2.0


def forward(net: _StackedNet, x, t):
    return net.forward(x, t)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net: _StackedNet, path) -> None:
    """Write a plain-text header followed by little-endian float64 parameters."""
    theta = net.flatten()
    header = [
        CHECKPOINT_MAGIC,
        f"kind {net.kind}",
        "widths " + " ".join(str(w) for w in net.widths),
        "activations " + " ".join(net.activations),
        "scales " + " ".join(repr(float(a)) for a in net.scales),
        f"kappa {net.kappa!r}",
        f"n_params {theta.size}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(theta.astype("<f8").tobytes())


def load_checkpoint(path) -> _StackedNet:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    fields: dict[str, list[str]] = {}
    first = buf.readline().decode("ascii").strip()
    if first != CHECKPOINT_MAGIC:
        raise ModelError(f"{path}: not a checkpoint file")
    while True:
        line = buf.readline().decode("ascii").strip()
        if line == "end":
            break
        if not line:
            raise ModelError(f"{path}: truncated header")
        key, *vals = line.split()
        fields[key] = vals
    n = int(fields["n_params"][0])
    theta = np.frombuffer(buf.read(), dtype="<f8").astype(np.float64)
    if theta.size != n:
        raise ModelError(f"{path}: expected {n} parameters, found {theta.size}")
    widths = [int(w) for w in fields["widths"]]
    activations = fields["activations"]
    scales = [float(a) for a in fields["scales"]]
    kappa = float(fields["kappa"][0])
    S = len(scales)
    shapes_w = [np.zeros((S, widths[k], widths[k + 1])) for k in range(len(widths) - 1)]
    shapes_b = [np.zeros((S, widths[k + 1])) for k in range(len(widths) - 1)]
    if fields["kind"][0] == "dense":
        proto = DenseNet(widths, activations, shapes_w, shapes_b, kappa)
    else:
        proto = MultiscaleNet(widths, activations, scales, shapes_w, shapes_b, np.zeros(S), kappa)
    return proto.unflatten(theta)
