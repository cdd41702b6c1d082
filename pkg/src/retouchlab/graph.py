"""Minimal reverse-mode automatic differentiation and the per-pixel MLP.

The tape records primitive ops (linear map, adds, the rational-sigmoid
activation, mean / L1 reductions, plus concat and constant-mask multiply
needed for latent composition) in construction order, which is already
topological; backward walks it once in reverse. Everything is float64
numpy; persisted checkpoints are float32 little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, CorruptData, ShapeMismatch, VersionMismatch
from .rng import Rng

# Renderer architecture: residual per-pixel MLP with additive latent
# injection into every hidden layer. The zero-initialized output head
# makes the freshly initialized network an exact identity map.
# Hidden width 48: width 32 saturates ~0.035 L1 on full three-category
# transforms, above the 0.03 distillation budget.
INPUT_WIDTH = 3
HIDDEN_LAYERS = 4
HIDDEN_WIDTH = 48
LATENT_BLOCK = 32
LATENT_WIDTH = 3 * LATENT_BLOCK
OUTPUT_WIDTH = 3


class Tensor:
    __slots__ = ("val", "grad", "requires", "produced")

    def __init__(self, val: np.ndarray, requires: bool = False):
        self.val = np.asarray(val, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires = requires
        self.produced = False  # True once a tape op created it

    @property
    def shape(self):
        return self.val.shape

    def needs_grad(self) -> bool:
        """Intermediates always carry adjoints; leaves only when marked."""
        return self.produced or self.requires

    def grad_or_zero(self) -> np.ndarray:
        """Zero gradient for leaves the loss never reached (disconnected)."""
        return self.grad if self.grad is not None else np.zeros_like(self.val)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


class Tape:
    """Records primitives during the forward pass; replays adjoints backward."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []

    def _push(self, out: Tensor, backward) -> Tensor:
        out.produced = True
        self._nodes.append((out, backward))
        return out

    def leaf(self, val: np.ndarray, requires: bool = False) -> Tensor:
        return Tensor(val, requires)

    def linear(self, x: Tensor, w: Tensor) -> Tensor:
        """x[N,i] @ w[o,i].T -> [N,o]."""
        if x.val.shape[1] != w.val.shape[1]:
            raise ShapeMismatch(f"linear: {x.val.shape} @ {w.val.shape}.T")
        out = Tensor(x.val @ w.val.T)

        def backward(g=out):
            if w.needs_grad():
                _acc(w, g.grad.T @ x.val)
            if x.needs_grad():
                _acc(x, g.grad @ w.val)

        return self._push(out, backward)

    def matvec(self, w: Tensor, v: Tensor) -> Tensor:
        """w[o,i] @ v[i] -> [o]."""
        if w.val.shape[1] != v.val.shape[0]:
            raise ShapeMismatch(f"matvec: {w.val.shape} @ {v.val.shape}")
        out = Tensor(w.val @ v.val)

        def backward(g=out):
            if w.needs_grad():
                _acc(w, np.outer(g.grad, v.val))
            if v.needs_grad():
                _acc(v, w.val.T @ g.grad)

        return self._push(out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.val.shape != b.val.shape:
            raise ShapeMismatch(f"add: {a.val.shape} vs {b.val.shape}")
        out = Tensor(a.val + b.val)

        def backward(g=out):
            if a.needs_grad():
                _acc(a, g.grad)
            if b.needs_grad():
                _acc(b, g.grad)

        return self._push(out, backward)

    def add_row(self, m: Tensor, v: Tensor) -> Tensor:
        """Broadcast-add a [o] vector over the rows of [N,o]."""
        if m.val.shape[1] != v.val.shape[0]:
            raise ShapeMismatch(f"add_row: {m.val.shape} + {v.val.shape}")
        out = Tensor(m.val + v.val[None, :])

        def backward(g=out):
            if m.needs_grad():
                _acc(m, g.grad)
            if v.needs_grad():
                _acc(v, g.grad.sum(axis=0))

        return self._push(out, backward)

    def rational_sigmoid(self, x: Tensor) -> Tensor:
        """s(x) = x / (1 + |x|); smooth, bounded, C1 everywhere."""
        denom = 1.0 + np.abs(x.val)
        out = Tensor(x.val / denom)

        def backward(g=out, denom=denom):
            _acc(x, g.grad / (denom * denom))

        return self._push(out, backward)

    def mul_const(self, x: Tensor, c: float) -> Tensor:
        out = Tensor(x.val * c)

        def backward(g=out):
            _acc(x, g.grad * c)

        return self._push(out, backward)

    def mul_mask(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """Elementwise multiply by a constant array (binary masks)."""
        mask = np.asarray(mask, dtype=np.float64)
        out = Tensor(x.val * mask)

        def backward(g=out):
            _acc(x, g.grad * mask)

        return self._push(out, backward)

    def concat(self, parts: list[Tensor]) -> Tensor:
        out = Tensor(np.concatenate([p.val for p in parts]))
        sizes = [p.val.shape[0] for p in parts]

        def backward(g=out):
            off = 0
            for p, n in zip(parts, sizes):
                _acc(p, g.grad[off : off + n])
                off += n

        return self._push(out, backward)

    def hstack(self, parts: list[Tensor]) -> Tensor:
        """Column-concatenate [N,a],[N,b],... into [N,a+b+...]."""
        out = Tensor(np.concatenate([p.val for p in parts], axis=1))
        widths = [p.val.shape[1] for p in parts]

        def backward(g=out):
            off = 0
            for p, w in zip(parts, widths):
                _acc(p, g.grad[:, off : off + w])
                off += w

        return self._push(out, backward)

    def repeat_interleave_rows(self, x: Tensor, k: int) -> Tensor:
        """Repeat each row of [D,m] k times -> [D*k,m]."""
        out = Tensor(np.repeat(x.val, k, axis=0))
        d, m = x.val.shape

        def backward(g=out):
            _acc(x, g.grad.reshape(d, k, m).sum(axis=1))

        return self._push(out, backward)

    def add_rows_grouped(self, m: Tensor, b: Tensor, k: int) -> Tensor:
        """Add row j of b[D,w] to rows j*k..(j+1)*k of m[D*k,w].

        The batched form of broadcast-add when consecutive row blocks
        share a bias (one latent injection per draw group).
        """
        d, w = b.val.shape
        if m.val.shape != (d * k, w):
            raise ShapeMismatch(f"add_rows_grouped: {m.val.shape} vs {b.val.shape} x{k}")
        out = Tensor(m.val + np.repeat(b.val, k, axis=0))

        def backward(g=out):
            if m.needs_grad():
                _acc(m, g.grad)
            if b.needs_grad():
                _acc(b, g.grad.reshape(d, k, w).sum(axis=1))

        return self._push(out, backward)

    def mean(self, x: Tensor) -> Tensor:
        out = Tensor(np.float64(np.mean(x.val)))

        def backward(g=out):
            _acc(x, np.full_like(x.val, float(g.grad) / x.val.size))

        return self._push(out, backward)

    def l1_loss(self, a: Tensor, b: Tensor) -> Tensor:
        """Mean absolute difference; subgradient uses sign(0) = 0."""
        if a.val.shape != b.val.shape:
            raise ShapeMismatch(f"l1_loss: {a.val.shape} vs {b.val.shape}")
        diff = a.val - b.val
        out = Tensor(np.float64(np.mean(np.abs(diff))))

        def backward(g=out, diff=diff):
            s = np.sign(diff) * (float(g.grad) / diff.size)
            if a.needs_grad():
                _acc(a, s)
            if b.needs_grad():
                _acc(b, -s)

        return self._push(out, backward)

    def backward(self, loss: Tensor) -> None:
        if loss.val.shape != ():
            raise ShapeMismatch("backward() needs a scalar loss")
        loss.grad = np.float64(1.0)
        for out, fn in reversed(self._nodes):
            if out.grad is not None:
                fn()


class Adam:
    """Standard Adam with bias correction; deterministic given inputs."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.val) for p in params]
        self.v = [np.zeros_like(p.val) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        alpha = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad_or_zero()
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p.val -= alpha * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


# --------------------------------------------------------------------------
# The per-pixel renderer MLP
# --------------------------------------------------------------------------


def _xavier(rng: Rng, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return (rng.uniforms(fan_out * fan_in) * 2.0 - 1.0).reshape(
        fan_out, fan_in
    ) * bound


@dataclass
class RetouchNet:
    """Weights of the per-pixel color-mapping MLP.

    Four hidden layers of width 32 with per-layer 32x96 latent
    projections, residual output head. `arrays()` yields the declared
    checkpoint order: (W, b, U) per hidden layer, then W_out, b_out.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    latent_proj: list[np.ndarray]
    w_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def initialize(cls, seed: int) -> "RetouchNet":
        rng = Rng(seed).derive(0x4E45)
        weights, biases, latent = [], [], []
        fan_in = INPUT_WIDTH
        for _ in range(HIDDEN_LAYERS):
            weights.append(_xavier(rng, HIDDEN_WIDTH, fan_in))
            biases.append(np.zeros(HIDDEN_WIDTH))
            latent.append(_xavier(rng, HIDDEN_WIDTH, LATENT_WIDTH))
            fan_in = HIDDEN_WIDTH
        return cls(
            weights=weights,
            biases=biases,
            latent_proj=latent,
            w_out=np.zeros((OUTPUT_WIDTH, HIDDEN_WIDTH)),
            b_out=np.zeros(OUTPUT_WIDTH),
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b, u in zip(self.weights, self.biases, self.latent_proj):
            out.extend([w, b, u])
        out.extend([self.w_out, self.b_out])
        return out

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "RetouchNet":
        if len(arrays) != 3 * HIDDEN_LAYERS + 2:
            raise ShapeMismatch(
                f"expected {3 * HIDDEN_LAYERS + 2} arrays, got {len(arrays)}"
            )
        weights, biases, latent = [], [], []
        for k in range(HIDDEN_LAYERS):
            weights.append(arrays[3 * k])
            biases.append(arrays[3 * k + 1])
            latent.append(arrays[3 * k + 2])
        return cls(weights, biases, latent, arrays[-2], arrays[-1])


def mlp_forward(net: RetouchNet, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Inference forward pass: rows of x are pixels, processed independently."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != INPUT_WIDTH:
        raise ShapeMismatch(f"expected (N, {INPUT_WIDTH}) pixels, got {x.shape}")
    if z.shape != (LATENT_WIDTH,):
        raise ShapeMismatch(f"expected latent ({LATENT_WIDTH},), got {z.shape}")
    h = x
    for w, b, u in zip(net.weights, net.biases, net.latent_proj):
        a = h @ w.T + (b + u @ z)[None, :]
        h = a / (1.0 + np.abs(a))
    # association matches the tape path so both produce identical bits
    return x + (h @ net.w_out.T + net.b_out[None, :])


class NetTensors:
    """Tape leaves aliasing a RetouchNet's arrays (Adam updates in place)."""

    def __init__(self, net: RetouchNet):
        self.weights = [Tensor(w, requires=True) for w in net.weights]
        self.biases = [Tensor(b, requires=True) for b in net.biases]
        self.latent_proj = [Tensor(u, requires=True) for u in net.latent_proj]
        self.w_out = Tensor(net.w_out, requires=True)
        self.b_out = Tensor(net.b_out, requires=True)

    def all(self) -> list[Tensor]:
        out = []
        for w, b, u in zip(self.weights, self.biases, self.latent_proj):
            out.extend([w, b, u])
        out.extend([self.w_out, self.b_out])
        return out


def mlp_forward_tape(
    tape: Tape, nt: NetTensors, x: Tensor, z: Tensor
) -> Tensor:
    """Training forward pass mirroring mlp_forward, on the tape."""
    h = x
    for w, b, u in zip(nt.weights, nt.biases, nt.latent_proj):
        inject = tape.add(b, tape.matvec(u, z))
        a = tape.add_row(tape.linear(h, w), inject)
        h = tape.rational_sigmoid(a)
    out = tape.add_row(tape.linear(h, nt.w_out), nt.b_out)
    return tape.add(x, out)


# --------------------------------------------------------------------------
# Checkpoint file format: magic "VRNET1", shape table, float32 LE payload
# --------------------------------------------------------------------------

_NET_MAGIC = b"VRNET1"


def save_weights(path: str, arrays: list[np.ndarray]) -> None:
    parts = [_NET_MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
    for a in arrays:
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_weights(path: str) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:5] != _NET_MAGIC[:5]:
        raise BadMagic("not a weight checkpoint")
    if blob[:6] != _NET_MAGIC:
        raise VersionMismatch(f"unknown checkpoint version {blob[5:6]!r}")
    pos = 6
    try:
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            shapes.append(shape)
    except struct.error as exc:
        raise CorruptData(f"truncated shape table: {exc}") from exc
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        end = pos + 4 * n
        if end > len(blob):
            raise CorruptData("truncated weight payload")
        arr = np.frombuffer(blob[pos:end], dtype="<f4").reshape(shape)
        arrays.append(arr.astype(np.float64))
        pos = end
    if pos != len(blob):
        raise CorruptData("trailing bytes after weight payload")
    return arrays
