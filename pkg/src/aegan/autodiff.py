"""Dense n-d tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array (float32 in normal use); every operation
records its parents plus a closure that routes the upstream gradient to
them.  ``backward()`` walks the recorded graph once, in reverse topological
order.  Leaves created with ``requires_grad=False`` act as constants: no
gradient is ever accumulated into them and subgraphs that cannot reach a
trainable leaf are not recorded at all, which is what makes training
against a frozen network cheap.

float64 tensors are supported solely so the finite-difference checker can
run shadow evaluations of the same code paths at higher precision.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError

BCE_EPS = 1e-7  # clamp for logs inside the cross-entropy, smallest safe in float32
BN_EPS = 1e-5


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def item(self) -> float:
        return float(self.data)

    def backward(self, seed=None) -> None:
        """Reverse pass from this node; visits each recorded node exactly once."""
        if seed is None:
            if self.data.ndim != 0:
                raise ValidationError("backward() without a seed needs a scalar output")
            seed = np.ones((), dtype=self.data.dtype)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(seed, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar used by the losses
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.dtype)))


def _wrap(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Graph node; drops the tape when no parent is trainable."""
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = any(p.requires_grad for p in parents)
    if t.requires_grad:
        t._parents = tuple(p for p in parents if p.requires_grad)
        t._backward = backward
    else:
        t._parents = ()
        t._backward = None
    return t


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural operations


def add(x: Tensor, y: Tensor) -> Tensor:
    out = _node(x.data + y.data, (x, y), None)

    def backward(g):
        _accum(x, _unbroadcast(g, x.data.shape))
        _accum(y, _unbroadcast(g, y.data.shape))

    out._backward = backward
    return out


def sub(x: Tensor, y: Tensor) -> Tensor:
    out = _node(x.data - y.data, (x, y), None)

    def backward(g):
        _accum(x, _unbroadcast(g, x.data.shape))
        _accum(y, _unbroadcast(-g, y.data.shape))

    out._backward = backward
    return out


def mul(x: Tensor, y: Tensor) -> Tensor:
    out = _node(x.data * y.data, (x, y), None)

    def backward(g):
        _accum(x, _unbroadcast(g * y.data, x.data.shape))
        _accum(y, _unbroadcast(g * x.data, y.data.shape))

    out._backward = backward
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = _node(x.data.reshape(shape), (x,), None)
    out._backward = lambda g: _accum(x, g.reshape(x.data.shape))
    return out


def mean_all(x: Tensor) -> Tensor:
    out = _node(x.data.mean(), (x,), None)
    n = x.data.size
    out._backward = lambda g: _accum(x, np.broadcast_to(g / n, x.data.shape).copy())
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _node(x.data.sum(), (x,), None)
    out._backward = lambda g: _accum(x, np.broadcast_to(g, x.data.shape).copy())
    return out


def concat_channels(x: Tensor, y: Tensor) -> Tensor:
    """Concatenate along the trailing (channel) axis."""
    if x.data.shape[:-1] != y.data.shape[:-1]:
        raise ShapeError(f"concat_channels: leading extents differ: {x.data.shape} vs {y.data.shape}")
    cx = x.data.shape[-1]
    out = _node(np.concatenate([x.data, y.data], axis=-1), (x, y), None)

    def backward(g):
        _accum(x, g[..., :cx])
        _accum(y, g[..., cx:])

    out._backward = backward
    return out


def tile_spatial(z: Tensor, h: int, w: int) -> Tensor:
    """(B, L) -> (B, h, w, L), every spatial position carrying the same vector."""
    if z.data.ndim != 2:
        raise ShapeError(f"tile_spatial expects (B, L), got {z.data.shape}")
    data = np.broadcast_to(z.data[:, None, None, :], (z.data.shape[0], h, w, z.data.shape[1])).copy()
    out = _node(data, (z,), None)
    out._backward = lambda g: _accum(z, g.sum(axis=(1, 2)))
    return out


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0), (x,), None)
    out._backward = lambda g: _accum(x, g * (x.data > 0))
    return out


def lrelu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = _node(np.where(x.data > 0, x.data, x.data * np.asarray(slope, x.dtype)), (x,), None)
    out._backward = lambda g: _accum(x, g * np.where(x.data > 0, np.asarray(1, x.dtype), np.asarray(slope, x.dtype)))
    return out


def sigmoid(x: Tensor) -> Tensor:
    # 0.5 * (1 + tanh(x/2)) is overflow-free for any finite input
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data.astype(x.dtype, copy=False)))
    y = y.astype(x.dtype, copy=False)
    out = _node(y, (x,), None)
    out._backward = lambda g: _accum(x, g * y * (1 - y))
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _node(y, (x,), None)
    out._backward = lambda g: _accum(x, g * (1 - y * y))
    return out


# ---------------------------------------------------------------------------
# network layers as operations


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map (B,N) @ (N,M) + (M,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense: input {x.data.shape} incompatible with weights {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"dense: bias {b.data.shape} incompatible with weights {w.data.shape}")
    out = _node(x.data @ w.data + b.data, (x, w, b), None)

    def backward(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    out._backward = backward
    return out


def conv2d(x: Tensor, k: Tensor, stride: int = 2) -> Tensor:
    """Strided cross-correlation, 'same' padding: output extent = ceil(input / stride)."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input and kernel, got {x.data.shape} and {k.data.shape}")
    if x.data.shape[3] != k.data.shape[2]:
        raise ShapeError(f"conv2d: input channels {x.data.shape} do not match kernel {k.data.shape}")
    _, h, w, _ = x.data.shape
    kh, kw = k.data.shape[:2]
    out = _node(kernels.conv2d_forward(x.data, k.data, stride), (x, k), None)

    def backward(g):
        if x.requires_grad:
            _accum(x, kernels.conv2d_grad_input(g, k.data, h, w, stride))
        if k.requires_grad:
            _accum(k, kernels.conv2d_grad_kernel(x.data, g, kh, kw, stride))

    out._backward = backward
    return out


def conv2d_transposed(x: Tensor, k: Tensor, stride: int = 2) -> Tensor:
    """Adjoint of conv2d with a shared kernel: (B,H,W,C) x (kh,kw,F,C) -> (B,sH,sW,F)."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError(f"conv2d_transposed: need 4-d input and kernel, got {x.data.shape} and {k.data.shape}")
    if x.data.shape[3] != k.data.shape[3]:
        raise ShapeError(f"conv2d_transposed: input channels {x.data.shape} do not match kernel {k.data.shape}")
    _, h, w, _ = x.data.shape
    kh, kw = k.data.shape[:2]
    out = _node(kernels.conv2d_grad_input(x.data, k.data, h * stride, w * stride, stride), (x, k), None)

    def backward(g):
        if x.requires_grad:
            _accum(x, kernels.conv2d_forward(g, k.data, stride))
        if k.requires_grad:
            _accum(k, kernels.conv2d_grad_kernel(g, x.data, kh, kw, stride))

    out._backward = backward
    return out


def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = BN_EPS):
    """Normalize per trailing channel over all other axes.

    Returns (out, batch_mean, batch_var); the caller owns the running-stat
    update.  Variance is the biased (population) estimate.
    """
    axes = tuple(range(x.data.ndim - 1))
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    ivar = 1.0 / np.sqrt(var + np.asarray(eps, x.dtype))
    xhat = (x.data - mu) * ivar
    out = _node(gamma.data * xhat + beta.data, (x, gamma, beta), None)
    m = x.data.size // x.data.shape[-1]

    def backward(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data
            term = m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
            _accum(x, ivar / m * term)

    out._backward = backward
    return out, mu, var


def batchnorm_infer(x: Tensor, gamma: Tensor, beta: Tensor,
                    running_mean: np.ndarray, running_var: np.ndarray,
                    eps: float = BN_EPS) -> Tensor:
    """Normalize with stored running statistics; gradients flow through the input."""
    ivar = 1.0 / np.sqrt(running_var + np.asarray(eps, x.dtype))
    xhat = (x.data - running_mean) * ivar
    out = _node(gamma.data * xhat + beta.data, (x, gamma, beta), None)
    axes = tuple(range(x.data.ndim - 1))

    def backward(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=axes))
        if x.requires_grad:
            _accum(x, g * (gamma.data * ivar))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# losses


def bce_loss(target: Tensor, prediction: Tensor) -> Tensor:
    """Mean binary cross-entropy -t*log(p) - (1-t)*log(1-p), p clamped to [eps, 1-eps]."""
    t, p = target.data, prediction.data
    if t.shape != p.shape:
        raise ShapeError(f"bce_loss: target {t.shape} vs prediction {p.shape}")
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ValidationError("bce_loss: target values must lie in [0, 1]")
    eps = np.asarray(BCE_EPS, p.dtype)
    pc = np.clip(p, eps, 1 - eps)
    out = _node(np.mean(-t * np.log(pc) - (1 - t) * np.log1p(-pc)), (target, prediction), None)
    n = p.size

    def backward(g):
        if prediction.requires_grad:
            inside = (p > eps) & (p < 1 - eps)
            _accum(prediction, g * inside * (-t / pc + (1 - t) / (1 - pc)) / n)
        if target.requires_grad:
            _accum(target, g * (np.log1p(-pc) - np.log(pc)) / n)

    out._backward = backward
    return out


def mse_loss(target: Tensor, prediction: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if target.data.shape != prediction.data.shape:
        raise ShapeError(f"mse_loss: target {target.data.shape} vs prediction {prediction.data.shape}")
    d = sub(prediction, target)
    return mean_all(mul(d, d))
