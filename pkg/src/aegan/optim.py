"""Parameter updates: Adam (default) and the plain averaged-gradient step.

Defaults follow the training setup used throughout: learning rate 2e-4,
beta1 0.5; beta2/epsilon are the standard 0.999 / 1e-8.  The plain-SGD mode
exists for fidelity experiments against the generic descent schema.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError


class Adam:
    """Adam with bias correction over a fixed list of trainable tensors."""

    def __init__(self, params: list[Tensor], lr: float = 2e-4, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if not p.requires_grad or p.grad is None:
                continue  # frozen or unreached parameters stay untouched
            g = p.grad
            if g.shape != p.data.shape:
                raise ShapeError(f"adam: gradient {g.shape} does not match parameter {p.data.shape}")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state for checkpointing, keyed by parameter index."""
        out = {}
        for i in range(len(self.params)):
            out[f"adam/m/{i}"] = self.m[i]
            out[f"adam/v/{i}"] = self.v[i]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = int(t)
        for i in range(len(self.params)):
            self.m[i] = np.asarray(arrays[f"adam/m/{i}"], dtype=self.params[i].data.dtype)
            self.v[i] = np.asarray(arrays[f"adam/v/{i}"], dtype=self.params[i].data.dtype)


class Sgd:
    """Plain step: theta -= lr * grad (the loss already averages over the batch)."""

    def __init__(self, params: list[Tensor], lr: float = 2e-4):
        self.params = list(params)
        self.lr = float(lr)
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            if not p.requires_grad or p.grad is None:
                continue
            p.data -= (self.lr * p.grad).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = int(t)


def make_optimizer(kind: str, params: list[Tensor], lr: float, beta1: float = 0.5,
                   beta2: float = 0.999, eps: float = 1e-8):
    if kind == "adam":
        return Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    if kind == "sgd":
        return Sgd(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
