"""Gradient-descent optimizers over named parameter collections.

Both optimizers refuse to touch frozen parameters: attempting to step a frozen
tensor raises rather than silently updating weights that a freeze contract
promised to hold fixed.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import FrozenParameterError, ParameterError
from .params import ParameterStore


def _trainable(store: ParameterStore) -> list[tuple[str, Tensor]]:
    return [(name, t) for name, t in store.items() if not store.is_frozen(name)]


class SGD:
    """Plain stochastic gradient descent, optionally with momentum."""

    def __init__(self, store: ParameterStore, lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise ParameterError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {momentum}")
        self.store = store
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity: dict[str, np.ndarray] = {}

    def step(self) -> None:
        for name, t in _trainable(self.store):
            if t.grad is None:
                continue
            update = t.grad
            if self.momentum:
                v = self._velocity.get(name)
                v = update if v is None else self.momentum * v + update
                self._velocity[name] = v
                update = v
            t.data -= self.lr * update

    def zero_grad(self) -> None:
        for _, t in _trainable(self.store):
            t.zero_grad()


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(
        self,
        store: ParameterStore,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ParameterError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ParameterError(f"betas must be in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ParameterError(f"eps must be > 0, got {eps}")
        self.store = store
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self._t
        bias2 = 1.0 - b2**self._t
        for name, t in _trainable(self.store):
            if t.grad is None:
                continue
            m = self._m.get(name)
            v = self._v.get(name)
            m = (1 - b1) * t.grad if m is None else b1 * m + (1 - b1) * t.grad
            v = (1 - b2) * t.grad**2 if v is None else b2 * v + (1 - b2) * t.grad**2
            self._m[name] = m
            self._v[name] = v
            t.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def zero_grad(self) -> None:
        for _, t in _trainable(self.store):
            t.zero_grad()


def assert_step_allowed(store: ParameterStore, name: str) -> None:
    """Raise if a direct write to ``name`` would violate its freeze flag."""
    if store.is_frozen(name):
        raise FrozenParameterError(f"parameter '{name}' is frozen and cannot be updated")
