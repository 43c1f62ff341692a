# src/learning/optim.py
"""First-order optimizers updating a dict of numpy arrays in place."""
from typing import Dict

import numpy as np

from src.utils.errors import ConfigError


class SGD:
    def __init__(self, learning_rate: float = 1e-2, momentum: float = 0.0):
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        for name in sorted(grads):
            g = grads[name]
            if self.momentum:
                v = self.velocity.get(name, np.zeros_like(g))
                v = self.momentum * v + g
                self.velocity[name] = v
                g = v
            params[name] -= self.learning_rate * g


class Adam:
    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in [0, 1), got ({beta1}, {beta2})")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            m = self.beta1 * self.m.get(name, np.zeros_like(g)) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, np.zeros_like(g)) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def make_optimizer(name: str, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    if name == 'adam':
        return Adam(learning_rate, beta1, beta2, eps)
    if name == 'sgd':
        return SGD(learning_rate)
    raise ConfigError(f"Unknown optimizer {name!r}; choose 'adam' or 'sgd'")
