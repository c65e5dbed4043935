"""
Client-side optimizers (ClientOpt) and the server-side FedOpt step.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from core.exceptions import ValidationError


class OptimizerKind(str, Enum):
    SGD = 'SGD'
    ADAM = 'Adam'


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Optimizer settings, used both client-side (eta_c) and server-side (eta_s).

    ``local_epochs`` is K, the passes over local data per round; SGD ignores betas and eps.
    """

    kind: OptimizerKind = OptimizerKind.SGD
    learning_rate: float = 0.05
    weight_decay: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32
    local_epochs: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'kind', OptimizerKind(self.kind))
        object.__setattr__(self, 'betas', tuple(float(b) for b in self.betas))
        if self.learning_rate < 0:
            raise ValidationError(f"Learning rate must be non-negative, got {self.learning_rate}.")
        if self.weight_decay < 0:
            raise ValidationError(f"Weight decay must be non-negative, got {self.weight_decay}.")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValidationError(f"Adam betas must be two values in [0, 1), got {self.betas}.")
        if self.eps <= 0:
            raise ValidationError(f"Adam eps must be positive, got {self.eps}.")
        if self.batch_size < 1 or self.local_epochs < 1:
            raise ValidationError('Batch size and local epochs must be positive integers.')


SERVER_SGD = OptimizerConfig(kind=OptimizerKind.SGD, learning_rate=1.0)


class SgdOptimizer:
    """Plain SGD with L2 weight decay."""

    def __init__(self, config):
        self.config = config

    def step(self, params, grad):
        if self.config.weight_decay:
            grad = grad + self.config.weight_decay * params
        return params - self.config.learning_rate * grad


class AdamOptimizer:
    """Adam with bias correction and L2 weight decay folded into the gradient."""

    def __init__(self, config, dim):
        self.config = config
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params, grad):
        beta1, beta2 = self.config.betas
        if self.config.weight_decay:
            grad = grad + self.config.weight_decay * params
        self.t += 1
        self.m = beta1 * self.m + (1 - beta1) * grad
        self.v = beta2 * self.v + (1 - beta2) * grad * grad
        m_hat = self.m / (1 - beta1 ** self.t)
        v_hat = self.v / (1 - beta2 ** self.t)
        return params - self.config.learning_rate * m_hat / (np.sqrt(v_hat) + self.config.eps)


def build_optimizer(config, dim):
    """Fresh client optimizer; client state never survives a round."""
    if config.kind is OptimizerKind.ADAM:
        return AdamOptimizer(config, dim)
    return SgdOptimizer(config)


class ServerOptimizerState:
    """
    Per-cluster moments of the adaptive server step (FedAdam).

    The update has no bias correction and uses ``eps`` as the adaptivity
    floor, matching the FedOpt family. SGD keeps no state.
    """

    def __init__(self, dim):
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)

    def copy(self):
        clone = ServerOptimizerState(self.m.size)
        clone.m = self.m.copy()
        clone.v = self.v.copy()
        return clone

    def apply(self, config, current, pseudo_gradient):
        beta1, beta2 = config.betas
        self.m = beta1 * self.m + (1 - beta1) * pseudo_gradient
        self.v = beta2 * self.v + (1 - beta2) * pseudo_gradient * pseudo_gradient
        return current + config.learning_rate * self.m / (np.sqrt(self.v) + config.eps)
