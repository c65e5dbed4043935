"""
Clustering Temperature Function and the one-shot trigger.

T(G) = ||vec(G)||_p / lambda, with lambda the maximal divergence constant
(n(n-1)2^p)^(1/p). The trigger fires the first time the temperature stops
decreasing; with ``window > 1`` the comparison runs on moving averages.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from core.exceptions import AlreadyFired, InvalidNorm, ValidationError

logger = logging.getLogger(__name__)


class LambdaMode(str, Enum):
    MAXIMAL_DIVERGENCE = 'MaximalDivergence'
    NORMALISING = 'Normalising'


def _check_p(p):
    if not p >= 1:
        raise InvalidNorm(f"Norm order must satisfy p >= 1, got {p}.", p=p)


def matrix_p_norm(m, p=2.0):
    """Entrywise p-norm over all n*n entries, both symmetric halves included."""
    _check_p(p)
    return float(np.linalg.norm(m.entries.reshape(-1), ord=p))


def max_divergence_constant(n, p=2.0):
    """Supremum of ``matrix_p_norm`` over n x n divergence matrices."""
    _check_p(p)
    if n < 2:
        raise ValidationError(f"Maximal divergence constant needs n >= 2, got {n}.", n=n)
    return (n * (n - 1) * 2.0 ** p) ** (1.0 / p)


def normalising_constant(m, p=2.0, lambda_mode=LambdaMode.MAXIMAL_DIVERGENCE):
    """
    Lambda for a matrix under the given mode.

    Both modes resolve to the maximal divergence constant: cosine distances are
    non-negative, so the constant already bounds T in [0, 1].
    """
    LambdaMode(lambda_mode)
    return max_divergence_constant(m.n, p)


def temperature(m, p=2.0, lambda_mode=LambdaMode.MAXIMAL_DIVERGENCE):
    return matrix_p_norm(m, p) / normalising_constant(m, p, lambda_mode)


@dataclass
class TemperatureState:
    """
    Trigger state, single-owner: only the orchestrator mutates it.
    """

    p: float = 2.0
    lambda_mode: LambdaMode = LambdaMode.MAXIMAL_DIVERGENCE
    window: int = 1
    t_prev: float = math.inf
    t_curr: float = math.inf
    fired: bool = False
    history: list = field(default_factory=list)

    def __post_init__(self):
        _check_p(self.p)
        self.lambda_mode = LambdaMode(self.lambda_mode)
        if self.window < 1:
            raise ValidationError(f"Temperature window must be positive, got {self.window}.")

    def update_and_test_trigger(self, m):
        if self.fired:
            raise AlreadyFired('The clustering trigger has already fired for this run.')

        self.t_prev = self.t_curr
        self.t_curr = temperature(m, self.p, self.lambda_mode)
        self.history.append(self.t_curr)

        if self.window == 1:
            triggered = self.t_curr >= self.t_prev
        elif len(self.history) >= 2 * self.window:
            recent = float(np.mean(self.history[-self.window:]))
            previous = float(np.mean(self.history[-2 * self.window:-self.window]))
            triggered = recent >= previous
        else:
            triggered = False

        logger.debug(
            f"Temperature {self.t_curr:.6f} (previous {self.t_prev:.6f}), triggered={triggered}",
            extra={'temperature': self.t_curr, 'previous': self.t_prev},
        )
        if triggered:
            self.fired = True
        return triggered


def update_and_test_trigger(state, m):
    """Record a new temperature observation and report whether clustering fires."""
    return state.update_and_test_trigger(m)
