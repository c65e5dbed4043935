"""
Gradient-times-input saliency for the feed-forward classifier.
"""
from dataclasses import dataclass

import numpy as np

from core.exceptions import DimensionMismatch, NonFiniteValues, ValidationError


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Non-negative per-feature importance, aligned with the input features."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(scores)):
            raise NonFiniteValues('Saliency scores must be finite.')
        if np.any(scores < 0):
            raise ValidationError('Saliency scores must be non-negative.')
        scores.setflags(write=False)
        object.__setattr__(self, 'scores', scores)

    @property
    def dim(self):
        return int(self.scores.size)

    def ranking(self):
        """Feature indices by descending score, ties by ascending index."""
        return np.lexsort((np.arange(self.dim), -self.scores))


def saliency(m, x, y):
    """``|d logit_y / d x_i * x_i|`` for every feature i."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != m.input_dim:
        raise DimensionMismatch(
            f"Input has {x.size} features, model expects {m.input_dim}.",
            expected=m.input_dim,
            actual=int(x.size),
        )
    gradient = m.logit_input_gradient(x, y)
    return SaliencyMap(np.abs(gradient * x))
