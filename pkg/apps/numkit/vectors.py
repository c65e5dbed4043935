"""
Flattened parameter vectors and cosine geometry.
"""
from dataclasses import dataclass

import numpy as np

from core.exceptions import DimensionMismatch, NonFiniteValues, ZeroVector


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """
    Flattened model parametrisation, also used for per-round pseudo-gradients.

    ``values`` is stored as a read-only 1-D float64 array.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise DimensionMismatch('Parameter vector must have a positive dimension.')
        if not np.all(np.isfinite(values)):
            raise NonFiniteValues('Parameter vector contains NaN or infinite entries.')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def of(cls, value):
        """Coerce arrays and sequences, passing existing vectors through."""
        if isinstance(value, ParameterVector):
            return value
        return cls(value)

    @property
    def dim(self):
        return int(self.values.size)

    @property
    def norm(self):
        return float(np.linalg.norm(self.values))

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def __add__(self, other):
        other = ParameterVector.of(other)
        _check_dims(self, other)
        return ParameterVector(self.values + other.values)

    def __sub__(self, other):
        other = ParameterVector.of(other)
        _check_dims(self, other)
        return ParameterVector(self.values - other.values)

    def scaled(self, factor):
        return ParameterVector(self.values * float(factor))


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"Vector dimensions differ: {a.dim} != {b.dim}.", left=a.dim, right=b.dim)


def cosine_similarity(a, b):
    """Cosine similarity of two nonzero vectors, clamped to [-1, 1]."""
    a, b = ParameterVector.of(a), ParameterVector.of(b)
    _check_dims(a, b)
    norm_a, norm_b = a.norm, b.norm
    if norm_a == 0:
        raise ZeroVector('First vector has zero norm.', index=0)
    if norm_b == 0:
        raise ZeroVector('Second vector has zero norm.', index=1)
    similarity = float(np.dot(a.values, b.values) / (norm_a * norm_b))
    return min(1.0, max(-1.0, similarity))


def cosine_distance(a, b):
    """``1 - cosine_similarity``; always in [0, 2]."""
    return 1.0 - cosine_similarity(a, b)
