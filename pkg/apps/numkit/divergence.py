"""
Divergence matrix of pairwise cosine distances between client updates.
"""
from dataclasses import dataclass

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity as pairwise_cosine_similarity

from core.exceptions import DimensionMismatch, ValidationError, ZeroVector

from .vectors import ParameterVector


@dataclass(frozen=True, eq=False)
class DivergenceMatrix:
    """
    Symmetric n x n matrix of cosine distances with a zero diagonal and
    entries in [0, 2].
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatch(f"Divergence matrix must be square, got shape {entries.shape}.")
        if not np.all(np.isfinite(entries)):
            raise ValidationError('Divergence matrix contains non-finite entries.')
        if not np.array_equal(entries, entries.T):
            raise ValidationError('Divergence matrix must be symmetric.')
        if np.any(np.diag(entries) != 0):
            raise ValidationError('Divergence matrix must have a zero diagonal.')
        if np.any(entries < 0) or np.any(entries > 2):
            raise ValidationError('Divergence matrix entries must lie in [0, 2].')
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @classmethod
    def from_upper_triangle(cls, matrix):
        """Build a matrix by mirroring the strict upper triangle of ``matrix``."""
        upper = np.triu(np.asarray(matrix, dtype=np.float64), k=1)
        return cls(upper + upper.T)

    @property
    def n(self):
        return int(self.entries.shape[0])

    def row(self, i):
        return self.entries[i]

    def submatrix(self, indices):
        indices = np.asarray(indices, dtype=int)
        return DivergenceMatrix(self.entries[np.ix_(indices, indices)])

    def __eq__(self, other):
        if not isinstance(other, DivergenceMatrix):
            return NotImplemented
        return bool(np.array_equal(self.entries, other.entries))


def stack_vectors(vectors):
    """Stack vectors of equal dimension into a row matrix."""
    vectors = [ParameterVector.of(v) for v in vectors]
    dims = {v.dim for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"Vectors have different dimensions: {sorted(dims)}.")
    return np.vstack([v.values for v in vectors])


def divergence_matrix(deltas):
    """
    Pairwise cosine distances of at least two nonzero vectors.

    Each unordered pair is computed once (upper triangle) and mirrored, so
    symmetry and the zero diagonal hold exactly.
    """
    if len(deltas) < 2:
        raise ValidationError('A divergence matrix needs at least two vectors.', count=len(deltas))
    rows = stack_vectors(deltas)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVector(f"Client at index {int(zero[0])} sent a zero-norm vector.", index=int(zero[0]))

    similarity = np.clip(pairwise_cosine_similarity(rows), -1.0, 1.0)
    distance = np.clip(1.0 - similarity, 0.0, 2.0)
    return DivergenceMatrix.from_upper_triangle(distance)
