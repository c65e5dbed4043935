"""
Clustering backend settings and results.
"""
import math
from dataclasses import dataclass
from enum import Enum

from core.exceptions import InvalidMinClusterSize, ValidationError


class ClusteringAlgorithm(str, Enum):
    KMEANS = 'KMeans'
    MEAN_SHIFT = 'MeanShift'
    AFFINITY_PROPAGATION = 'AffinityPropagation'
    HDBSCAN = 'Hdbscan'
    AGGLOMERATIVE_AVERAGE = 'AgglomerativeAverage'
    SATTLER_BIPARTITION = 'SattlerBipartition'


class PreferenceMode(str, Enum):
    MEDIAN_SIMILARITY = 'MedianSimilarity'


@dataclass(frozen=True)
class ClusteringConfig:
    algorithm: ClusteringAlgorithm = ClusteringAlgorithm.HDBSCAN
    k_hint: int = None
    min_cluster_fraction: float = 0.2
    bandwidth_quantile: float = 0.3
    damping: float = 0.5
    preference_mode: PreferenceMode = PreferenceMode.MEDIAN_SIMILARITY
    distance_threshold: float = 0.2
    max_iterations: int = 300
    convergence_patience: int = 15
    allow_single_cluster: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'algorithm', ClusteringAlgorithm(self.algorithm))
        object.__setattr__(self, 'preference_mode', PreferenceMode(self.preference_mode))
        if not 0 < self.min_cluster_fraction <= 0.5:
            raise InvalidMinClusterSize(
                f"Minimum cluster fraction must lie in (0, 0.5], got {self.min_cluster_fraction}."
            )
        if not 0 < self.bandwidth_quantile <= 1:
            raise ValidationError(
                f"Bandwidth quantile must lie in (0, 1], got {self.bandwidth_quantile}."
            )
        if not 0.5 <= self.damping < 1:
            raise ValidationError(f"Damping must lie in [0.5, 1), got {self.damping}.")
        if self.distance_threshold <= 0:
            raise ValidationError(
                f"Distance threshold must be positive, got {self.distance_threshold}."
            )
        if self.max_iterations < 1 or self.convergence_patience < 1:
            raise ValidationError('Iteration limits must be positive integers.')
        if self.algorithm is ClusteringAlgorithm.KMEANS and self.k_hint is None:
            raise ValidationError('K-Means needs the number of clusters (k_hint).')

    def min_cluster_size(self, n):
        """HDBSCAN floor: ``max(2, ceil(min_cluster_fraction * n))``."""
        return max(2, math.ceil(self.min_cluster_fraction * n - 1e-9))


@dataclass(frozen=True)
class ClusteringResult:
    """
    A partition plus its soft-failure flags.

    ``converged`` is False when affinity propagation did not converge,
    ``degenerate`` marks zero-bandwidth or identical-delta splits and
    ``attached`` lists HDBSCAN noise clients moved into a cluster.
    """

    partition: object
    converged: bool = True
    degenerate: bool = False
    attached: tuple = ()

    def to_dict(self):
        return {
            'k': self.partition.k,
            'converged': self.converged,
            'degenerate': self.degenerate,
            'attached': list(self.attached),
        }
