"""
Split plans, data-generating processes and federated datasets.
"""
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from core.exceptions import ValidationError

ORCHESTRATOR_ID = -1

IMBALANCED_FRACTIONS = (0.20, 0.47, 0.33)
BALANCED_FRACTIONS = (1 / 3, 1 / 3, 1 / 3)


class SplitRegime(str, Enum):
    NON_OVERLAP_BALANCED = 'NonOverlapBalanced'
    NON_OVERLAP_IMBALANCED = 'NonOverlapImbalanced'
    OVERLAP_BALANCED = 'OverlapBalanced'
    OVERLAP_IMBALANCED = 'OverlapImbalanced'

    @property
    def overlapping(self):
        return self in (SplitRegime.OVERLAP_BALANCED, SplitRegime.OVERLAP_IMBALANCED)

    @property
    def balanced(self):
        return self in (SplitRegime.NON_OVERLAP_BALANCED, SplitRegime.OVERLAP_BALANCED)


@dataclass(frozen=True)
class SplitPlan:
    """
    How clients are drawn from the data-generating processes.

    ``share_rate`` is the probability that a drawn sample is also copied into
    one other, uniformly chosen client.
    """

    regime: SplitRegime = SplitRegime.NON_OVERLAP_BALANCED
    n_clients: int = 15
    cluster_fractions: tuple = BALANCED_FRACTIONS
    alpha: float = 1.0
    overlap_classes: tuple = ()
    samples_per_client: int = 200
    share_rate: float = 0.05
    classes_per_cluster: int = None
    test_fraction: float = 0.2
    orchestrator_test_size: int = 900

    def __post_init__(self):
        object.__setattr__(self, 'regime', SplitRegime(self.regime))
        object.__setattr__(self, 'cluster_fractions', tuple(float(f) for f in self.cluster_fractions))
        object.__setattr__(self, 'overlap_classes', tuple(sorted(int(c) for c in self.overlap_classes)))

        fractions = np.asarray(self.cluster_fractions)
        if fractions.size < 1 or np.any(fractions <= 0):
            raise ValidationError('Cluster fractions must be positive.')
        if abs(fractions.sum() - 1.0) > 1e-9:
            raise ValidationError(f"Cluster fractions must sum to 1, got {fractions.sum():.12g}.")
        if self.regime.overlapping and not self.overlap_classes:
            raise ValidationError('Overlapping regimes need at least one shared class.')
        if not self.regime.overlapping and self.overlap_classes:
            raise ValidationError('Non-overlapping regimes cannot share classes.')
        if self.alpha <= 0:
            raise ValidationError(f"Dirichlet concentration must be positive, got {self.alpha}.")
        if not 0 <= self.share_rate < 1:
            raise ValidationError(f"Share rate must lie in [0, 1), got {self.share_rate}.")
        if not 0 <= self.test_fraction < 1:
            raise ValidationError(f"Test fraction must lie in [0, 1), got {self.test_fraction}.")
        if self.n_clients < 1 or self.samples_per_client < 1 or self.orchestrator_test_size < 1:
            raise ValidationError('Client count, samples per client and orchestrator size must be positive.')
        if self.classes_per_cluster is not None and self.classes_per_cluster < 1:
            raise ValidationError('Classes per cluster must be positive.')

    @property
    def n_clusters(self):
        return len(self.cluster_fractions)

    def to_dict(self):
        payload = asdict(self)
        payload['regime'] = self.regime.value
        payload['cluster_fractions'] = list(self.cluster_fractions)
        payload['overlap_classes'] = list(self.overlap_classes)
        return payload

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """
    One data-generating process: a label subspace with a class prior and
    isotropic Gaussian class-conditional features.
    """

    dgp_id: int
    label_subspace: tuple
    class_prior: np.ndarray
    feature_means: dict
    feature_sigma: float

    def __post_init__(self):
        if not self.label_subspace:
            raise ValidationError(f"DGP {self.dgp_id} has an empty label subspace.")
        prior = np.asarray(self.class_prior, dtype=np.float64)
        if prior.shape != (len(self.label_subspace),) or np.any(prior < 0):
            raise ValidationError(f"DGP {self.dgp_id} prior does not match its label subspace.")
        if abs(prior.sum() - 1.0) > 1e-9:
            raise ValidationError(f"DGP {self.dgp_id} prior sums to {prior.sum():.12g}, not 1.")
        if set(self.feature_means) != set(self.label_subspace):
            raise ValidationError(f"DGP {self.dgp_id} lacks feature means for some classes.")
        if self.feature_sigma <= 0:
            raise ValidationError('Feature sigma must be positive.')
        object.__setattr__(self, 'class_prior', prior)

    @property
    def feature_dim(self):
        return int(np.asarray(self.feature_means[self.label_subspace[0]]).size)

    def sample(self, count, rng):
        """Draw ``y ~ Categorical(prior)`` then ``x ~ N(mu_y, sigma^2 I)``."""
        labels = rng.choice(np.asarray(self.label_subspace), size=count, p=self.class_prior)
        means = np.array([self.feature_means[int(y)] for y in labels], dtype=np.float64)
        means = means.reshape(count, self.feature_dim)
        noise = rng.standard_normal(means.shape)
        return means + self.feature_sigma * noise, labels

    def to_dict(self):
        return {
            'dgp_id': self.dgp_id,
            'label_subspace': [int(y) for y in self.label_subspace],
            'class_prior': self.class_prior.tolist(),
            'feature_means': {str(y): np.asarray(mu).tolist() for y, mu in self.feature_means.items()},
            'feature_sigma': self.feature_sigma,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            dgp_id=payload['dgp_id'],
            label_subspace=tuple(payload['label_subspace']),
            class_prior=np.asarray(payload['class_prior']),
            feature_means={int(y): np.asarray(mu) for y, mu in payload['feature_means'].items()},
            feature_sigma=payload['feature_sigma'],
        )


@dataclass(frozen=True, eq=False)
class LocalDataset:
    """Training data plus the local held-out test set of one client."""

    client_id: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_train(self):
        return int(self.y_train.shape[0])

    @property
    def n_test(self):
        return int(self.y_test.shape[0])


@dataclass(frozen=True, eq=False)
class FederatedDataset:
    """
    All client datasets, the ground-truth client-to-DGP partition and the
    orchestrator's class-uniform test set (stored in ``x_test``/``y_test``).
    """

    clients: dict
    ground_truth: object
    orchestrator_test: LocalDataset
    n_classes: int
    feature_dim: int
    plan: SplitPlan = field(default_factory=SplitPlan)
    seed: int = None
    dgps: tuple = ()

    @property
    def client_ids(self):
        return tuple(sorted(self.clients))

    def test_union(self, client_ids):
        """Concatenated local test sets of the given clients."""
        chosen = [self.clients[c] for c in sorted(client_ids)]
        if not chosen:
            return np.empty((0, self.feature_dim), dtype=np.float32), np.empty(0, dtype=np.int64)
        return (
            np.concatenate([d.x_test for d in chosen]),
            np.concatenate([d.y_test for d in chosen]),
        )
