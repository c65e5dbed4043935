"""
Agreement between a ground-truth and a predicted partition.

Natural logarithms throughout; AMI uses the arithmetic mean of the two
entropies as its normaliser.
"""
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import (
    adjusted_mutual_info_score,
    adjusted_rand_score,
    completeness_score,
    rand_score,
)
from sklearn.metrics.cluster import contingency_matrix

from core.exceptions import MismatchedClients


def _aligned_labels(c_true, c_pred):
    if set(c_true.client_ids) != set(c_pred.client_ids):
        missing = sorted(set(c_true.client_ids) ^ set(c_pred.client_ids))
        raise MismatchedClients(
            f"Partitions cover different clients; symmetric difference {missing}.",
            clients=missing,
        )
    client_ids = c_true.client_ids
    return c_true.labels(client_ids), c_pred.labels(client_ids)


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Counts of clients per (true cluster, predicted cluster) pair."""

    counts: np.ndarray

    @classmethod
    def of(cls, c_true, c_pred):
        labels_true, labels_pred = _aligned_labels(c_true, c_pred)
        return cls(contingency_matrix(labels_true, labels_pred))

    @property
    def row_marginals(self):
        return self.counts.sum(axis=1)

    @property
    def column_marginals(self):
        return self.counts.sum(axis=0)

    @property
    def total(self):
        return int(self.counts.sum())


def rand_index(c_true, c_pred):
    """Share of client pairs on which both partitions agree."""
    labels_true, labels_pred = _aligned_labels(c_true, c_pred)
    if labels_true.size < 2:
        return 1.0
    return float(rand_score(labels_true, labels_pred))


def adjusted_rand_index(c_true, c_pred):
    labels_true, labels_pred = _aligned_labels(c_true, c_pred)
    return float(adjusted_rand_score(labels_true, labels_pred))


def adjusted_mutual_information(c_true, c_pred):
    """
    AMI under the hypergeometric permutation model.

    Two single-cluster partitions score 1; a single cluster against any
    non-trivial partition scores 0.
    """
    labels_true, labels_pred = _aligned_labels(c_true, c_pred)
    return float(adjusted_mutual_info_score(labels_true, labels_pred, average_method='arithmetic'))


def completeness(c_true, c_pred):
    """``1 - H(pred | true) / H(pred)``; a single predicted cluster scores 1."""
    labels_true, labels_pred = _aligned_labels(c_true, c_pred)
    return float(completeness_score(labels_true, labels_pred))


AGREEMENT_SCORES = {
    'ri': rand_index,
    'ari': adjusted_rand_index,
    'ami': adjusted_mutual_information,
    'com': completeness,
}


def agreement_scores(c_true, c_pred):
    return {name: score(c_true, c_pred) for name, score in AGREEMENT_SCORES.items()}


@dataclass
class ScoreSeries:
    """Per-round values of one named score."""

    name: str
    values: list = field(default_factory=list)

    def append(self, value):
        self.values.append(float(value))

    @property
    def time_average(self):
        if not self.values:
            return float('nan')
        return float(np.mean(self.values))
