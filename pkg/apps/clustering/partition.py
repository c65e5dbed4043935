"""
Hard partitions of clients into clusters.
"""
from dataclasses import dataclass

import numpy as np

from core.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Assignment of client ids to cluster ids ``0..k-1``, no cluster empty.
    """

    assignment: dict

    def __post_init__(self):
        assignment = {int(client): int(cluster) for client, cluster in sorted(self.assignment.items())}
        if not assignment:
            raise ValidationError('A partition must assign at least one client.')
        used = set(assignment.values())
        if used != set(range(len(used))):
            raise ValidationError(f"Cluster ids must be 0..k-1 without gaps, got {sorted(used)}.")
        object.__setattr__(self, 'assignment', assignment)

    @classmethod
    def from_labels(cls, client_ids, labels):
        """
        Build a partition from arbitrary labels, renumbering clusters by first
        appearance in ascending client-id order.
        """
        client_ids = [int(c) for c in client_ids]
        labels = list(labels)
        if len(client_ids) != len(labels):
            raise ValidationError('Client ids and labels differ in length.')
        pairs = sorted(zip(client_ids, labels))
        renumber = {}
        assignment = {}
        for client, label in pairs:
            assignment[client] = renumber.setdefault(label, len(renumber))
        return cls(assignment)

    @classmethod
    def single(cls, client_ids):
        return cls({int(c): 0 for c in client_ids})

    @classmethod
    def from_dict(cls, payload):
        return cls({int(client): int(cluster) for client, cluster in payload.items()})

    @property
    def k(self):
        return len(set(self.assignment.values()))

    @property
    def client_ids(self):
        return tuple(self.assignment)

    def __len__(self):
        return len(self.assignment)

    def __getitem__(self, client_id):
        return self.assignment[int(client_id)]

    def labels(self, client_ids=None):
        client_ids = self.client_ids if client_ids is None else client_ids
        return np.array([self.assignment[int(c)] for c in client_ids], dtype=np.int64)

    def members(self, cluster_id):
        return tuple(c for c, k in self.assignment.items() if k == cluster_id)

    def clusters(self):
        return {cluster_id: self.members(cluster_id) for cluster_id in range(self.k)}

    def sizes(self):
        return [len(self.members(cluster_id)) for cluster_id in range(self.k)]

    def canonical(self):
        return Partition.from_labels(self.client_ids, self.labels())

    def equivalent(self, other):
        """Equality up to a permutation of cluster ids."""
        return self.client_ids == other.client_ids and self.canonical() == other.canonical()

    def to_dict(self):
        return {str(client): cluster for client, cluster in self.assignment.items()}

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.assignment == other.assignment

    def __hash__(self):
        return hash(tuple(self.assignment.items()))

    def __repr__(self):
        return f"Partition(k={self.k}, sizes={self.sizes()})"
