"""
Tests for partitions and the clustering backends on divergence matrices.
"""
import itertools

import numpy as np
import pytest

from apps.clustering.backends import (
    affinity_propagation,
    agglomerative_average_linkage,
    cluster,
    hdbscan,
    kmeans_on_rows,
    mean_shift_on_rows,
    sattler_bipartition,
    sattler_split,
)
from apps.clustering.config import ClusteringAlgorithm, ClusteringConfig
from apps.clustering.partition import Partition
from apps.numkit.divergence import DivergenceMatrix, divergence_matrix
from core.exceptions import InvalidK, InvalidMinClusterSize, ValidationError

from .factories import ClusteringConfigFactory

SIZES = (3, 7, 5)


def planted_updates(sizes=SIZES, dim=20, noise=0.05, seed=0):
    """Updates scattered around one random direction per group."""
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((len(sizes), dim))
    updates, truth = [], []
    for group, size in enumerate(sizes):
        for _ in range(size):
            updates.append(directions[group] + noise * rng.standard_normal(dim))
            truth.append(group)
    return updates, Partition.from_labels(range(len(truth)), truth)


def upgma_oracle(entries, threshold):
    """Brute-force average linkage: merge the closest pair of clusters while it is within threshold."""
    groups = [[i] for i in range(entries.shape[0])]
    while len(groups) > 1:
        best, pair = None, None
        for a, b in itertools.combinations(range(len(groups)), 2):
            distance = np.mean([entries[i, j] for i in groups[a] for j in groups[b]])
            if best is None or distance < best:
                best, pair = distance, (a, b)
        if best > threshold:
            break
        a, b = pair
        groups[a] = groups[a] + groups[b]
        del groups[b]
    labels = np.empty(entries.shape[0], dtype=int)
    for label, members in enumerate(groups):
        labels[members] = label
    return Partition.from_labels(range(entries.shape[0]), labels)


def bipartitions(n):
    """Every split of ``range(n)`` into two non-empty groups, each listed once."""
    for rest in itertools.product((0, 1), repeat=n - 1):
        if any(rest):
            yield np.array((0,) + rest)


def two_direction_updates(per_group=3, dim=8, noise=0.02, seed=1):
    """Updates scattered around two orthogonal directions."""
    rng = np.random.default_rng(seed)
    basis = np.eye(dim)
    updates = [basis[g] + noise * rng.standard_normal(dim) for g in (0, 1) for _ in range(per_group)]
    return updates, Partition.from_labels(range(2 * per_group), [0] * per_group + [1] * per_group)


def permuted_partition(updates, config, permutation):
    shuffled = [updates[i] for i in permutation]
    return cluster(divergence_matrix(shuffled), config, seed=0, client_ids=list(permutation)).partition


@pytest.mark.unit
class TestPartition:

    def test_from_labels_renumbers_by_first_appearance(self):
        partition = Partition.from_labels([3, 1, 2], ['b', 'a', 'b'])
        assert partition.assignment == {1: 0, 2: 1, 3: 1}

    def test_rejects_gaps(self):
        with pytest.raises(ValidationError):
            Partition({0: 0, 1: 2})

    def test_equivalence_up_to_relabelling(self):
        assert Partition({0: 0, 1: 1}).equivalent(Partition({0: 1, 1: 0}))
        assert not Partition({0: 0, 1: 1}).equivalent(Partition({0: 0, 1: 0}))

    def test_sizes_and_members(self):
        partition = Partition({0: 0, 1: 1, 2: 1})
        assert partition.sizes() == [1, 2]
        assert partition.members(1) == (1, 2)


@pytest.mark.unit
class TestKMeans:

    def test_recovers_planted_groups(self):
        updates, truth = planted_updates()
        assert kmeans_on_rows(divergence_matrix(updates), 3, seed=0).equivalent(truth)

    def test_deterministic(self):
        gamma = divergence_matrix(planted_updates(noise=0.5)[0])
        assert kmeans_on_rows(gamma, 4, seed=3) == kmeans_on_rows(gamma, 4, seed=3)

    def test_k_equal_to_n_gives_singletons(self):
        gamma = divergence_matrix(planted_updates(sizes=(2, 2))[0])
        assert kmeans_on_rows(gamma, 4, seed=0).k == 4

    def test_invalid_k(self):
        gamma = divergence_matrix(planted_updates(sizes=(2, 2))[0])
        with pytest.raises(InvalidK):
            kmeans_on_rows(gamma, 5, seed=0)
        with pytest.raises(InvalidK):
            kmeans_on_rows(gamma, 1, seed=0)

    def test_matches_minimum_inertia_bipartition(self):
        updates, _ = two_direction_updates()
        rows = divergence_matrix(updates).entries

        def inertia(labels):
            return sum(((rows[labels == g] - rows[labels == g].mean(axis=0)) ** 2).sum() for g in (0, 1))

        best = min(bipartitions(len(rows)), key=inertia)
        expected = Partition.from_labels(range(len(rows)), best)
        assert kmeans_on_rows(divergence_matrix(updates), 2, seed=0).equivalent(expected)


@pytest.mark.unit
class TestMeanShift:

    def test_recovers_planted_groups(self):
        updates, truth = planted_updates()
        assert mean_shift_on_rows(divergence_matrix(updates), 0.3).equivalent(truth)

    def test_identical_rows_give_single_cluster(self):
        gamma = DivergenceMatrix(np.zeros((4, 4)))
        result = cluster(gamma, ClusteringConfig(algorithm=ClusteringAlgorithm.MEAN_SHIFT), seed=0)
        assert result.partition.k == 1
        assert result.degenerate

    def test_blobs_far_beyond_the_bandwidth(self):
        updates, truth = two_direction_updates(per_group=4, noise=0.002)
        rows = divergence_matrix(updates).entries
        distances = np.linalg.norm(rows[:, None, :] - rows[None, :, :], axis=2)
        neighbours = int(np.ceil(0.3 * len(rows)))
        bandwidth = np.sort(distances, axis=1)[:, 1 : neighbours + 1].mean()
        labels = truth.labels()
        assert distances[labels[:, None] != labels[None, :]].min() >= 10 * bandwidth
        assert mean_shift_on_rows(divergence_matrix(updates), 0.3).equivalent(truth)

    def test_permutation_equivariant(self):
        updates, _ = planted_updates()
        config = ClusteringConfig(algorithm=ClusteringAlgorithm.MEAN_SHIFT)
        expected = cluster(divergence_matrix(updates), config, seed=0).partition
        permutation = np.random.default_rng(2).permutation(len(updates))
        assert permuted_partition(updates, config, permutation).equivalent(expected)


@pytest.mark.unit
class TestAffinityPropagation:

    def test_recovers_planted_groups(self):
        updates, truth = planted_updates()
        assert affinity_propagation(divergence_matrix(updates), 0.5, seed=0).equivalent(truth)

    def test_result_flags_convergence(self):
        gamma = divergence_matrix(planted_updates()[0])
        config = ClusteringConfig(algorithm=ClusteringAlgorithm.AFFINITY_PROPAGATION)
        assert cluster(gamma, config, seed=0).converged

    def test_non_convergence_returns_the_last_assignment(self):
        gamma = divergence_matrix(planted_updates(noise=2.0)[0])
        config = ClusteringConfig(
            algorithm=ClusteringAlgorithm.AFFINITY_PROPAGATION,
            max_iterations=2,
            convergence_patience=5,
        )
        result = cluster(gamma, config, seed=0)
        assert not result.converged
        assert len(result.partition) == 15
        assert 1 <= result.partition.k <= 15
        assert cluster(gamma, config, seed=0).partition == result.partition

    def test_two_distinct_points_are_both_exemplars(self):
        gamma = divergence_matrix([[1.0, 0.0], [0.0, 1.0]])
        partition = affinity_propagation(gamma, 0.5, seed=0)
        assert partition.k == 2

    def test_equidistant_points_are_singletons(self):
        gamma = divergence_matrix(list(np.eye(4)))
        assert affinity_propagation(gamma, 0.5, seed=0).k == 4

    def test_identical_rows_give_single_cluster(self):
        result = cluster(
            DivergenceMatrix(np.zeros((3, 3))),
            ClusteringConfig(algorithm=ClusteringAlgorithm.AFFINITY_PROPAGATION),
            seed=0,
        )
        assert result.partition.k == 1
        assert result.degenerate

    def test_damping_does_not_change_a_convergent_partition(self):
        gamma = divergence_matrix(planted_updates()[0])
        assert affinity_propagation(gamma, 0.9, seed=0) == affinity_propagation(gamma, 0.5, seed=0)


@pytest.mark.unit
class TestHdbscan:

    def test_recovers_planted_groups(self):
        updates, truth = planted_updates()
        assert hdbscan(divergence_matrix(updates), 3).equivalent(truth)

    def test_never_returns_noise(self):
        updates, _ = planted_updates(sizes=(4, 4, 1))
        result = cluster(divergence_matrix(updates), ClusteringConfigFactory(min_cluster_fraction=0.3), seed=0)
        assert set(result.partition.assignment.values()) == set(range(result.partition.k))
        assert len(result.partition) == 9

    def test_equidistant_points_give_single_cluster(self):
        gamma = divergence_matrix(list(np.eye(6)))
        assert hdbscan(gamma, 2).k == 1

    def test_outlier_is_attached_to_the_dense_group(self):
        rng = np.random.default_rng(4)
        direction = np.ones(8)
        updates = [direction + 0.01 * rng.standard_normal(8) for _ in range(6)] + [-direction]
        config = ClusteringConfig(algorithm=ClusteringAlgorithm.HDBSCAN, min_cluster_fraction=0.4)
        result = cluster(divergence_matrix(updates), config, seed=0)
        assert result.partition.k == 1
        assert len(result.partition) == 7
        assert 6 in result.attached

    def test_too_few_clients_gives_single_cluster(self):
        gamma = divergence_matrix(planted_updates(sizes=(2, 1))[0])
        assert hdbscan(gamma, 3).k == 1

    def test_invalid_min_cluster_size(self):
        gamma = divergence_matrix(planted_updates()[0])
        with pytest.raises(InvalidMinClusterSize):
            hdbscan(gamma, 1)

    def test_min_cluster_size_from_fraction(self):
        assert ClusteringConfig().min_cluster_size(15) == 3
        assert ClusteringConfig().min_cluster_size(4) == 2


@pytest.mark.unit
class TestAgglomerative:

    def test_matches_brute_force_average_linkage(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            gamma = divergence_matrix(list(rng.standard_normal((n, 4))))
            threshold = float(rng.uniform(0.1, 1.5))
            expected = upgma_oracle(gamma.entries, threshold)
            assert agglomerative_average_linkage(gamma, threshold).equivalent(expected)

    def test_threshold_above_two_gives_one_cluster(self):
        gamma = divergence_matrix(planted_updates()[0])
        assert agglomerative_average_linkage(gamma, 2.0).k == 1

    def test_tiny_threshold_on_distinct_rows_gives_singletons(self):
        gamma = divergence_matrix([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        assert agglomerative_average_linkage(gamma, 1e-6).k == 3

    def test_cluster_count_never_grows_with_the_threshold(self):
        gamma = divergence_matrix(planted_updates(noise=0.8)[0])
        counts = [agglomerative_average_linkage(gamma, t).k for t in np.linspace(0.01, 2.0, 60)]
        assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))
        assert counts[-1] == 1

    def test_rejects_non_positive_threshold(self):
        gamma = divergence_matrix(planted_updates()[0])
        with pytest.raises(ValidationError):
            agglomerative_average_linkage(gamma, 0.0)


@pytest.mark.unit
class TestSattlerSplit:

    def test_antipodal_groups(self):
        updates = [[1.0, 0.1], [1.0, -0.1], [-1.0, 0.1], [-1.0, -0.1]]
        partition = sattler_bipartition(updates, client_ids=[10, 11, 12, 13])
        assert partition.equivalent(Partition({10: 0, 11: 0, 12: 1, 13: 1}))

    def test_identical_updates_are_degenerate(self):
        result = sattler_split([[1.0, 2.0]] * 3, client_ids=[4, 5, 6])
        assert result.degenerate
        assert result.partition.members(0) == (4,)

    def test_matches_minimax_cross_similarity_split(self):
        updates, _ = two_direction_updates()
        rows = np.asarray(updates)
        unit = rows / np.linalg.norm(rows, axis=1, keepdims=True)
        similarity = unit @ unit.T

        def worst_cross_similarity(labels):
            return similarity[np.ix_(labels == 0, labels == 1)].max()

        best = min(bipartitions(len(rows)), key=worst_cross_similarity)
        expected = Partition.from_labels(range(len(rows)), best)
        assert sattler_bipartition(updates).equivalent(expected)

    def test_dispatcher_rejects_bipartition(self):
        gamma = divergence_matrix(planted_updates()[0])
        with pytest.raises(ValidationError):
            cluster(gamma, ClusteringConfig(algorithm=ClusteringAlgorithm.SATTLER_BIPARTITION), seed=0)


@pytest.mark.unit
def test_client_ids_are_carried_through():
    updates, _ = planted_updates()
    ids = [100 + i for i in range(len(updates))]
    result = cluster(divergence_matrix(updates), ClusteringConfigFactory(), seed=0, client_ids=ids)
    assert result.partition.client_ids == tuple(ids)


@pytest.mark.unit
@pytest.mark.parametrize(
    'config',
    [
        ClusteringConfig(algorithm=ClusteringAlgorithm.KMEANS, k_hint=3),
        ClusteringConfig(algorithm=ClusteringAlgorithm.MEAN_SHIFT),
        ClusteringConfig(algorithm=ClusteringAlgorithm.AFFINITY_PROPAGATION),
        ClusteringConfig(algorithm=ClusteringAlgorithm.HDBSCAN),
        ClusteringConfig(algorithm=ClusteringAlgorithm.AGGLOMERATIVE_AVERAGE),
    ],
    ids=lambda config: config.algorithm.value,
)
def test_input_order_does_not_change_the_partition(config):
    updates, truth = planted_updates()
    for seed in range(3):
        permutation = np.random.default_rng(seed).permutation(len(updates))
        assert permuted_partition(updates, config, permutation).equivalent(truth)
