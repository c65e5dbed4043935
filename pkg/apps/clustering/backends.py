"""
Clustering backends operating on the divergence matrix.

K-Means and Mean Shift treat the rows of the matrix as Euclidean embeddings;
affinity propagation, HDBSCAN and agglomerative clustering consume it as a
precomputed similarity or distance matrix.
"""
import logging
import math
import warnings

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.cluster import HDBSCAN, AgglomerativeClustering, KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics.pairwise import cosine_similarity as pairwise_cosine_similarity
from sklearn.metrics.pairwise import euclidean_distances
from sklearn.neighbors import NearestNeighbors

from apps.numkit.divergence import stack_vectors
from core.exceptions import InvalidK, InvalidMinClusterSize, ValidationError
from core.seeding import Stream, int_seed

from .config import ClusteringAlgorithm, ClusteringResult
from .partition import Partition

logger = logging.getLogger(__name__)

NOISE = -1
MODE_TOLERANCE = 1e-3


def _ids(gamma, client_ids):
    if client_ids is None:
        return list(range(gamma.n))
    client_ids = [int(c) for c in client_ids]
    if len(client_ids) != gamma.n:
        raise ValidationError(
            f"Got {len(client_ids)} client ids for a {gamma.n} x {gamma.n} matrix."
        )
    return client_ids


def _require_pairs(gamma, backend):
    if gamma.n < 2:
        raise ValidationError(f"{backend} needs at least two clients, got {gamma.n}.")


def _kmeans(gamma, k, seed, client_ids=None, max_iterations=300):
    client_ids = _ids(gamma, client_ids)
    if not 2 <= k <= gamma.n:
        raise InvalidK(f"K-Means needs 2 <= k <= {gamma.n}, got {k}.", k=k, n=gamma.n)
    model = KMeans(
        n_clusters=k,
        init='k-means++',
        n_init=10,
        max_iter=max_iterations,
        tol=1e-9,
        random_state=seed,
    )
    with warnings.catch_warnings():
        # duplicate rows with k == n
        warnings.simplefilter('ignore', ConvergenceWarning)
        labels = model.fit_predict(gamma.entries)
    return ClusteringResult(Partition.from_labels(client_ids, labels))


def kmeans_on_rows(gamma, k, seed, client_ids=None):
    """Lloyd's algorithm with k-means++ seeding on the rows of ``gamma``."""
    return _kmeans(gamma, k, seed, client_ids).partition


def _estimate_bandwidth(rows, quantile):
    n = rows.shape[0]
    neighbours = min(n - 1, max(1, math.ceil(quantile * n - 1e-9)))
    distances, _ = NearestNeighbors(n_neighbors=neighbours + 1).fit(rows).kneighbors(rows)
    # column 0 is the row itself
    return float(distances[:, 1:].mean())


def _shift_to_modes(rows, bandwidth, max_iterations):
    """Flat-kernel mean shift started from every row."""
    window = NearestNeighbors(radius=bandwidth).fit(rows)
    stop = MODE_TOLERANCE * bandwidth
    modes, support = [], []
    for start in rows:
        mean = start
        for _ in range(max_iterations):
            members = window.radius_neighbors([mean], return_distance=False)[0]
            if members.size == 0:
                break
            shifted = rows[members].mean(axis=0)
            moved = np.linalg.norm(shifted - mean)
            mean = shifted
            if moved < stop:
                break
        modes.append(mean)
        support.append(window.radius_neighbors([mean], return_distance=False)[0].size)
    return np.vstack(modes), np.asarray(support)


def _merge_modes(modes, support, radius):
    """Keep modes by descending support, dropping any within ``radius`` of a kept one."""
    kept = []
    for index in np.argsort(-support, kind='stable'):
        if all(np.linalg.norm(modes[index] - modes[j]) >= radius for j in kept):
            kept.append(index)
    return modes[kept]


def _mean_shift(gamma, bandwidth_quantile, client_ids=None, max_iterations=300):
    _require_pairs(gamma, 'Mean Shift')
    client_ids = _ids(gamma, client_ids)
    rows = np.asarray(gamma.entries)
    bandwidth = _estimate_bandwidth(rows, bandwidth_quantile)
    degenerate = False

    if bandwidth == 0:
        pairwise = euclidean_distances(rows)
        positive = pairwise[pairwise > 0]
        if positive.size == 0:
            logger.warning('Mean Shift bandwidth is zero, all rows identical - Single cluster')
            return ClusteringResult(Partition.single(client_ids), degenerate=True)
        bandwidth = float(positive.min()) / 2.0
        degenerate = True
        logger.warning(
            f"Mean Shift bandwidth is zero - Clamped to {bandwidth:.6g}",
            extra={'bandwidth': bandwidth},
        )

    modes, support = _shift_to_modes(rows, bandwidth, max_iterations)
    modes = _merge_modes(modes, support, bandwidth / 2.0)
    _, nearest = NearestNeighbors(n_neighbors=1).fit(modes).kneighbors(rows)
    logger.debug(
        f"Mean Shift found {modes.shape[0]} modes - Bandwidth: {bandwidth:.6g}",
        extra={'bandwidth': bandwidth, 'modes': int(modes.shape[0])},
    )
    return ClusteringResult(
        Partition.from_labels(client_ids, nearest[:, 0]), degenerate=degenerate
    )


def mean_shift_on_rows(gamma, bandwidth_quantile, client_ids=None):
    """
    Flat-kernel mean shift on the rows of ``gamma``.

    The bandwidth is the mean distance from each row to its
    ``ceil(bandwidth_quantile * n)`` nearest neighbours. A zero bandwidth with
    identical rows yields the single-cluster partition.
    """
    return _mean_shift(gamma, bandwidth_quantile, client_ids).partition


def _equal_off_diagonal(similarity):
    off_diagonal = similarity[~np.eye(similarity.shape[0], dtype=bool)]
    return bool(np.all(off_diagonal == off_diagonal[0]))


def _pass_messages(similarity, damping, rng, max_iterations, convergence_patience):
    """
    Damped responsibility/availability updates.

    Returns the final messages and whether the exemplar set stayed unchanged
    and non-empty for ``convergence_patience`` consecutive iterations.
    """
    n = similarity.shape[0]
    rows = np.arange(n)
    # break ties between equally good exemplars
    similarity = similarity + (
        np.finfo(float).eps * similarity + np.finfo(float).tiny * 100
    ) * rng.standard_normal((n, n))
    responsibility = np.zeros((n, n))
    availability = np.zeros((n, n))
    history = np.zeros((n, convergence_patience), dtype=bool)

    for iteration in range(max_iterations):
        scores = availability + similarity
        best = np.argmax(scores, axis=1)
        first = scores[rows, best]
        scores[rows, best] = -np.inf
        second = np.max(scores, axis=1)
        update = similarity - first[:, None]
        update[rows, best] = similarity[rows, best] - second
        responsibility = damping * responsibility + (1 - damping) * update

        positive = np.maximum(responsibility, 0)
        np.fill_diagonal(positive, np.diag(responsibility))
        update = positive.sum(axis=0)[None, :] - positive
        self_availability = np.diag(update).copy()
        update = np.minimum(update, 0)
        np.fill_diagonal(update, self_availability)
        availability = damping * availability + (1 - damping) * update

        exemplars = (np.diag(availability) + np.diag(responsibility)) > 0
        history[:, iteration % convergence_patience] = exemplars
        if iteration + 1 >= convergence_patience and exemplars.any():
            stable = history.sum(axis=1)
            if np.all((stable == 0) | (stable == convergence_patience)):
                return similarity, responsibility, availability, True
    return similarity, responsibility, availability, False


def _exemplar_labels(similarity, responsibility, availability):
    """
    Assign every point to an exemplar.

    With no exemplar in the final messages each point follows the argmax of
    availability plus responsibility.
    """
    exemplars = np.flatnonzero((np.diag(availability) + np.diag(responsibility)) > 0)
    if exemplars.size == 0:
        return np.argmax(availability + responsibility, axis=1)
    nearest = np.argmax(similarity[:, exemplars], axis=1)
    nearest[exemplars] = np.arange(exemplars.size)
    # refine each exemplar to the member with the largest summed similarity
    for index in range(exemplars.size):
        members = np.flatnonzero(nearest == index)
        within = similarity[np.ix_(members, members)].sum(axis=0)
        exemplars[index] = members[np.argmax(within)]
    nearest = np.argmax(similarity[:, exemplars], axis=1)
    nearest[exemplars] = np.arange(exemplars.size)
    return exemplars[nearest]


def _affinity_propagation(
    gamma, damping, seed, client_ids=None, max_iterations=300, convergence_patience=15
):
    _require_pairs(gamma, 'Affinity propagation')
    client_ids = _ids(gamma, client_ids)
    similarity = -np.asarray(gamma.entries, dtype=float)
    off_diagonal = similarity[~np.eye(gamma.n, dtype=bool)]
    preference = float(np.median(off_diagonal))

    if _equal_off_diagonal(similarity):
        if off_diagonal[0] == 0:
            # identical rows, every point is the same exemplar
            return ClusteringResult(Partition.single(client_ids), degenerate=True)
        # preference equals the shared similarity: every point keeps itself
        return ClusteringResult(Partition.from_labels(client_ids, range(gamma.n)))

    np.fill_diagonal(similarity, preference)
    similarity, responsibility, availability, converged = _pass_messages(
        similarity, damping, np.random.default_rng(seed), max_iterations, convergence_patience
    )
    labels = _exemplar_labels(similarity, responsibility, availability)
    partition = Partition.from_labels(client_ids, labels)
    if not converged:
        logger.warning(
            f"Affinity propagation did not converge in {max_iterations} iterations - "
            f"Returning the last assignment ({partition.k} clusters)",
            extra={'damping': damping, 'n': gamma.n},
        )
    return ClusteringResult(partition, converged=converged)


def affinity_propagation(gamma, damping, seed, client_ids=None):
    """
    Affinity propagation on similarities ``-gamma`` with the median
    off-diagonal similarity as preference.

    A non-converged run returns the assignment of the last iteration; use
    ``cluster`` to read the convergence flag.
    """
    return _affinity_propagation(gamma, damping, seed, client_ids).partition


def _attach_noise(distances, labels):
    """Move every noise point into the cluster with the smallest mean raw distance."""
    labels = labels.copy()
    clusters = sorted(set(labels[labels != NOISE].tolist()))
    noise = np.flatnonzero(labels == NOISE)
    for index in noise:
        mean_distances = [distances[index, labels == c].mean() for c in clusters]
        labels[index] = clusters[int(np.argmin(mean_distances))]
    return labels, noise


def _hdbscan(gamma, min_cluster_size, client_ids=None, allow_single_cluster=True):
    client_ids = _ids(gamma, client_ids)
    if min_cluster_size < 2:
        raise InvalidMinClusterSize(
            f"HDBSCAN needs min_cluster_size >= 2, got {min_cluster_size}.",
            min_cluster_size=min_cluster_size,
        )
    if gamma.n <= min_cluster_size:
        return ClusteringResult(Partition.single(client_ids))

    distances = np.array(gamma.entries)
    model = HDBSCAN(
        min_cluster_size=min_cluster_size,
        min_samples=min(min_cluster_size, gamma.n - 1),
        metric='precomputed',
        allow_single_cluster=allow_single_cluster,
        copy=True,
    )
    labels = model.fit_predict(distances)
    if np.all(labels == NOISE):
        return ClusteringResult(Partition.single(client_ids))

    labels, noise = _attach_noise(distances, labels)
    attached = tuple(client_ids[i] for i in noise)
    if attached:
        logger.warning(
            f"HDBSCAN attached {len(attached)} noise clients to their nearest cluster",
            extra={'attached': list(attached)},
        )
    return ClusteringResult(Partition.from_labels(client_ids, labels), attached=attached)


def hdbscan(gamma, min_cluster_size, client_ids=None):
    """
    HDBSCAN on ``gamma`` as a precomputed distance matrix with
    ``min_samples = min_cluster_size``. Noise clients are attached afterwards,
    so the partition never holds a noise label.
    """
    return _hdbscan(gamma, min_cluster_size, client_ids).partition


def agglomerative_average_linkage(gamma, distance_threshold, client_ids=None):
    """
    Average-linkage agglomerative clustering cut at ``distance_threshold``:
    merges up to and including the threshold are made.
    """
    client_ids = _ids(gamma, client_ids)
    if distance_threshold <= 0:
        raise ValidationError(
            f"Distance threshold must be positive, got {distance_threshold}.",
            distance_threshold=distance_threshold,
        )
    if gamma.n == 1:
        return Partition.single(client_ids)
    tree = linkage(squareform(np.asarray(gamma.entries), checks=False), method='average')
    labels = fcluster(tree, t=distance_threshold, criterion='distance')
    return Partition.from_labels(client_ids, labels)


def sattler_split(deltas, client_ids=None):
    """
    Complete-linkage bipartition of updates on cosine distance.

    Identical directions give the degenerate split {first client} vs rest.
    """
    rows = stack_vectors(deltas)
    n = rows.shape[0]
    if n < 2:
        raise ValidationError(f"A bipartition needs at least two clients, got {n}.")
    client_ids = list(range(n)) if client_ids is None else [int(c) for c in client_ids]

    distance = np.clip(1.0 - pairwise_cosine_similarity(rows), 0.0, 2.0)
    np.fill_diagonal(distance, 0.0)
    if np.allclose(distance, 0.0, atol=1e-12):
        logger.warning('Bipartition of identical updates - Splitting off the first client')
        order = np.argsort(client_ids, kind='stable')
        labels = np.ones(n, dtype=int)
        labels[order[0]] = 0
        return ClusteringResult(Partition.from_labels(client_ids, labels), degenerate=True)

    model = AgglomerativeClustering(n_clusters=2, metric='precomputed', linkage='complete')
    labels = model.fit_predict(distance)
    return ClusteringResult(Partition.from_labels(client_ids, labels))


def sattler_bipartition(deltas, client_ids=None):
    return sattler_split(deltas, client_ids).partition


def cluster(gamma, config, seed, client_ids=None, round_index=0):
    """
    Dispatch ``gamma`` to the configured backend.

    Backends needing randomness draw it from the clustering stream of ``seed``
    keyed by round. ``SattlerBipartition`` works on updates, not on ``gamma``,
    and is only reachable through ``sattler_split``.
    """
    algorithm = config.algorithm
    if algorithm is ClusteringAlgorithm.KMEANS:
        return _kmeans(
            gamma,
            config.k_hint,
            int_seed(seed, Stream.CLUSTERING, round_index),
            client_ids,
            config.max_iterations,
        )
    if algorithm is ClusteringAlgorithm.MEAN_SHIFT:
        return _mean_shift(gamma, config.bandwidth_quantile, client_ids, config.max_iterations)
    if algorithm is ClusteringAlgorithm.AFFINITY_PROPAGATION:
        return _affinity_propagation(
            gamma,
            config.damping,
            int_seed(seed, Stream.CLUSTERING, round_index),
            client_ids,
            config.max_iterations,
            config.convergence_patience,
        )
    if algorithm is ClusteringAlgorithm.HDBSCAN:
        return _hdbscan(
            gamma, config.min_cluster_size(gamma.n), client_ids, config.allow_single_cluster
        )
    if algorithm is ClusteringAlgorithm.AGGLOMERATIVE_AVERAGE:
        return ClusteringResult(
            agglomerative_average_linkage(gamma, config.distance_threshold, client_ids)
        )
    raise ValidationError(f"Algorithm {algorithm.value} does not cluster a divergence matrix.")
