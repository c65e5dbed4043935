"""
Synthetic data-generating processes and the four split regimes.
"""
import logging
import math

import numpy as np

from apps.clustering.partition import Partition
from core.exceptions import (
    BusinessLogicError,
    DegenerateAllocation,
    InsufficientClasses,
    ValidationError,
)
from core.instrumentation import log_stage
from core.seeding import Stream, generator

from .plans import ORCHESTRATOR_ID, DgpSpec, FederatedDataset, LocalDataset

logger = logging.getLogger(__name__)

MIN_CLIENTS_PER_CLUSTER = 2

# sub-keys of the DATAGEN stream
_DGP_KEY = 0
_SAMPLE_KEY = 1


def _cluster_subspaces(plan, global_classes):
    shared = list(plan.overlap_classes)
    if any(c < 0 or c >= global_classes for c in shared):
        raise InsufficientClasses(
            f"Shared classes {shared} fall outside the {global_classes} global classes.",
            global_classes=global_classes,
        )
    pool = [c for c in range(global_classes) if c not in shared]
    per_cluster = plan.classes_per_cluster or len(pool) // plan.n_clusters
    if per_cluster < 1 or per_cluster * plan.n_clusters > len(pool):
        raise InsufficientClasses(
            f"{len(pool)} exclusive classes cannot give {plan.n_clusters} clusters "
            f"{max(per_cluster, 1)} classes each.",
            global_classes=global_classes,
            clusters=plan.n_clusters,
        )
    exclusive = [pool[c * per_cluster:(c + 1) * per_cluster] for c in range(plan.n_clusters)]
    return exclusive, shared


def _slot_prototypes(n_slots, feature_dim, spacing, rng):
    """Orthogonal prototypes with pairwise distance ``spacing``."""
    if n_slots > feature_dim:
        raise ValidationError(
            f"Feature dimension {feature_dim} is too small for {n_slots} class prototypes.",
            feature_dim=feature_dim,
        )
    q, _ = np.linalg.qr(rng.standard_normal((feature_dim, n_slots)))
    return (spacing / math.sqrt(2.0)) * q.T


def _unit_vectors(count, feature_dim, rng):
    raw = rng.standard_normal((count, feature_dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def check_disjoint_subspaces(dgps):
    """Non-overlapping regimes: no class may belong to two DGPs."""
    for i, left in enumerate(dgps):
        for right in dgps[i + 1:]:
            shared = sorted(set(left.label_subspace) & set(right.label_subspace))
            if shared:
                raise BusinessLogicError(
                    f"DGPs {left.dgp_id} and {right.dgp_id} share classes {shared} "
                    'in a non-overlapping regime.',
                    dgps=[left.dgp_id, right.dgp_id],
                    shared=shared,
                )


def build_dgps(
    plan,
    global_classes,
    feature_dim,
    seed,
    feature_sigma=1.0,
    mean_spacing=3.0,
    class_jitter=1.0,
):
    """
    Build one DGP per cluster.

    Every cluster lists its exclusive classes in order and the class in
    position j of any cluster is centred on the same slot prototype, offset by
    a class-specific jitter. Shared classes own extra slots and have identical
    means in every cluster. Balanced regimes use uniform priors, imbalanced
    regimes draw the prior from a symmetric Dirichlet.
    """
    exclusive, shared = _cluster_subspaces(plan, global_classes)
    rng = generator(seed, Stream.DATAGEN, _DGP_KEY)

    per_cluster = len(exclusive[0])
    prototypes = _slot_prototypes(
        per_cluster + len(shared), feature_dim, mean_spacing * feature_sigma, rng
    )
    jitter = class_jitter * feature_sigma * _unit_vectors(global_classes, feature_dim, rng)

    shared_means = {y: prototypes[per_cluster + j] + jitter[y] for j, y in enumerate(shared)}
    dgps = []
    for cluster_id, classes in enumerate(exclusive):
        means = {y: prototypes[j] + jitter[y] for j, y in enumerate(classes)}
        means.update(shared_means)
        subspace = tuple(sorted(means))
        if plan.regime.balanced:
            prior = np.full(len(subspace), 1.0 / len(subspace))
        else:
            prior = rng.dirichlet(np.full(len(subspace), plan.alpha))
            prior = prior / prior.sum()
        dgps.append(
            DgpSpec(
                dgp_id=cluster_id,
                label_subspace=subspace,
                class_prior=prior,
                feature_means={y: means[y] for y in subspace},
                feature_sigma=feature_sigma,
            )
        )

    if not plan.regime.overlapping:
        check_disjoint_subspaces(dgps)

    logger.debug(
        f"Built {len(dgps)} DGPs over {global_classes} classes",
        extra={'regime': plan.regime.value, 'subspaces': [d.label_subspace for d in dgps]},
    )
    return dgps


def allocate_clients(n_clients, cluster_fractions):
    """
    Client count per cluster by the largest-remainder method, then at least
    two clients per cluster, taken from the largest cluster.
    """
    fractions = np.asarray(cluster_fractions, dtype=np.float64)
    if n_clients < MIN_CLIENTS_PER_CLUSTER * fractions.size:
        raise DegenerateAllocation(
            f"{n_clients} clients cannot give {fractions.size} clusters at least "
            f"{MIN_CLIENTS_PER_CLUSTER} clients each.",
            n_clients=n_clients,
        )
    quotas = fractions * n_clients
    counts = np.floor(quotas + 1e-9).astype(int)
    remainders = quotas - counts
    # stable sort keeps lower cluster index first on ties
    for index in np.argsort(-remainders, kind='stable')[: n_clients - counts.sum()]:
        counts[index] += 1

    while counts.min() < MIN_CLIENTS_PER_CLUSTER:
        donor = int(np.argmax(counts))
        if counts[donor] <= MIN_CLIENTS_PER_CLUSTER:
            raise DegenerateAllocation('No cluster can spare a client.', n_clients=n_clients)
        counts[donor] -= 1
        counts[int(np.argmin(counts))] += 1
    return [int(c) for c in counts]


def _split_local(client_id, x, y, test_fraction, rng):
    order = rng.permutation(y.shape[0])
    n_test = int(round(test_fraction * y.shape[0]))
    n_test = min(n_test, y.shape[0] - 1)
    test, train = order[:n_test], order[n_test:]
    return LocalDataset(
        client_id=client_id,
        x_train=x[train].astype(np.float32),
        y_train=y[train].astype(np.int64),
        x_test=x[test].astype(np.float32),
        y_test=y[test].astype(np.int64),
    )


def _orchestrator_test(dgps, size, rng, feature_dim):
    owners = {}
    for dgp in dgps:
        for y in dgp.label_subspace:
            owners.setdefault(int(y), []).append(dgp)
    classes = sorted(owners)
    per_class = np.full(len(classes), size // len(classes))
    per_class[: size % len(classes)] += 1

    xs, ys = [], []
    for y, count in zip(classes, per_class):
        picks = rng.integers(0, len(owners[y]), size=count)
        means = np.array([owners[y][p].feature_means[y] for p in picks], dtype=np.float64)
        means = means.reshape(count, feature_dim)
        sigmas = np.array([owners[y][p].feature_sigma for p in picks])[:, None]
        xs.append(means + sigmas * rng.standard_normal((count, feature_dim)))
        ys.append(np.full(count, y, dtype=np.int64))
    x = np.concatenate(xs).astype(np.float32)
    y = np.concatenate(ys)
    empty = np.empty((0, feature_dim), dtype=np.float32)
    return LocalDataset(
        client_id=ORCHESTRATOR_ID,
        x_train=empty,
        y_train=np.empty(0, dtype=np.int64),
        x_test=x,
        y_test=y,
    )


def sample_federated_dataset(dgps, plan, seed, n_classes=None):
    """
    Draw every client's samples from its cluster's DGP, share samples across
    clients, split each client 80/20 and draw the class-uniform orchestrator
    test set. Clients get contiguous ids, cluster by cluster.
    """
    if len(dgps) != plan.n_clusters:
        raise ValidationError(
            f"Plan has {plan.n_clusters} clusters but {len(dgps)} DGPs were given."
        )
    feature_dim = dgps[0].feature_dim
    if n_classes is None:
        n_classes = 1 + max(max(d.label_subspace) for d in dgps)

    with log_stage('dataset generation', seed=seed, regime=plan.regime.value):
        rng = generator(seed, Stream.DATAGEN, _SAMPLE_KEY)
        counts = allocate_clients(plan.n_clients, plan.cluster_fractions)

        assignment = {}
        xs, ys = [], []
        for cluster_id, (dgp, count) in enumerate(zip(dgps, counts)):
            for _ in range(count):
                x, y = dgp.sample(plan.samples_per_client, rng)
                assignment[len(xs)] = cluster_id
                xs.append(x)
                ys.append(y)

        shared_x = [[] for _ in xs]
        shared_y = [[] for _ in ys]
        n_shared = 0
        if plan.share_rate > 0 and len(xs) > 1:
            for source in range(len(xs)):
                mask = rng.random(ys[source].shape[0]) < plan.share_rate
                targets = rng.integers(0, len(xs) - 1, size=int(mask.sum()))
                targets = targets + (targets >= source)
                for index, target in zip(np.flatnonzero(mask), targets):
                    shared_x[target].append(xs[source][index])
                    shared_y[target].append(ys[source][index])
                n_shared += int(mask.sum())

        clients = {}
        for client_id in range(len(xs)):
            x, y = xs[client_id], ys[client_id]
            if shared_y[client_id]:
                x = np.vstack([x, np.vstack(shared_x[client_id])])
                y = np.concatenate([y, np.asarray(shared_y[client_id])])
            clients[client_id] = _split_local(client_id, x, y, plan.test_fraction, rng)

        orchestrator = _orchestrator_test(dgps, plan.orchestrator_test_size, rng, feature_dim)

    logger.info(
        f"Sampled {len(clients)} clients in clusters of sizes {counts} - Shared samples: {n_shared}",
        extra={'seed': seed, 'cluster_sizes': counts, 'shared_samples': n_shared},
    )
    return FederatedDataset(
        clients=clients,
        ground_truth=Partition(assignment),
        orchestrator_test=orchestrator,
        n_classes=int(n_classes),
        feature_dim=feature_dim,
        plan=plan,
        seed=seed,
        dgps=tuple(dgps),
    )
