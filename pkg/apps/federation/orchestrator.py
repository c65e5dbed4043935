"""
Round-synchronous federated training with one-shot clustering and the
BNC / SCL / BCL baselines.

Every strategy shares one round: all clients train from their cluster model,
the strategy may repartition from the updates, then each cluster aggregates
its members' updates and the round is scored.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from apps.clustering.backends import agglomerative_average_linkage, cluster, sattler_split
from apps.clustering.partition import Partition
from apps.metrics.agreement import agreement_scores
from apps.metrics.classification import macro_f1
from apps.model.optim import SERVER_SGD
from apps.model.training import client_local_train, fedopt_aggregate
from apps.numkit.divergence import divergence_matrix
from apps.numkit.temperature import TemperatureState, normalising_constant
from core.exceptions import OcflError, ValidationError
from core.instrumentation import log_stage
from core.seeding import Stream, generator, int_seed

from .state import BaselineConfig, ClusterState, RoundRecord, Strategy

logger = logging.getLogger(__name__)


@dataclass
class RoundEvent:
    """What the strategy did with one round's updates."""

    temperature: float = None
    lambda_value: float = None
    fired: bool = False
    clustering: dict = None


class FederatedTraining:
    """
    Plain FedOpt over a single cohort (BNC). Subclasses override
    ``on_updates`` to repartition clients.
    """

    strategy = Strategy.BNC

    def __init__(
        self,
        fd,
        model_cfg,
        opt_cfg,
        rounds,
        seed,
        server_opt=SERVER_SGD,
        workers=1,
    ):
        if rounds < 1:
            raise ValidationError(f"A run needs at least one round, got {rounds}.", rounds=rounds)
        self.fd = fd
        self.opt_cfg = opt_cfg
        self.rounds = int(rounds)
        self.seed = int(seed)
        self.server_opt = server_opt
        self.workers = max(1, int(workers))
        model = model_cfg.build(fd.feature_dim, fd.n_classes, generator(seed, Stream.MODEL_INIT))
        self.state = ClusterState.initial(Partition.single(fd.client_ids), model, server_opt)
        self.records = []

    def run(self):
        for t in range(1, self.rounds + 1):
            try:
                with log_stage('federated round', level=logging.DEBUG, seed=self.seed, round=t):
                    deltas = self.train_clients(t)
                    event = self.on_updates(t, deltas)
                    self.aggregate(deltas)
                    self.records.append(self.evaluate(t, deltas, event))
            except OcflError as exc:
                exc.details.setdefault('round', t)
                exc.details.setdefault('seed', self.seed)
                raise
        return self.records

    def train_clients(self, t):
        """Local training of every client; results keyed and ordered by client id."""
        client_ids = self.fd.client_ids

        def train(client_id):
            return client_local_train(
                self.state.model_for(client_id),
                self.fd.clients[client_id],
                self.opt_cfg,
                int_seed(self.seed, Stream.CLIENT, t, client_id),
            )

        if self.workers == 1:
            results = [train(c) for c in client_ids]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(train, client_ids))
        return dict(zip(client_ids, results))

    def on_updates(self, t, deltas):
        return RoundEvent()

    def aggregate(self, deltas):
        for cluster_id, members in self.state.partition.clusters().items():
            model = self.state.models[cluster_id]
            params = fedopt_aggregate(
                model.flatten(),
                [deltas[c] for c in members],
                self.server_opt,
                self.state.server_states[cluster_id],
            )
            self.state.models[cluster_id] = model.with_parameters(params)

    def evaluate(self, t, deltas, event):
        fd = self.fd
        pf1 = {}
        for client_id in fd.client_ids:
            local = fd.clients[client_id]
            pf1[client_id] = (
                macro_f1(self.state.model_for(client_id).predict(local.x_test), local.y_test, fd.n_classes)
                if local.n_test
                else math.nan
            )

        orchestrator = fd.orchestrator_test
        gf1, train_loss = {}, {}
        for cluster_id, members in self.state.partition.clusters().items():
            model = self.state.models[cluster_id]
            gf1[cluster_id] = macro_f1(model.predict(orchestrator.x_test), orchestrator.y_test, fd.n_classes)
            train_loss[cluster_id] = float(np.mean([deltas[c].train_loss for c in members]))

        record = RoundRecord(
            t=t,
            temperature=event.temperature,
            fired_this_round=event.fired,
            partition=self.state.partition,
            pf1=pf1,
            gf1=gf1,
            train_loss=train_loss,
            scores=agreement_scores(fd.ground_truth, self.state.partition),
            lambda_value=event.lambda_value,
            clustering=event.clustering,
        )
        logger.debug(
            f"Round {t} - k={record.k} PF1={record.mean_pf1:.4f} GF1={record.mean_gf1:.4f}",
            extra={'seed': self.seed, 'round': t, 'k': record.k},
        )
        return record


def _attach_by_mean_update(partition, deltas, excluded):
    """Assign each excluded client to the cluster whose mean update is nearest."""
    if not excluded:
        return partition
    means = np.vstack(
        [
            np.mean([deltas[c].delta.values for c in members], axis=0)
            for _, members in sorted(partition.clusters().items())
        ]
    )
    assignment = dict(partition.assignment)
    for client_id in excluded:
        distances = np.linalg.norm(means - deltas[client_id].delta.values, axis=1)
        assignment[client_id] = int(np.argmin(distances))
    return Partition(assignment)


class OneShotClustering(FederatedTraining):
    """
    Monitors the clustering temperature of all client updates and partitions
    the population exactly once, the first round the temperature stops
    decreasing.
    """

    strategy = Strategy.OCFL

    def __init__(
        self,
        fd,
        model_cfg,
        opt_cfg,
        clustering_cfg,
        rounds,
        seed,
        baseline_cfg=None,
        server_opt=SERVER_SGD,
        workers=1,
        temperature_state=None,
    ):
        super().__init__(fd, model_cfg, opt_cfg, rounds, seed, server_opt, workers)
        self.clustering_cfg = clustering_cfg
        baseline_cfg = baseline_cfg or BaselineConfig()
        self.temperature = temperature_state or TemperatureState(
            p=baseline_cfg.temperature_p,
            lambda_mode=baseline_cfg.lambda_mode,
            window=baseline_cfg.temperature_window,
        )

    def on_updates(self, t, deltas):
        if self.state.fired:
            return RoundEvent()

        active = [c for c in self.fd.client_ids if not deltas[c].is_zero]
        excluded = [c for c in self.fd.client_ids if deltas[c].is_zero]
        if excluded:
            logger.warning(
                f"Round {t}: {len(excluded)} zero-norm updates left out of the divergence matrix",
                extra={'seed': self.seed, 'round': t, 'excluded': excluded},
            )
        if len(active) < 2:
            return RoundEvent()

        gamma = divergence_matrix([deltas[c].delta for c in active])
        fired = self.temperature.update_and_test_trigger(gamma)
        event = RoundEvent(
            temperature=self.temperature.t_curr,
            lambda_value=normalising_constant(gamma, self.temperature.p, self.temperature.lambda_mode),
            fired=fired,
        )
        if not fired:
            return event

        self.state.fired = True
        result = cluster(gamma, self.clustering_cfg, self.seed, client_ids=active, round_index=t)
        event.clustering = result.to_dict()
        if not result.converged:
            logger.warning(
                f"Round {t}: clustering did not converge - Keeping the current partition",
                extra={'seed': self.seed, 'round': t},
            )
            return event

        partition = _attach_by_mean_update(result.partition, deltas, excluded)
        self.state.repartition(partition)
        event.clustering['k'] = partition.k
        logger.info(
            f"Clustering fired at round {t} - Temperature: {event.temperature:.6f}, k={partition.k}",
            extra={'seed': self.seed, 'round': t, 'temperature': event.temperature, 'k': partition.k},
        )
        return event


class BipartitionClustering(FederatedTraining):
    """
    Recursive bipartitioning of stalled, incongruent clusters after a
    cooldown period.
    """

    strategy = Strategy.SCL

    def __init__(self, fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, server_opt=SERVER_SGD, workers=1):
        super().__init__(fd, model_cfg, opt_cfg, rounds, seed, server_opt, workers)
        self.config = baseline_cfg.scl

    def should_split(self, t, updates):
        if t <= self.config.cooldown or updates.shape[0] <= 2:
            return False
        mean_norm = float(np.linalg.norm(updates.mean(axis=0)))
        max_norm = float(np.linalg.norm(updates, axis=1).max())
        return mean_norm < self.config.epsilon1 and max_norm > self.config.epsilon2

    def on_updates(self, t, deltas):
        labels = {}
        splits = []
        for cluster_id, members in self.state.partition.clusters().items():
            updates = np.vstack([deltas[c].delta.values for c in members])
            if self.should_split(t, updates):
                result = sattler_split([deltas[c].delta for c in members], client_ids=members)
                labels.update({c: (cluster_id, result.partition[c]) for c in members})
                splits.append({'cluster': cluster_id, **result.to_dict()})
            else:
                labels.update({c: (cluster_id, 0) for c in members})

        if not splits:
            return RoundEvent()

        client_ids = self.fd.client_ids
        partition = Partition.from_labels(client_ids, [labels[c] for c in client_ids])
        self.state.repartition(partition)
        self.state.fired = True
        logger.info(
            f"Round {t}: split {len(splits)} clusters - k={partition.k}",
            extra={'seed': self.seed, 'round': t, 'k': partition.k},
        )
        return RoundEvent(fired=True, clustering={'k': partition.k, 'splits': splits})


class HierarchicalClustering(FederatedTraining):
    """
    Average-linkage clustering of the clients' end-of-round weights at one
    fixed round.
    """

    strategy = Strategy.BCL

    def __init__(self, fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, server_opt=SERVER_SGD, workers=1):
        super().__init__(fd, model_cfg, opt_cfg, rounds, seed, server_opt, workers)
        self.config = baseline_cfg.bcl
        if self.config.clustering_round > rounds:
            raise ValidationError(
                f"Clustering round {self.config.clustering_round} is after the last round {rounds}.",
                clustering_round=self.config.clustering_round,
            )

    def on_updates(self, t, deltas):
        if self.state.fired or t != self.config.clustering_round:
            return RoundEvent()

        client_ids = self.fd.client_ids
        weights = [self.state.model_for(c).flatten() + deltas[c].delta for c in client_ids]
        gamma = divergence_matrix(weights)
        partition = agglomerative_average_linkage(
            gamma, self.config.distance_threshold, client_ids=client_ids
        )
        self.state.repartition(partition)
        self.state.fired = True
        logger.info(
            f"Round {t}: hierarchical clustering gave k={partition.k}",
            extra={'seed': self.seed, 'round': t, 'k': partition.k},
        )
        return RoundEvent(fired=True, clustering={'k': partition.k})


def run_ocfl(fd, model_cfg, opt_cfg, clustering_cfg, rounds, seed, **options):
    return OneShotClustering(fd, model_cfg, opt_cfg, clustering_cfg, rounds, seed, **options).run()


def run_bnc(fd, model_cfg, opt_cfg, rounds, seed, **options):
    return FederatedTraining(fd, model_cfg, opt_cfg, rounds, seed, **options).run()


def run_scl(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options):
    return BipartitionClustering(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options).run()


def run_bcl(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options):
    return HierarchicalClustering(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options).run()


def build_training(
    fd,
    model_cfg,
    opt_cfg,
    baseline_cfg,
    clustering_cfg,
    rounds,
    seed,
    server_opt=SERVER_SGD,
    workers=1,
):
    """Training object for the configured strategy."""
    options = {'server_opt': server_opt, 'workers': workers}
    strategy = baseline_cfg.strategy
    if strategy is Strategy.OCFL:
        return OneShotClustering(
            fd, model_cfg, opt_cfg, clustering_cfg, rounds, seed, baseline_cfg=baseline_cfg, **options
        )
    if strategy is Strategy.SCL:
        return BipartitionClustering(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options)
    if strategy is Strategy.BCL:
        return HierarchicalClustering(fd, model_cfg, opt_cfg, baseline_cfg, rounds, seed, **options)
    return FederatedTraining(fd, model_cfg, opt_cfg, rounds, seed, **options)
