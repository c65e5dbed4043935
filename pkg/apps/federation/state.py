"""
Federation state, strategy settings and per-round records.
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from apps.model.optim import OptimizerKind, ServerOptimizerState
from apps.numkit.temperature import LambdaMode
from core.exceptions import ValidationError


class Strategy(str, Enum):
    BNC = 'BNC'
    OCFL = 'OCFL'
    SCL = 'SCL'
    BCL = 'BCL'


@dataclass(frozen=True)
class SclConfig:
    """
    Bipartitioning baseline: a cluster of more than two clients splits once
    the norm of its mean update drops below ``epsilon1`` while its largest
    update norm exceeds ``epsilon2``, in rounds after ``cooldown``.
    """

    epsilon1: float = 0.35
    epsilon2: float = 1.00
    cooldown: int = 20

    def __post_init__(self):
        if self.epsilon1 < 0 or self.epsilon2 < 0:
            raise ValidationError('Split thresholds must be non-negative.')
        if self.cooldown < 1:
            raise ValidationError(f"Cooldown must be at least 1, got {self.cooldown}.")


@dataclass(frozen=True)
class BclConfig:
    clustering_round: int = 21
    distance_threshold: float = 0.2

    def __post_init__(self):
        if self.clustering_round < 1:
            raise ValidationError(
                f"Clustering round must be at least 1, got {self.clustering_round}."
            )
        if self.distance_threshold <= 0:
            raise ValidationError('Distance threshold must be positive.')


@dataclass(frozen=True)
class BaselineConfig:
    strategy: Strategy = Strategy.OCFL
    scl: SclConfig = field(default_factory=SclConfig)
    bcl: BclConfig = field(default_factory=BclConfig)
    temperature_p: float = 2.0
    temperature_window: int = 1
    lambda_mode: LambdaMode = LambdaMode.MAXIMAL_DIVERGENCE

    def __post_init__(self):
        object.__setattr__(self, 'strategy', Strategy(self.strategy))
        object.__setattr__(self, 'lambda_mode', LambdaMode(self.lambda_mode))


@dataclass
class ClusterState:
    """
    Current partition, one model per cluster and the per-cluster server
    optimizer state (``None`` for SGD servers).
    """

    partition: object
    models: dict
    server_states: dict
    fired: bool = False

    @classmethod
    def initial(cls, partition, model, server_opt):
        stateful = server_opt.kind is OptimizerKind.ADAM
        return cls(
            partition=partition,
            models={0: model},
            server_states={0: ServerOptimizerState(model.parameter_count) if stateful else None},
        )

    def model_for(self, client_id):
        return self.models[self.partition[client_id]]

    def repartition(self, partition):
        """
        Adopt ``partition``. Each new cluster starts from the model and server
        state of the old cluster holding its lowest client id.
        """
        models, server_states = {}, {}
        for cluster_id, members in partition.clusters().items():
            parent = self.partition[min(members)]
            models[cluster_id] = self.models[parent].copy()
            state = self.server_states[parent]
            server_states[cluster_id] = state.copy() if state is not None else None
        self.partition = partition
        self.models = models
        self.server_states = server_states


@dataclass
class RoundRecord:
    """
    Metrics of one round, taken after aggregation.

    ``temperature`` is None once the trigger has fired in an earlier round and
    for strategies that do not monitor it.
    """

    t: int
    temperature: float
    fired_this_round: bool
    partition: object
    pf1: dict
    gf1: dict
    train_loss: dict
    scores: dict
    lambda_value: float = None
    clustering: dict = None

    @property
    def k(self):
        return self.partition.k

    @property
    def mean_pf1(self):
        values = [v for v in self.pf1.values() if not math.isnan(v)]
        return float(np.mean(values)) if values else math.nan

    @property
    def mean_gf1(self):
        """Client-weighted mean of per-cluster orchestrator macro-F1."""
        sizes = self.partition.sizes()
        return float(sum(self.gf1[c] * n for c, n in enumerate(sizes)) / sum(sizes))

    @property
    def learning_gap(self):
        return abs(self.mean_pf1 - self.mean_gf1)

    @property
    def mean_train_loss(self):
        return float(np.mean(list(self.train_loss.values())))
