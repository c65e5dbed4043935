"""
factory_boy factories for configuration objects and small synthetic tasks.
"""
import factory

from apps.clustering.config import ClusteringAlgorithm, ClusteringConfig
from apps.datagen.plans import SplitPlan, SplitRegime
from apps.federation.state import BaselineConfig, BclConfig, SclConfig, Strategy
from apps.model.network import Activation, ModelConfig
from apps.model.optim import OptimizerConfig, OptimizerKind
from apps.xai.inde import IndeConfig, IndeMode, IndeOrdering


class SplitPlanFactory(factory.Factory):
    """Six clients in three clusters of two, small enough for round-level tests."""

    class Meta:
        model = SplitPlan

    regime = SplitRegime.NON_OVERLAP_BALANCED
    n_clients = 6
    cluster_fractions = (1 / 3, 1 / 3, 1 / 3)
    alpha = 1.0
    overlap_classes = ()
    samples_per_client = 80
    share_rate = 0.0
    classes_per_cluster = None
    test_fraction = 0.2
    orchestrator_test_size = 90


class ReferencePlanFactory(SplitPlanFactory):
    """15 clients split 3/7/5."""

    n_clients = 15
    cluster_fractions = (0.20, 0.47, 0.33)
    samples_per_client = 200
    share_rate = 0.05
    orchestrator_test_size = 900


class ModelConfigFactory(factory.Factory):
    class Meta:
        model = ModelConfig

    hidden = (16,)
    activation = Activation.RELU


class OptimizerConfigFactory(factory.Factory):
    class Meta:
        model = OptimizerConfig

    kind = OptimizerKind.SGD
    learning_rate = 0.05
    weight_decay = 0.0
    batch_size = 16
    local_epochs = 1


class ClusteringConfigFactory(factory.Factory):
    class Meta:
        model = ClusteringConfig

    algorithm = ClusteringAlgorithm.HDBSCAN
    k_hint = None
    min_cluster_fraction = 0.2


class SclConfigFactory(factory.Factory):
    class Meta:
        model = SclConfig

    epsilon1 = 0.35
    epsilon2 = 1.0
    cooldown = 20


class BclConfigFactory(factory.Factory):
    class Meta:
        model = BclConfig

    clustering_round = 3
    distance_threshold = 0.2


class BaselineConfigFactory(factory.Factory):
    class Meta:
        model = BaselineConfig

    strategy = Strategy.OCFL
    scl = factory.SubFactory(SclConfigFactory)
    bcl = factory.SubFactory(BclConfigFactory)
    temperature_p = 2.0
    temperature_window = 1


class IndeConfigFactory(factory.Factory):
    class Meta:
        model = IndeConfig

    mode = IndeMode.IN_DISTRIBUTION
    sample_size = 16
    step = 1
    baseline_value = 0.0
    ordering = IndeOrdering.SALIENCY


def experiment_payload(**overrides):
    """A small experiment configuration mapping, as parsed from TOML."""
    payload = {
        'rounds': 4,
        'seeds': [0],
        'dataset': {
            'n_clients': 6,
            'global_classes': 6,
            'feature_dim': 8,
            'samples_per_client': 60,
            'share_rate': 0.0,
            'orchestrator_test_size': 60,
        },
        'model': {'hidden': [8]},
        'client_optimizer': {'batch_size': 16, 'local_epochs': 1},
        'strategy': {'name': 'OCFL'},
        'clustering': {'algorithm': 'Hdbscan'},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(payload.get(key), dict):
            payload[key] = {**payload[key], **value}
        else:
            payload[key] = value
    return payload
