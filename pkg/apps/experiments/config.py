"""
Experiment configuration: TOML file -> validated, typed settings.
"""
import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings

from apps.clustering.config import ClusteringConfig
from apps.datagen.generator import build_dgps, sample_federated_dataset
from apps.datagen.manifest import load_federated_dataset
from apps.datagen.plans import SplitPlan
from apps.federation.state import BaselineConfig, BclConfig, SclConfig
from apps.model.network import ModelConfig
from apps.model.optim import OptimizerConfig
from apps.xai.inde import IndeConfig, IndeMode, IndeOrdering
from core.exceptions import ConfigParse, IoError

from .serializers import ExperimentSerializer

logger = logging.getLogger(__name__)

CLIENT_LEARNING_RATE = 0.05
SERVER_LEARNING_RATE = 1.0


@dataclass(frozen=True)
class DatasetConfig:
    plan: SplitPlan
    global_classes: int = 9
    feature_dim: int = 16
    feature_sigma: float = 1.0
    mean_spacing: float = 3.0
    class_jitter: float = 1.0
    manifest: str = None

    def build(self, seed):
        """The federated dataset of one seed, or the pre-generated one."""
        if self.manifest:
            return load_federated_dataset(self.manifest)
        dgps = build_dgps(
            self.plan,
            self.global_classes,
            self.feature_dim,
            seed,
            feature_sigma=self.feature_sigma,
            mean_spacing=self.mean_spacing,
            class_jitter=self.class_jitter,
        )
        return sample_federated_dataset(dgps, self.plan, seed, n_classes=self.global_classes)


@dataclass(frozen=True)
class IndeSettings:
    modes: tuple
    sample_size: float = 64
    step: int = 1
    baseline_value: float = 0.0
    target: str = 'Predicted'

    def config(self, mode, ordering=IndeOrdering.SALIENCY):
        return IndeConfig(
            mode=mode,
            sample_size=self.sample_size,
            step=self.step,
            baseline_value=self.baseline_value,
            ordering=ordering,
            target=self.target,
        )


DEFAULT_INDE = IndeSettings(modes=tuple(IndeMode))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: dataset, model, optimizers, strategy and clustering for a list of seeds."""

    dataset: DatasetConfig
    model: ModelConfig
    client_optimizer: OptimizerConfig
    server_optimizer: OptimizerConfig
    strategy: BaselineConfig
    clustering: ClusteringConfig
    rounds: int
    seeds: tuple
    output_dir: Path
    inde: IndeSettings = None
    source: dict = None

    @property
    def config_hash(self):
        return config_hash(self.source)

    def with_seeds(self, seeds):
        payload = dict(self.source, seeds=list(seeds))
        return build_config(payload)

    def with_output_dir(self, output_dir):
        payload = dict(self.source, output_dir=str(output_dir))
        return build_config(payload)


def config_hash(payload):
    """
    SHA-256 of the canonical JSON rendering of a validated configuration,
    output directory excluded.
    """
    payload = {key: value for key, value in payload.items() if key != 'output_dir'}
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _dotted_error(errors, prefix=''):
    """First offending dotted key and its message from nested serializer errors."""
    if isinstance(errors, dict):
        key = sorted(errors, key=str)[0]
        name = prefix if key == 'non_field_errors' else f"{prefix}.{key}".strip('.')
        return _dotted_error(errors[key], name)
    if isinstance(errors, list) and errors and isinstance(errors[0], (dict, list)):
        return _dotted_error(errors[0], prefix)
    message = str(errors[0]) if isinstance(errors, list) and errors else str(errors)
    return prefix or 'config', message


def _optimizer(data, default_learning_rate):
    return OptimizerConfig(
        kind=data['kind'],
        learning_rate=data.get('learning_rate', default_learning_rate),
        weight_decay=data['weight_decay'],
        betas=tuple(data['betas']),
        eps=data['eps'],
        batch_size=data['batch_size'],
        local_epochs=data['local_epochs'],
    )


def build_config(payload):
    """Validate a configuration mapping and build the typed configuration."""
    serializer = ExperimentSerializer(data=payload)
    if not serializer.is_valid():
        key, message = _dotted_error(serializer.errors)
        raise ConfigParse(f"Invalid setting '{key}': {message}", key=key)
    data = serializer.validated_data
    source = json.loads(json.dumps(data))

    dataset = data['dataset']
    plan = SplitPlan(
        regime=dataset['regime'],
        n_clients=dataset['n_clients'],
        cluster_fractions=tuple(dataset['cluster_fractions']),
        alpha=dataset['alpha'],
        overlap_classes=tuple(dataset['overlap_classes']),
        samples_per_client=dataset['samples_per_client'],
        share_rate=dataset['share_rate'],
        classes_per_cluster=dataset['classes_per_cluster'],
        test_fraction=dataset['test_fraction'],
        orchestrator_test_size=dataset['orchestrator_test_size'],
    )
    strategy = data['strategy']
    clustering = data['clustering']
    inde = data.get('inde')
    output_dir = data.get('output_dir') or settings.OCFL['OUTPUT_DIR']

    return ExperimentConfig(
        dataset=DatasetConfig(
            plan=plan,
            global_classes=dataset['global_classes'],
            feature_dim=dataset['feature_dim'],
            feature_sigma=dataset['feature_sigma'],
            mean_spacing=dataset['mean_spacing'],
            class_jitter=dataset['class_jitter'],
            manifest=dataset['manifest'],
        ),
        model=ModelConfig(hidden=tuple(data['model']['hidden']), activation=data['model']['activation']),
        client_optimizer=_optimizer(data['client_optimizer'], CLIENT_LEARNING_RATE),
        server_optimizer=_optimizer(data['server_optimizer'], SERVER_LEARNING_RATE),
        strategy=BaselineConfig(
            strategy=strategy['name'],
            scl=SclConfig(**strategy['scl']),
            bcl=BclConfig(**strategy['bcl']),
            temperature_p=strategy['temperature_p'],
            temperature_window=strategy['temperature_window'],
            lambda_mode=strategy['lambda_mode'],
        ),
        clustering=ClusteringConfig(**clustering),
        rounds=data['rounds'],
        seeds=tuple(data['seeds']),
        output_dir=Path(output_dir),
        inde=(
            IndeSettings(
                modes=tuple(IndeMode(m) for m in inde['modes']),
                sample_size=inde['sample_size'],
                step=inde['step'],
                baseline_value=inde['baseline_value'],
                target=inde['target'],
            )
            if inde is not None
            else None
        ),
        source=source,
    )


def load_config(path):
    """Parse and validate a TOML experiment file."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise IoError(f"Cannot read configuration {path}: {exc}", path=str(path)) from exc
    try:
        payload = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParse(f"Malformed configuration {path}: {exc}", key='config') from exc
    config = build_config(payload)
    logger.debug(
        f"Loaded configuration {path} - Hash: {config.config_hash[:12]}",
        extra={'path': str(path), 'config_hash': config.config_hash},
    )
    return config
