"""
Experiment configuration serializers with cross-field validation.

Each TOML table maps onto one serializer; unknown keys are rejected so a
typo never silently falls back to a default.
"""
import math

from rest_framework import serializers

from apps.clustering.config import ClusteringAlgorithm, PreferenceMode
from apps.datagen.plans import BALANCED_FRACTIONS, IMBALANCED_FRACTIONS, SplitRegime
from apps.federation.state import Strategy
from apps.model.network import Activation
from apps.model.optim import OptimizerKind
from apps.numkit.temperature import LambdaMode
from apps.xai.inde import IndeMode, IndeTarget


def _choices(enum):
    return [member.value for member in enum]


class StrictSerializer(serializers.Serializer):
    """
    Serializer that refuses keys it does not declare. A missing required
    table is validated as an empty one, so its defaults apply.
    """

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown setting.'] for key in unknown})
            data = dict(data)
            for name, field in self.fields.items():
                if isinstance(field, serializers.Serializer) and field.required:
                    data.setdefault(name, {})
        return super().to_internal_value(data)


class DatasetSerializer(StrictSerializer):
    """Split plan and data-generating process knobs."""
    manifest = serializers.CharField(required=False, allow_null=True, default=None)
    regime = serializers.ChoiceField(choices=_choices(SplitRegime), default=SplitRegime.NON_OVERLAP_BALANCED.value)
    n_clients = serializers.IntegerField(min_value=2, default=15)
    cluster_fractions = serializers.ListField(child=serializers.FloatField(), required=False)
    alpha = serializers.FloatField(default=1.0)
    global_classes = serializers.IntegerField(min_value=2, default=9)
    classes_per_cluster = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    overlap_classes = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    feature_dim = serializers.IntegerField(min_value=1, default=16)
    feature_sigma = serializers.FloatField(default=1.0)
    mean_spacing = serializers.FloatField(default=3.0)
    class_jitter = serializers.FloatField(min_value=0.0, default=1.0)
    samples_per_client = serializers.IntegerField(min_value=2, default=200)
    share_rate = serializers.FloatField(default=0.05)
    test_fraction = serializers.FloatField(default=0.2)
    orchestrator_test_size = serializers.IntegerField(min_value=1, default=900)

    def validate_cluster_fractions(self, value):
        """Validate the cluster fractions form a probability vector."""
        if not value or any(f <= 0 for f in value):
            raise serializers.ValidationError('Fractions must be a non-empty list of positive numbers.')
        if abs(sum(value) - 1.0) > 1e-9:
            raise serializers.ValidationError(f"Fractions must sum to 1, got {sum(value):.12g}.")
        return value

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError('Dirichlet concentration must be positive.')
        return value

    def validate_feature_sigma(self, value):
        if value <= 0:
            raise serializers.ValidationError('Feature sigma must be positive.')
        return value

    def validate_mean_spacing(self, value):
        if value <= 0:
            raise serializers.ValidationError('Mean spacing must be positive.')
        return value

    def validate_share_rate(self, value):
        if not 0 <= value < 1:
            raise serializers.ValidationError('Share rate must lie in [0, 1).')
        return value

    def validate_test_fraction(self, value):
        if not 0 <= value < 1:
            raise serializers.ValidationError('Test fraction must lie in [0, 1).')
        return value

    def validate(self, attrs):
        """Fill regime-dependent defaults and check class overlap."""
        regime = SplitRegime(attrs['regime'])
        if 'cluster_fractions' not in attrs:
            attrs['cluster_fractions'] = list(BALANCED_FRACTIONS if regime.balanced else IMBALANCED_FRACTIONS)
        if 'overlap_classes' not in attrs:
            attrs['overlap_classes'] = [0] if regime.overlapping else []

        if regime.overlapping and not attrs['overlap_classes']:
            raise serializers.ValidationError({'overlap_classes': 'Overlapping regimes need a shared class.'})
        if not regime.overlapping and attrs['overlap_classes']:
            raise serializers.ValidationError({'overlap_classes': 'Non-overlapping regimes cannot share classes.'})
        if any(c >= attrs['global_classes'] for c in attrs['overlap_classes']):
            raise serializers.ValidationError({'overlap_classes': 'Shared classes must be global classes.'})

        clusters = len(attrs['cluster_fractions'])
        if attrs['n_clients'] < 2 * clusters:
            raise serializers.ValidationError(
                {'n_clients': f"{clusters} clusters need at least {2 * clusters} clients."}
            )
        return attrs


class ModelSerializer(StrictSerializer):
    hidden = serializers.ListField(child=serializers.IntegerField(min_value=1), default=lambda: [64], allow_empty=True)
    activation = serializers.ChoiceField(choices=_choices(Activation), default=Activation.RELU.value)


class OptimizerSerializer(StrictSerializer):
    """Client or server optimizer."""
    kind = serializers.ChoiceField(choices=_choices(OptimizerKind), default=OptimizerKind.SGD.value)
    learning_rate = serializers.FloatField(min_value=0.0, required=False)
    weight_decay = serializers.FloatField(min_value=0.0, default=0.0)
    betas = serializers.ListField(child=serializers.FloatField(), default=lambda: [0.9, 0.999])
    eps = serializers.FloatField(default=1e-8)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    local_epochs = serializers.IntegerField(min_value=1, default=3)

    def validate_betas(self, value):
        if len(value) != 2 or not all(0 <= b < 1 for b in value):
            raise serializers.ValidationError('Betas must be two values in [0, 1).')
        return value

    def validate_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError('Eps must be positive.')
        return value


class SclSerializer(StrictSerializer):
    epsilon1 = serializers.FloatField(min_value=0.0, default=0.35)
    epsilon2 = serializers.FloatField(min_value=0.0, default=1.00)
    cooldown = serializers.IntegerField(min_value=1, default=20)

    def validate(self, attrs):
        if attrs['epsilon1'] >= attrs['epsilon2']:
            raise serializers.ValidationError({'epsilon1': 'epsilon1 must be below epsilon2.'})
        return attrs


class BclSerializer(StrictSerializer):
    clustering_round = serializers.IntegerField(min_value=1, default=21)
    distance_threshold = serializers.FloatField(default=0.2)

    def validate_distance_threshold(self, value):
        if value <= 0:
            raise serializers.ValidationError('Distance threshold must be positive.')
        return value


class StrategySerializer(StrictSerializer):
    name = serializers.ChoiceField(choices=_choices(Strategy), default=Strategy.OCFL.value)
    temperature_p = serializers.FloatField(default=2.0)
    temperature_window = serializers.IntegerField(min_value=1, default=1)
    lambda_mode = serializers.ChoiceField(
        choices=_choices(LambdaMode), default=LambdaMode.MAXIMAL_DIVERGENCE.value
    )
    scl = SclSerializer()
    bcl = BclSerializer()

    def validate_temperature_p(self, value):
        if not value >= 1:
            raise serializers.ValidationError('Norm order p must be at least 1.')
        return value


class ClusteringSerializer(StrictSerializer):
    algorithm = serializers.ChoiceField(
        choices=_choices(ClusteringAlgorithm), default=ClusteringAlgorithm.HDBSCAN.value
    )
    k_hint = serializers.IntegerField(min_value=2, required=False, allow_null=True, default=None)
    min_cluster_fraction = serializers.FloatField(default=0.2)
    bandwidth_quantile = serializers.FloatField(default=0.3)
    damping = serializers.FloatField(default=0.5)
    preference_mode = serializers.ChoiceField(
        choices=_choices(PreferenceMode), default=PreferenceMode.MEDIAN_SIMILARITY.value
    )
    distance_threshold = serializers.FloatField(default=0.2)
    max_iterations = serializers.IntegerField(min_value=1, default=300)
    convergence_patience = serializers.IntegerField(min_value=1, default=15)
    allow_single_cluster = serializers.BooleanField(default=True)

    def validate_min_cluster_fraction(self, value):
        if not 0 < value <= 0.5:
            raise serializers.ValidationError('Minimum cluster fraction must lie in (0, 0.5].')
        return value

    def validate_bandwidth_quantile(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError('Bandwidth quantile must lie in (0, 1].')
        return value

    def validate_damping(self, value):
        if not 0.5 <= value < 1:
            raise serializers.ValidationError('Damping must lie in [0.5, 1).')
        return value

    def validate_distance_threshold(self, value):
        if value <= 0:
            raise serializers.ValidationError('Distance threshold must be positive.')
        return value

    def validate(self, attrs):
        if attrs['algorithm'] == ClusteringAlgorithm.KMEANS.value and attrs.get('k_hint') is None:
            raise serializers.ValidationError({'k_hint': 'K-Means needs the number of clusters.'})
        if attrs['algorithm'] == ClusteringAlgorithm.SATTLER_BIPARTITION.value:
            raise serializers.ValidationError(
                {'algorithm': 'SattlerBipartition is selected through strategy.name = "SCL".'}
            )
        return attrs


class IndeSerializer(StrictSerializer):
    modes = serializers.ListField(
        child=serializers.ChoiceField(choices=_choices(IndeMode)),
        default=lambda: _choices(IndeMode),
        allow_empty=False,
    )
    sample_size = serializers.FloatField(default=64)
    step = serializers.IntegerField(min_value=1, default=1)
    baseline_value = serializers.FloatField(default=0.0)
    target = serializers.ChoiceField(choices=_choices(IndeTarget), default=IndeTarget.PREDICTED.value)

    def validate_sample_size(self, value):
        """Fractions lie in (0, 1]; absolute sizes are integers."""
        if not value > 0:
            raise serializers.ValidationError('Sample size must be positive.')
        if value > 1 and not math.isclose(value, round(value)):
            raise serializers.ValidationError('Absolute sample sizes must be integers.')
        return value


class ExperimentSerializer(StrictSerializer):
    """
    Serializer for a whole experiment file.
    """
    rounds = serializers.IntegerField(min_value=1, default=30)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), default=lambda: [0])
    output_dir = serializers.CharField(required=False, allow_null=True, default=None)
    dataset = DatasetSerializer()
    model = ModelSerializer()
    client_optimizer = OptimizerSerializer()
    server_optimizer = OptimizerSerializer()
    strategy = StrategySerializer()
    clustering = ClusteringSerializer()
    inde = IndeSerializer(required=False, allow_null=True, default=None)

    def validate_seeds(self, value):
        if not value:
            raise serializers.ValidationError('At least one seed is required.')
        if len(set(value)) != len(value):
            raise serializers.ValidationError('Seeds must be unique.')
        return value

    def validate(self, attrs):
        """Validate settings that span several tables."""
        strategy = attrs['strategy']
        if strategy['name'] == Strategy.BCL.value and strategy['bcl']['clustering_round'] > attrs['rounds']:
            raise serializers.ValidationError(
                {'strategy': {'bcl': {'clustering_round': 'Clustering round is after the last round.'}}}
            )
        clustering = attrs['clustering']
        if clustering['algorithm'] == ClusteringAlgorithm.KMEANS.value:
            if clustering['k_hint'] > attrs['dataset']['n_clients']:
                raise serializers.ValidationError(
                    {'clustering': {'k_hint': 'k cannot exceed the number of clients.'}}
                )
        return attrs
