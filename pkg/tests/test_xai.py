"""
Tests for saliency maps and the insertion/deletion evaluation.
"""
import numpy as np
import pytest
from scipy import stats

from apps.clustering.partition import Partition
from apps.federation.state import ClusterState
from apps.model.network import MlpModel
from apps.xai.inde import (
    IndeMode,
    IndeOrdering,
    auc,
    deletion_curve,
    evaluation_set,
    insertion_curve,
    run_inde,
)
from apps.xai.saliency import SaliencyMap, saliency
from core.exceptions import DimensionMismatch, EmptyCurve, EmptyEvaluationSet, ValidationError

from .factories import IndeConfigFactory

PLANTED_DIM = 10


def planted_model():
    """Linear two-class model that only looks at feature 0."""
    model = MlpModel.zeros((PLANTED_DIM, 2))
    weights = np.zeros((PLANTED_DIM, 2))
    weights[0] = (-5.0, 5.0)
    return model.with_parameters(np.concatenate([weights.reshape(-1), np.zeros(2)]))


def planted_samples(rng, count):
    x = rng.standard_normal((count, PLANTED_DIM))
    x[:, 0] = rng.choice([-2.0, 2.0], size=count)
    return x


def _cluster_state(partition, model):
    models = {cluster_id: model.copy() for cluster_id in range(partition.k)}
    return ClusterState(partition=partition, models=models, server_states=dict.fromkeys(models), fired=True)


@pytest.mark.unit
class TestSaliency:

    def test_planted_feature_ranks_first(self, rng):
        model = planted_model()
        for x in planted_samples(rng, 20):
            target = int(model.predict(x[None, :])[0])
            sal = saliency(model, x, target)
            assert sal.ranking()[0] == 0
            assert np.all(sal.scores[1:] == 0)

    def test_ties_break_by_index(self):
        assert SaliencyMap([0.5, 1.0, 0.5, 1.0]).ranking().tolist() == [1, 3, 0, 2]

    def test_rejects_negative_scores(self):
        with pytest.raises(ValidationError):
            SaliencyMap([0.1, -0.1])

    def test_dimension_mismatch(self, small_model):
        with pytest.raises(DimensionMismatch):
            saliency(small_model, np.ones(3), 0)


@pytest.mark.unit
class TestCurves:

    def test_endpoints_share_the_full_input_probability(self, small_model, rng):
        cfg = IndeConfigFactory(step=3)
        for x in rng.standard_normal((10, 8)):
            sal = saliency(small_model, x, 2)
            deletion = deletion_curve(small_model, x, 2, sal, cfg)
            insertion = insertion_curve(small_model, x, 2, sal, cfg)
            assert deletion[0] == insertion[-1]
            assert deletion.size == insertion.size == 4

    def test_all_baseline_endpoints(self, small_model, rng):
        cfg = IndeConfigFactory()
        x = rng.standard_normal(8)
        sal = saliency(small_model, x, 1)
        baseline = small_model.forward(np.zeros((1, 8)))[0, 1]
        assert deletion_curve(small_model, x, 1, sal, cfg)[-1] == pytest.approx(baseline)
        assert insertion_curve(small_model, x, 1, sal, cfg)[0] == pytest.approx(baseline)

    def test_constant_curve_area(self):
        assert auc(np.full(5, 0.3)) == pytest.approx(0.3)
        assert auc([0.7]) == pytest.approx(0.7)

    def test_empty_curve(self):
        with pytest.raises(EmptyCurve):
            auc([])

    def test_out_of_range_curve(self):
        with pytest.raises(ValidationError):
            auc([0.2, 1.5])

    def test_uneven_final_step(self):
        cfg = IndeConfigFactory(step=3)
        assert cfg.fractions(8).tolist() == pytest.approx([0.0, 3 / 8, 6 / 8, 1.0])


@pytest.mark.unit
def test_saliency_ordering_beats_random_ordering():
    rng = np.random.default_rng(0)
    model = planted_model()
    cfg = IndeConfigFactory()
    fractions = cfg.fractions(PLANTED_DIM)
    scores = {'deletion': ([], []), 'insertion': ([], [])}
    for x in planted_samples(rng, 150):
        target = int(model.predict(x[None, :])[0])
        sal = saliency(model, x, target)
        order = rng.permutation(PLANTED_DIM)
        for name, curve in (('deletion', deletion_curve), ('insertion', insertion_curve)):
            by_saliency, by_random = scores[name]
            by_saliency.append(auc(curve(model, x, target, sal, cfg), fractions))
            by_random.append(auc(curve(model, x, target, sal, cfg, order=order), fractions))

    assert stats.wilcoxon(*scores['deletion'], alternative='less').pvalue < 0.01
    assert stats.wilcoxon(*scores['insertion'], alternative='greater').pvalue < 0.01


@pytest.mark.integration
class TestRunInde:

    def test_per_cluster_results(self, small_dataset, small_model):
        state = _cluster_state(small_dataset.ground_truth, small_model)
        result = run_inde(state, small_dataset, IndeConfigFactory(sample_size=8), seed=0)
        assert sorted(result.clusters) == [0, 1, 2]
        assert not result.errors
        for entry in result.clusters.values():
            assert entry.sample_count == 8
            assert 0.0 <= entry.insertion_auc <= 1.0
            assert 0.0 <= entry.deletion_auc <= 1.0
        payload = result.to_dict()
        assert set(payload['clusters']) == {'0', '1', '2'}

    def test_deterministic(self, small_dataset, small_model):
        state = _cluster_state(small_dataset.ground_truth, small_model)
        cfg = IndeConfigFactory(mode=IndeMode.ORCHESTRATOR, ordering=IndeOrdering.RANDOM, sample_size=5)
        first = run_inde(state, small_dataset, cfg, seed=3).to_dict()
        second = run_inde(state, small_dataset, cfg, seed=3).to_dict()
        assert first == second

    def test_sample_size_is_clamped(self, small_dataset, small_model):
        state = _cluster_state(small_dataset.ground_truth, small_model)
        result = run_inde(state, small_dataset, IndeConfigFactory(sample_size=10_000), seed=0)
        assert result.clusters[0].sample_count == 32

    def test_fractional_sample_size(self, small_dataset, small_model):
        state = _cluster_state(small_dataset.ground_truth, small_model)
        result = run_inde(state, small_dataset, IndeConfigFactory(sample_size=0.25), seed=0)
        assert result.clusters[0].sample_count == 8

    def test_out_of_distribution_of_a_single_cluster(self, small_dataset, small_model):
        state = _cluster_state(Partition.single(small_dataset.client_ids), small_model)
        cfg = IndeConfigFactory(mode=IndeMode.OUT_OF_DISTRIBUTION)
        with pytest.raises(EmptyEvaluationSet):
            run_inde(state, small_dataset, cfg, seed=0)

    def test_evaluation_sets(self, small_dataset):
        members = small_dataset.ground_truth.members(0)
        x_in, _ = evaluation_set(IndeMode.IN_DISTRIBUTION, small_dataset, members)
        x_out, _ = evaluation_set(IndeMode.OUT_OF_DISTRIBUTION, small_dataset, members)
        x_orc, _ = evaluation_set(IndeMode.ORCHESTRATOR, small_dataset, members)
        assert x_in.shape[0] == 32
        assert x_out.shape[0] == 64
        assert x_orc.shape[0] == 90
