"""
Shared fixtures.
"""
import numpy as np
import pytest

from apps.datagen.generator import build_dgps, sample_federated_dataset
from apps.model.network import MlpModel

from .factories import SplitPlanFactory


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_plan():
    return SplitPlanFactory()


@pytest.fixture
def small_dataset(small_plan):
    """Six clients, three clusters, six classes, eight features."""
    dgps = build_dgps(small_plan, global_classes=6, feature_dim=8, seed=7)
    return sample_federated_dataset(dgps, small_plan, seed=7, n_classes=6)


@pytest.fixture
def small_model(rng):
    return MlpModel.initialise((8, 16, 6), rng=rng)


@pytest.fixture
def output_dir(tmp_path, settings):
    settings.OCFL = {**settings.OCFL, 'OUTPUT_DIR': tmp_path / 'runs', 'CLIENT_WORKERS': 1}
    return tmp_path / 'runs'
