"""
Tests for parameter vectors, divergence matrices and the clustering temperature.
"""
import math

import numpy as np
import pytest

from apps.numkit.divergence import DivergenceMatrix, divergence_matrix
from apps.numkit.temperature import (
    LambdaMode,
    TemperatureState,
    matrix_p_norm,
    max_divergence_constant,
    temperature,
    update_and_test_trigger,
)
from apps.numkit.vectors import ParameterVector, cosine_distance, cosine_similarity
from core.exceptions import (
    AlreadyFired,
    DimensionMismatch,
    InvalidNorm,
    NonFiniteValues,
    ValidationError,
    ZeroVector,
)


def _matrix(entries):
    return DivergenceMatrix(np.asarray(entries, dtype=np.float64))


@pytest.mark.unit
class TestParameterVector:

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(DimensionMismatch):
            ParameterVector([])
        with pytest.raises(NonFiniteValues):
            ParameterVector([1.0, np.nan])

    def test_arithmetic_checks_dimensions(self):
        a = ParameterVector([1.0, 2.0])
        assert (a + [1.0, 1.0]) == ParameterVector([2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            a - [1.0, 2.0, 3.0]

    def test_values_are_read_only(self):
        vector = ParameterVector([1.0, 2.0])
        with pytest.raises(ValueError):
            vector.values[0] = 5.0


@pytest.mark.unit
class TestCosine:

    def test_examples(self):
        assert cosine_distance([1, 0], [1, 0]) == 0.0
        assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
        assert cosine_distance([1, 0], [-1, 0]) == pytest.approx(2.0)

    def test_zero_vector_carries_index(self):
        with pytest.raises(ZeroVector) as excinfo:
            cosine_similarity([1.0, 2.0], [0.0, 0.0])
        assert excinfo.value.index == 1

    def test_scale_invariance(self, rng):
        for _ in range(50):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            scale = rng.uniform(0.1, 10.0)
            assert cosine_similarity(a * scale, b) == pytest.approx(cosine_similarity(a, b), abs=1e-12)
            assert -1.0 <= cosine_similarity(a, b) <= 1.0


@pytest.mark.unit
class TestDivergenceMatrix:

    def test_invariants_on_fuzzed_inputs(self, rng):
        for _ in range(100):
            n, d = rng.integers(2, 9), rng.integers(1, 12)
            gamma = divergence_matrix(list(rng.standard_normal((n, d))))
            entries = gamma.entries
            assert np.array_equal(entries, entries.T)
            assert np.all(np.diag(entries) == 0)
            assert entries.min() >= 0 and entries.max() <= 2

    def test_identical_and_antipodal(self):
        gamma = divergence_matrix([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]])
        assert gamma.entries[0, 1] == 0.0
        assert gamma.entries[0, 2] == pytest.approx(2.0)

    def test_zero_delta_reports_client_index(self):
        with pytest.raises(ZeroVector) as excinfo:
            divergence_matrix([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        assert excinfo.value.index == 1

    def test_needs_two_vectors(self):
        with pytest.raises(ValidationError):
            divergence_matrix([[1.0, 2.0]])

    def test_mixed_dimensions(self):
        with pytest.raises(DimensionMismatch):
            divergence_matrix([[1.0, 2.0], [1.0, 2.0, 3.0]])

    def test_rejects_asymmetric_entries(self):
        with pytest.raises(ValidationError):
            _matrix([[0.0, 1.0], [0.5, 0.0]])

    def test_submatrix(self):
        gamma = divergence_matrix([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        sub = gamma.submatrix([0, 2])
        assert sub.n == 2
        assert sub.entries[0, 1] == pytest.approx(2.0)


@pytest.mark.unit
class TestTemperature:

    def test_maximal_divergence_constant(self):
        assert max_divergence_constant(2, p=2.0) == pytest.approx(math.sqrt(8.0))
        with pytest.raises(InvalidNorm):
            max_divergence_constant(3, p=0.5)

    def test_constant_bounds_norm_on_fuzzed_matrices(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 10))
            p = float(rng.uniform(1.0, 4.0))
            upper = np.triu(rng.uniform(0.0, 2.0, size=(n, n)), k=1)
            gamma = DivergenceMatrix(upper + upper.T)
            assert matrix_p_norm(gamma, p) <= max_divergence_constant(n, p) + 1e-12
            assert 0.0 <= temperature(gamma, p) <= 1.0

    def test_extreme_matrices(self):
        zero = _matrix(np.zeros((3, 3)))
        full = _matrix(2.0 * (1 - np.eye(2)))
        assert temperature(zero) == 0.0
        assert temperature(full) == pytest.approx(1.0)

    def test_both_lambda_modes_agree(self):
        gamma = _matrix([[0.0, 0.5], [0.5, 0.0]])
        assert temperature(gamma, lambda_mode=LambdaMode.NORMALISING) == temperature(gamma)


@pytest.mark.unit
class TestTrigger:

    @staticmethod
    def _gamma(value, n=3):
        return _matrix(value * (1 - np.eye(n)))

    def test_first_observation_never_fires(self):
        state = TemperatureState()
        assert update_and_test_trigger(state, self._gamma(0.0)) is False

    def test_fires_when_temperature_stops_decreasing(self):
        state = TemperatureState()
        assert update_and_test_trigger(state, self._gamma(1.5)) is False
        assert update_and_test_trigger(state, self._gamma(1.0)) is False
        assert update_and_test_trigger(state, self._gamma(1.0)) is True
        assert state.fired

    def test_strictly_decreasing_sequence_never_fires(self):
        state = TemperatureState()
        for value in (1.8, 1.4, 1.0, 0.6, 0.2):
            assert update_and_test_trigger(state, self._gamma(value)) is False

    def test_raises_after_firing(self):
        state = TemperatureState()
        update_and_test_trigger(state, self._gamma(0.5))
        update_and_test_trigger(state, self._gamma(0.9))
        with pytest.raises(AlreadyFired):
            update_and_test_trigger(state, self._gamma(0.1))

    def test_moving_average_window(self):
        state = TemperatureState(window=2)
        values = (1.8, 1.6, 1.0, 0.8, 0.9, 1.2)
        fired = [update_and_test_trigger(state, self._gamma(v)) for v in values]
        assert fired == [False, False, False, False, False, True]

    def test_invalid_window(self):
        with pytest.raises(ValidationError):
            TemperatureState(window=0)
