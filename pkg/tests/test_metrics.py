"""
Tests for partition agreement scores and classification metrics, checked
against brute-force implementations.
"""
import itertools
import math

import numpy as np
import pytest

from apps.clustering.partition import Partition
from apps.metrics.agreement import (
    ContingencyTable,
    ScoreSeries,
    adjusted_mutual_information,
    adjusted_rand_index,
    agreement_scores,
    completeness,
    rand_index,
)
from apps.metrics.classification import learning_gap, macro_f1
from core.exceptions import InvalidLabel, MismatchedClients

TOLERANCE = 1e-9


def set_partitions(n):
    """All partitions of n items as restricted growth strings."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for label in range(top + 2):
            yield from grow(prefix + [label], max(top, label))

    yield from grow([0], 0)


def _partition(labels):
    return Partition.from_labels(range(len(labels)), labels)


def _entropy(counts, n):
    return -sum(c / n * math.log(c / n) for c in counts if c)


def _table(u, v):
    table = {}
    for a, b in zip(u, v):
        table[(a, b)] = table.get((a, b), 0) + 1
    rows = [sum(1 for a in u if a == i) for i in sorted(set(u))]
    cols = [sum(1 for b in v if b == j) for j in sorted(set(v))]
    return table, rows, cols


def brute_rand(u, v):
    pairs = list(itertools.combinations(range(len(u)), 2))
    if not pairs:
        return 1.0
    agree = sum((u[i] == u[j]) == (v[i] == v[j]) for i, j in pairs)
    return agree / len(pairs)


def brute_ari(u, v):
    table, rows, cols = _table(u, v)
    n = len(u)
    if n < 2:
        return None
    index = sum(math.comb(c, 2) for c in table.values())
    sum_rows = sum(math.comb(a, 2) for a in rows)
    sum_cols = sum(math.comb(b, 2) for b in cols)
    expected = sum_rows * sum_cols / math.comb(n, 2)
    maximum = (sum_rows + sum_cols) / 2
    if maximum == expected:
        return None
    return (index - expected) / (maximum - expected)


def brute_mutual_information(u, v):
    table, rows, cols = _table(u, v)
    n = len(u)
    row_of = {label: count for label, count in zip(sorted(set(u)), rows)}
    col_of = {label: count for label, count in zip(sorted(set(v)), cols)}
    return sum(
        c / n * math.log(n * c / (row_of[a] * col_of[b])) for (a, b), c in table.items()
    )


def brute_expected_mutual_information(rows, cols, n):
    """Exhaustive sum over every cell value under the hypergeometric model."""
    total = 0.0
    for a in rows:
        for b in cols:
            for nij in range(max(1, a + b - n), min(a, b) + 1):
                probability = math.comb(b, nij) * math.comb(n - b, a - nij) / math.comb(n, a)
                total += nij / n * math.log(n * nij / (a * b)) * probability
    return total


def brute_ami(u, v):
    _, rows, cols = _table(u, v)
    n = len(u)
    mi = brute_mutual_information(u, v)
    emi = brute_expected_mutual_information(rows, cols, n)
    normaliser = (_entropy(rows, n) + _entropy(cols, n)) / 2
    if abs(normaliser - emi) < 1e-6:
        return None
    return (mi - emi) / (normaliser - emi)


def brute_completeness(u, v):
    _, _, cols = _table(u, v)
    n = len(u)
    h_pred = _entropy(cols, n)
    if h_pred == 0:
        return 1.0
    table, rows, _ = _table(u, v)
    row_of = {label: count for label, count in zip(sorted(set(u)), rows)}
    h_pred_given_true = -sum(c / n * math.log(c / row_of[a]) for (a, _), c in table.items())
    return 1.0 - h_pred_given_true / h_pred


def _all_pairs(sizes):
    for n in sizes:
        yield from itertools.product(list(set_partitions(n)), repeat=2)


def _check_against_brute_force(sizes):
    for u, v in _all_pairs(sizes):
        truth, prediction = _partition(u), _partition(v)
        assert rand_index(truth, prediction) == pytest.approx(brute_rand(u, v), abs=TOLERANCE)
        assert completeness(truth, prediction) == pytest.approx(brute_completeness(u, v), abs=TOLERANCE)
        expected = brute_ari(u, v)
        if expected is not None:
            assert adjusted_rand_index(truth, prediction) == pytest.approx(expected, abs=TOLERANCE)
        expected = brute_ami(u, v)
        if expected is not None:
            assert adjusted_mutual_information(truth, prediction) == pytest.approx(expected, abs=TOLERANCE)


@pytest.mark.unit
class TestAgainstBruteForce:

    def test_every_pair_up_to_five_clients(self):
        _check_against_brute_force(range(1, 6))

    @pytest.mark.slow
    @pytest.mark.parametrize('n', [6, 7])
    def test_every_pair_of_larger_sets(self, n):
        _check_against_brute_force([n])


@pytest.mark.unit
class TestAgreementScores:

    def test_identical_partitions(self):
        partition = _partition([0, 0, 1, 1, 2])
        scores = agreement_scores(partition, partition)
        assert scores == pytest.approx({'ri': 1.0, 'ari': 1.0, 'ami': 1.0, 'com': 1.0})

    def test_relabelling_invariance(self):
        truth = _partition([0, 0, 1, 1, 2, 2])
        assert agreement_scores(truth, _partition([2, 2, 0, 0, 1, 1]))['ari'] == pytest.approx(1.0)

    def test_single_cluster_scores(self):
        truth = _partition([0, 0, 1, 1])
        single = Partition.single(range(4))
        assert adjusted_mutual_information(truth, single) == pytest.approx(0.0)
        assert completeness(truth, single) == 1.0
        assert adjusted_mutual_information(single, Partition.single(range(4))) == 1.0

    def test_single_client(self):
        assert rand_index(Partition({0: 0}), Partition({0: 0})) == 1.0

    def test_mismatched_clients(self):
        with pytest.raises(MismatchedClients):
            rand_index(Partition({0: 0, 1: 0}), Partition({0: 0, 2: 0}))

    def test_contingency_table(self):
        table = ContingencyTable.of(_partition([0, 0, 1]), _partition([0, 1, 1]))
        assert table.counts.tolist() == [[1, 1], [0, 1]]
        assert table.row_marginals.tolist() == [2, 1]
        assert table.total == 3

    def test_null_calibration(self):
        rng = np.random.default_rng(42)
        aris, amis = [], []
        for _ in range(1000):
            k_true, k_pred = rng.integers(2, 6, size=2)
            truth = _partition(rng.integers(0, k_true, size=20))
            predicted = _partition(rng.integers(0, k_pred, size=20))
            aris.append(adjusted_rand_index(truth, predicted))
            amis.append(adjusted_mutual_information(truth, predicted))
        assert abs(np.mean(aris)) < 0.05
        assert abs(np.mean(amis)) < 0.05


@pytest.mark.unit
class TestScoreSeries:

    def test_time_average(self):
        series = ScoreSeries('ari')
        for value in (0.0, 0.5, 1.0, 1.0):
            series.append(value)
        assert series.time_average == pytest.approx(0.625)

    def test_empty_series(self):
        assert math.isnan(ScoreSeries('ami').time_average)


@pytest.mark.unit
class TestMacroF1:

    def test_perfect_predictions(self):
        assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0

    def test_absent_class_does_not_count(self):
        assert macro_f1([0, 0, 1], [0, 0, 1], 10) == 1.0

    def test_mixed_predictions(self):
        # class 0: P=1, R=0.5 -> 2/3; class 1: P=0.5, R=1 -> 2/3
        assert macro_f1([0, 1, 1], [0, 0, 1], 2) == pytest.approx(2 / 3)

    def test_invalid_label(self):
        with pytest.raises(InvalidLabel):
            macro_f1([0, 3], [0, 1], 3)

    def test_empty_input(self):
        assert math.isnan(macro_f1([], [], 3))

    def test_learning_gap(self):
        assert learning_gap(0.9, 0.6) == pytest.approx(0.3)
        assert learning_gap(0.6, 0.9) == pytest.approx(0.3)
