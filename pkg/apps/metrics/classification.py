"""
Macro-F1 and the learning gap.
"""
import numpy as np
from sklearn.metrics import f1_score

from core.exceptions import InvalidLabel, ValidationError


def _check_labels(values, k, role):
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() >= k):
        raise InvalidLabel(f"{role} must lie in [0, {k}).", k=k)
    return values.astype(np.int64)


def macro_f1(predictions, labels, k):
    """
    Unweighted mean of per-class F1 over the classes present in either the
    predictions or the labels. A class with zero precision and recall counts 0.
    """
    predictions = _check_labels(predictions, k, 'Predictions')
    labels = _check_labels(labels, k, 'Labels')
    if predictions.shape != labels.shape:
        raise ValidationError('Predictions and labels differ in length.')
    if labels.size == 0:
        return float('nan')
    present = np.union1d(predictions, labels)
    return float(f1_score(labels, predictions, labels=present, average='macro', zero_division=0))


def learning_gap(local_score, orchestrator_score):
    """``|local - orchestrator|``."""
    return abs(float(local_score) - float(orchestrator_score))
