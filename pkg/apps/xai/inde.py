"""
Insertion/deletion evaluation of saliency maps for clustered models.

Curves record the target-class probability while the most salient features
are removed from the input (deletion) or restored onto a baseline vector
(insertion), ``step`` features at a time.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import trapezoid

from core.exceptions import (
    DimensionMismatch,
    EmptyCurve,
    EmptyEvaluationSet,
    ValidationError,
    error_payload,
)
from core.instrumentation import log_stage
from core.seeding import Stream, generator

from .saliency import saliency

logger = logging.getLogger(__name__)


class IndeMode(str, Enum):
    IN_DISTRIBUTION = 'InDistribution'
    OUT_OF_DISTRIBUTION = 'OutOfDistribution'
    ORCHESTRATOR = 'Orchestrator'


class IndeOrdering(str, Enum):
    SALIENCY = 'Saliency'
    RANDOM = 'Random'


class IndeTarget(str, Enum):
    PREDICTED = 'Predicted'
    LABEL = 'Label'


# XAI stream keys
MODE_KEYS = {
    IndeMode.IN_DISTRIBUTION: 0,
    IndeMode.OUT_OF_DISTRIBUTION: 1,
    IndeMode.ORCHESTRATOR: 2,
}


@dataclass(frozen=True)
class IndeConfig:
    """
    ``sample_size`` above 1 is an absolute count; a value in (0, 1] is a
    fraction of the evaluation set.
    """

    mode: IndeMode = IndeMode.IN_DISTRIBUTION
    sample_size: float = 64
    step: int = 1
    baseline_value: float = 0.0
    ordering: IndeOrdering = IndeOrdering.SALIENCY
    target: IndeTarget = IndeTarget.PREDICTED

    def __post_init__(self):
        object.__setattr__(self, 'mode', IndeMode(self.mode))
        object.__setattr__(self, 'ordering', IndeOrdering(self.ordering))
        object.__setattr__(self, 'target', IndeTarget(self.target))
        if not self.sample_size > 0:
            raise ValidationError(f"Sample size must be positive, got {self.sample_size}.")
        if self.sample_size > 1 and self.sample_size != int(self.sample_size):
            raise ValidationError(f"Absolute sample sizes must be integers, got {self.sample_size}.")
        if self.step < 1:
            raise ValidationError(f"Step must be a positive integer, got {self.step}.")

    def steps(self, d):
        return math.ceil(d / self.step)

    def fractions(self, d):
        """Fraction of features toggled at each curve point."""
        return np.minimum(np.arange(self.steps(d) + 1) * self.step, d) / d

    def requested_samples(self, available):
        if self.sample_size <= 1:
            return max(1, math.ceil(self.sample_size * available))
        return int(self.sample_size)


def _check_inputs(m, x, sal):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != m.input_dim or sal.dim != x.size:
        raise DimensionMismatch(
            f"Input ({x.size}), saliency ({sal.dim}) and model ({m.input_dim}) dimensions differ."
        )
    return x


def _toggled_rows(x, order, cfg, insert):
    d = x.size
    rows = np.empty((cfg.steps(d) + 1, d))
    for j in range(rows.shape[0]):
        top = order[: min(j * cfg.step, d)]
        if insert:
            row = np.full(d, cfg.baseline_value, dtype=np.float64)
            row[top] = x[top]
        else:
            row = x.copy()
            row[top] = cfg.baseline_value
        rows[j] = row
    return rows


def _probability(m, rows, y):
    return m.forward(rows)[:, int(y)]


def deletion_curve(m, x, y, sal, cfg, order=None):
    """
    ``P(y | x)`` followed by the probability after each deletion step; the
    curve has ``ceil(d / step) + 1`` points.
    """
    x = _check_inputs(m, x, sal)
    order = sal.ranking() if order is None else np.asarray(order)
    rows = _toggled_rows(x, order, cfg, insert=False)
    curve = np.empty(rows.shape[0])
    curve[0] = _probability(m, x[None, :], y)[0]
    curve[1:] = _probability(m, rows[1:], y)
    return curve


def insertion_curve(m, x, y, sal, cfg, order=None):
    """Probability on the baseline vector, then after each insertion step, ending at ``P(y | x)``."""
    x = _check_inputs(m, x, sal)
    order = sal.ranking() if order is None else np.asarray(order)
    rows = _toggled_rows(x, order, cfg, insert=True)
    curve = np.empty(rows.shape[0])
    curve[:-1] = _probability(m, rows[:-1], y)
    curve[-1] = _probability(m, x[None, :], y)[0]
    return curve


def auc(curve, fractions=None):
    """Trapezoidal area over the fraction-of-features axis [0, 1]."""
    curve = np.asarray(curve, dtype=np.float64).reshape(-1)
    if curve.size == 0:
        raise EmptyCurve('Cannot integrate an empty curve.')
    if np.any(curve < -1e-12) or np.any(curve > 1 + 1e-12):
        raise ValidationError('Curve values must lie in [0, 1].')
    if curve.size == 1:
        return float(curve[0])
    axis = np.linspace(0.0, 1.0, curve.size) if fractions is None else np.asarray(fractions)
    if axis.shape != curve.shape:
        raise DimensionMismatch('Curve and fraction axis differ in length.')
    return float(trapezoid(curve, axis))


@dataclass
class ClusterInde:
    cluster_id: int
    sample_count: int
    insertion_auc: float
    deletion_auc: float
    insertion_aucs: list = field(default_factory=list)
    deletion_aucs: list = field(default_factory=list)

    def to_dict(self):
        return {
            'cluster': self.cluster_id,
            'sample_count': self.sample_count,
            'insertion_auc': self.insertion_auc,
            'deletion_auc': self.deletion_auc,
            'insertion_aucs': list(self.insertion_aucs),
            'deletion_aucs': list(self.deletion_aucs),
        }


@dataclass
class IndeResult:
    """Per-cluster AUCs of one mode and ordering; failed clusters land in ``errors``."""

    mode: IndeMode
    ordering: IndeOrdering
    clusters: dict
    errors: dict = field(default_factory=dict)

    @property
    def mean_insertion_auc(self):
        return float(np.mean([c.insertion_auc for c in self.clusters.values()]))

    @property
    def mean_deletion_auc(self):
        return float(np.mean([c.deletion_auc for c in self.clusters.values()]))

    def to_dict(self):
        return {
            'mode': self.mode.value,
            'ordering': self.ordering.value,
            'clusters': {str(k): v.to_dict() for k, v in sorted(self.clusters.items())},
            'errors': {str(k): v for k, v in sorted(self.errors.items())},
            'mean_insertion_auc': self.mean_insertion_auc,
            'mean_deletion_auc': self.mean_deletion_auc,
        }


def evaluation_set(mode, fd, members):
    """Test data a cluster's model is evaluated on under ``mode``."""
    if mode is IndeMode.IN_DISTRIBUTION:
        return fd.test_union(members)
    if mode is IndeMode.OUT_OF_DISTRIBUTION:
        return fd.test_union([c for c in fd.client_ids if c not in set(members)])
    return fd.orchestrator_test.x_test, fd.orchestrator_test.y_test


def _evaluate_cluster(model, cluster_id, members, fd, cfg, seed):
    x, y = evaluation_set(cfg.mode, fd, members)
    available = int(y.shape[0])
    if available == 0:
        raise EmptyEvaluationSet(
            f"No {cfg.mode.value} evaluation data for cluster {cluster_id}.",
            cluster=cluster_id,
            mode=cfg.mode.value,
        )
    size = cfg.requested_samples(available)
    if size > available:
        logger.warning(
            f"Cluster {cluster_id}: sample size {size} exceeds {available} available points - Clamped",
            extra={'cluster': cluster_id, 'mode': cfg.mode.value},
        )
        size = available

    rng = generator(seed, Stream.XAI, MODE_KEYS[cfg.mode], cluster_id)
    picks = np.sort(rng.choice(available, size=size, replace=False))
    fractions = cfg.fractions(model.input_dim)

    deletions, insertions = [], []
    for index in picks:
        sample = np.asarray(x[index], dtype=np.float64)
        target = model.predict(sample[None, :])[0] if cfg.target is IndeTarget.PREDICTED else y[index]
        sal = saliency(model, sample, target)
        order = sal.ranking() if cfg.ordering is IndeOrdering.SALIENCY else rng.permutation(sal.dim)
        deletions.append(deletion_curve(model, sample, target, sal, cfg, order=order))
        insertions.append(insertion_curve(model, sample, target, sal, cfg, order=order))

    return ClusterInde(
        cluster_id=cluster_id,
        sample_count=size,
        insertion_auc=auc(np.mean(insertions, axis=0), fractions),
        deletion_auc=auc(np.mean(deletions, axis=0), fractions),
        insertion_aucs=[auc(c, fractions) for c in insertions],
        deletion_aucs=[auc(c, fractions) for c in deletions],
    )


def run_inde(cluster_states, fd, cfg, seed):
    """
    Evaluate every cluster model on its ``cfg.mode`` data. Curves are averaged
    over the sampled points before the per-cluster AUC is taken.

    A cluster without evaluation data is reported in ``errors``; the run fails
    only when no cluster can be evaluated.
    """
    clusters, errors = {}, {}
    for cluster_id, members in cluster_states.partition.clusters().items():
        try:
            with log_stage('inde evaluation', level=logging.DEBUG, mode=cfg.mode.value, cluster=cluster_id):
                clusters[cluster_id] = _evaluate_cluster(
                    cluster_states.models[cluster_id], cluster_id, members, fd, cfg, seed
                )
        except EmptyEvaluationSet as exc:
            errors[cluster_id] = error_payload(exc, {'cluster': cluster_id})['error']

    if not clusters:
        raise EmptyEvaluationSet(
            f"No cluster has {cfg.mode.value} evaluation data.", mode=cfg.mode.value
        )
    return IndeResult(mode=cfg.mode, ordering=cfg.ordering, clusters=clusters, errors=errors)
