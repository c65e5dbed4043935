"""
Threshold calibration for the bipartitioning baseline.

A central model trained on the pooled client data stands in for the
federation: its per-round update norm tells how large a stalled cluster's
mean update is, and the round where the norm settles suggests the cooldown.
"""
import logging
from dataclasses import dataclass

import numpy as np

from apps.datagen.plans import LocalDataset
from apps.model.training import client_local_train
from core.exceptions import ValidationError
from core.instrumentation import log_stage
from core.seeding import Stream, generator, int_seed

from .state import SclConfig

logger = logging.getLogger(__name__)

POOLED_CLIENT_ID = -1


@dataclass(frozen=True)
class SclCalibration:
    """Update-norm trace of a central run and the SCL settings derived from it."""

    seed: int
    update_norms: tuple
    rolling_norms: tuple
    epsilon1: float
    epsilon2: float
    cooldown: int

    def scl_config(self):
        return SclConfig(epsilon1=self.epsilon1, epsilon2=self.epsilon2, cooldown=self.cooldown)

    def rows(self):
        return [
            {'t': t, 'update_norm': norm, 'rolling_norm': rolling}
            for t, (norm, rolling) in enumerate(zip(self.update_norms, self.rolling_norms), start=1)
        ]

    def to_dict(self):
        return {
            'seed': self.seed,
            'rounds': len(self.update_norms),
            'max_update_norm': max(self.update_norms),
            'scl': {'epsilon1': self.epsilon1, 'epsilon2': self.epsilon2, 'cooldown': self.cooldown},
        }


def pooled_dataset(fd):
    """Every client's training data in one dataset, in client-id order."""
    chosen = [fd.clients[c] for c in fd.client_ids]
    return LocalDataset(
        client_id=POOLED_CLIENT_ID,
        x_train=np.concatenate([d.x_train for d in chosen]),
        y_train=np.concatenate([d.y_train for d in chosen]),
        x_test=np.empty((0, fd.feature_dim), dtype=np.float32),
        y_test=np.empty(0, dtype=np.int64),
    )


def rolling_mean(values, window):
    """Mean of each value and up to ``window - 1`` predecessors."""
    values = np.asarray(values, dtype=np.float64)
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    ends = np.arange(1, values.size + 1)
    starts = np.maximum(ends - window, 0)
    return (cumulative[ends] - cumulative[starts]) / (ends - starts)


def convergence_round(rolling, window, tolerance):
    """
    First round ``t >= window`` whose rolling norm moved by at most
    ``tolerance`` relative to round ``t - 1``; the last round otherwise.
    """
    for t in range(max(window, 2), len(rolling) + 1):
        previous, current = rolling[t - 2], rolling[t - 1]
        if abs(current - previous) <= tolerance * previous:
            return t
    return len(rolling)


def calibrate_scl(fd, model_cfg, opt_cfg, rounds, seed, window=5, tolerance=0.05, epsilon2_factor=3.0):
    """
    Train centrally for ``rounds`` rounds of ``K`` local epochs each and
    suggest ``epsilon1 = max norm / 10``, ``epsilon2 = epsilon2_factor *
    epsilon1`` and the convergence round as cooldown.
    """
    if rounds < 2:
        raise ValidationError(f"Calibration needs at least two rounds, got {rounds}.", rounds=rounds)
    if window < 1:
        raise ValidationError(f"Rolling window must be at least 1, got {window}.", window=window)
    if tolerance < 0:
        raise ValidationError('Convergence tolerance must be non-negative.', tolerance=tolerance)
    if not 1.0 <= epsilon2_factor <= 10.0:
        raise ValidationError(
            f"epsilon2 factor must lie in [1, 10], got {epsilon2_factor}.",
            epsilon2_factor=epsilon2_factor,
        )

    data = pooled_dataset(fd)
    model = model_cfg.build(fd.feature_dim, fd.n_classes, generator(seed, Stream.MODEL_INIT))
    norms = []
    with log_stage('scl calibration', seed=seed, rounds=rounds, samples=data.n_train):
        for t in range(1, rounds + 1):
            step = client_local_train(model, data, opt_cfg, int_seed(seed, Stream.CALIBRATION, t))
            norms.append(step.delta.norm)
            model = model.with_parameters(model.flatten() + step.delta)

    rolling = rolling_mean(norms, window)
    epsilon1 = max(norms) / 10.0
    result = SclCalibration(
        seed=int(seed),
        update_norms=tuple(norms),
        rolling_norms=tuple(float(v) for v in rolling),
        epsilon1=epsilon1,
        epsilon2=epsilon2_factor * epsilon1,
        cooldown=convergence_round(rolling, window, tolerance),
    )
    logger.info(
        f"Calibrated SCL - epsilon1={result.epsilon1:.4f} epsilon2={result.epsilon2:.4f} "
        f"cooldown={result.cooldown}",
        extra={'seed': seed, 'rounds': rounds},
    )
    return result
