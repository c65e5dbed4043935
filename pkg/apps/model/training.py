"""
Local client training and FedOpt aggregation.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from apps.numkit.vectors import ParameterVector
from core.exceptions import DimensionMismatch, EmptyDataset, ValidationError

from .optim import SERVER_SGD, OptimizerKind, build_optimizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModelDelta:
    """Pseudo-gradient of one client: parameters after local training minus before."""

    client_id: int
    delta: ParameterVector
    sample_count: int
    train_loss: float = math.nan

    @property
    def is_zero(self):
        return self.delta.norm == 0


def client_local_train(m, data, opt, seed):
    """
    Run K local epochs of seeded mini-batch steps starting from ``m``.

    The caller's model is left untouched. The final batch of an epoch may be
    partial. Deterministic for a fixed (model, data, opt, seed).
    """
    x, y = np.asarray(data.x_train, dtype=np.float64), np.asarray(data.y_train)
    size = x.shape[0]
    if size == 0:
        raise EmptyDataset(f"Client {data.client_id} has no training samples.", client_id=data.client_id)

    rng = np.random.default_rng(seed)
    start = m.flatten()
    params = start.values.copy()
    optimizer = build_optimizer(opt, params.size)
    losses = []

    for _ in range(opt.local_epochs):
        order = rng.permutation(size)
        for offset in range(0, size, opt.batch_size):
            batch = order[offset:offset + opt.batch_size]
            loss, grad = m.with_parameters(params).loss_and_gradient(x[batch], y[batch])
            params = optimizer.step(params, grad.values)
            losses.append(loss)

    logger.debug(
        f"Client {data.client_id} trained on {size} samples - Mean loss: {np.mean(losses):.6f}",
        extra={'client_id': data.client_id, 'sample_count': size},
    )
    return ModelDelta(
        client_id=data.client_id,
        delta=ParameterVector(params - start.values),
        sample_count=size,
        train_loss=float(np.mean(losses)),
    )


def mean_delta(deltas):
    """Uniform mean of the deltas, summed in client-id order."""
    if not deltas:
        raise ValidationError('At least one delta is required for aggregation.')
    ordered = sorted(deltas, key=lambda d: d.client_id)
    dims = {d.delta.dim for d in ordered}
    if len(dims) > 1:
        raise DimensionMismatch(f"Deltas have different dimensions: {sorted(dims)}.")
    return np.vstack([d.delta.values for d in ordered]).mean(axis=0)


def fedopt_aggregate(current, deltas, server_opt=SERVER_SGD, state=None):
    """
    Apply one server step with the uniform mean of client deltas as the
    pseudo-gradient. SGD with learning rate 1 reduces to FedAvg of the
    client end-states; Adam needs a ``ServerOptimizerState``.
    """
    current = ParameterVector.of(current)
    pseudo_gradient = mean_delta(deltas)
    if pseudo_gradient.size != current.dim:
        raise DimensionMismatch(
            f"Delta dimension {pseudo_gradient.size} does not match model dimension {current.dim}."
        )

    if server_opt.kind is OptimizerKind.ADAM:
        if state is None:
            raise ValidationError('Adaptive server optimization requires an optimizer state.')
        return ParameterVector(state.apply(server_opt, current.values, pseudo_gradient))
    return ParameterVector(current.values + server_opt.learning_rate * pseudo_gradient)


