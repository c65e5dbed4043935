"""
Feed-forward classifier with hand-written backpropagation.

Parameters flatten layer by layer, weights (row-major, shape in x out)
followed by biases.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp, softmax

from apps.numkit.vectors import ParameterVector
from core.exceptions import DimensionMismatch, InvalidLabel, ValidationError


class Activation(str, Enum):
    RELU = 'relu'
    TANH = 'tanh'


def _activate(z, activation):
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_derivative(z, a, activation):
    if activation is Activation.RELU:
        return (z > 0).astype(np.float64)
    return 1.0 - a * a


@dataclass(eq=False)
class MlpModel:
    """
    Multilayer perceptron ``d -> hidden... -> k`` ending in a softmax.

    ``layer_dims`` includes the input dimension and the class count, so
    ``(d, k)`` is a single linear layer.
    """

    layer_dims: tuple
    activation: Activation
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.activation = Activation(self.activation)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValidationError(f"Invalid layer dimensions {self.layer_dims}.")
        expected = list(zip(self.layer_dims[:-1], self.layer_dims[1:]))
        if [w.shape for w in self.weights] != expected:
            raise DimensionMismatch(f"Weight shapes do not match layer dimensions {self.layer_dims}.")
        if [b.shape for b in self.biases] != [(out,) for _, out in expected]:
            raise DimensionMismatch(f"Bias shapes do not match layer dimensions {self.layer_dims}.")

    @classmethod
    def initialise(cls, layer_dims, activation=Activation.RELU, rng=None):
        """He-style uniform weights, zero biases."""
        rng = rng if rng is not None else np.random.default_rng()
        dims = tuple(int(d) for d in layer_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, activation, weights, biases)

    @classmethod
    def zeros(cls, layer_dims, activation=Activation.RELU):
        dims = tuple(int(d) for d in layer_dims)
        weights = [np.zeros((i, o)) for i, o in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(o) for o in dims[1:]]
        return cls(dims, activation, weights, biases)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def n_classes(self):
        return self.layer_dims[-1]

    @property
    def parameter_count(self):
        return sum(i * o + o for i, o in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def flatten(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return ParameterVector(np.concatenate(parts))

    def with_parameters(self, vector):
        """Return a model of the same architecture holding ``vector``."""
        values = ParameterVector.of(vector).values
        if values.size != self.parameter_count:
            raise DimensionMismatch(
                f"Expected {self.parameter_count} parameters, got {values.size}.",
                expected=self.parameter_count,
                actual=int(values.size),
            )
        values = values.copy()
        weights, biases, offset = [], [], 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            weights.append(values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            biases.append(values[offset:offset + fan_out])
            offset += fan_out
        return MlpModel(self.layer_dims, self.activation, weights, biases)

    def copy(self):
        return self.with_parameters(self.flatten())

    def _check_batch(self, batch):
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"Batch has {batch.shape[-1]} columns, model expects {self.input_dim}.",
                expected=self.input_dim,
                actual=int(batch.shape[-1]),
            )
        return batch

    def _check_labels(self, labels, size):
        labels = np.asarray(labels)
        if labels.shape != (size,):
            raise DimensionMismatch(f"Expected {size} labels, got shape {labels.shape}.")
        if labels.size and (
            not np.all(np.equal(np.mod(labels, 1), 0))
            or labels.min() < 0
            or labels.max() >= self.n_classes
        ):
            raise InvalidLabel(f"Labels must be integers in [0, {self.n_classes}).")
        return labels.astype(np.int64)

    def _forward_pass(self, batch):
        pre, post = [], [batch]
        a = batch
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = z if index == last else _activate(z, self.activation)
            post.append(a)
        return pre, post

    def logits(self, batch):
        batch = self._check_batch(batch)
        return self._forward_pass(batch)[1][-1]

    def forward(self, batch):
        """Class probabilities, one softmax row per sample."""
        return softmax(self.logits(batch), axis=1)

    def predict(self, batch):
        return np.argmax(self.logits(batch), axis=1)

    def _backward(self, pre, post, upstream):
        """Propagate d(objective)/d(logits) back through the network."""
        grads_w, grads_b = [None] * len(self.weights), [None] * len(self.weights)
        dz = upstream
        for index in range(len(self.weights) - 1, -1, -1):
            grads_w[index] = post[index].T @ dz
            grads_b[index] = dz.sum(axis=0)
            da = dz @ self.weights[index].T
            if index > 0:
                dz = da * _activation_derivative(pre[index - 1], post[index], self.activation)
        return grads_w, grads_b, da

    def loss_and_gradient(self, batch, labels):
        """Mean cross-entropy and its gradient w.r.t. the flattened parameters."""
        batch = self._check_batch(batch)
        labels = self._check_labels(labels, batch.shape[0])
        size = batch.shape[0]
        pre, post = self._forward_pass(batch)
        logits = post[-1]

        log_norm = logsumexp(logits, axis=1)
        loss = float(np.mean(log_norm - logits[np.arange(size), labels]))

        upstream = np.exp(logits - log_norm[:, None])
        upstream[np.arange(size), labels] -= 1.0
        upstream /= size
        grads_w, grads_b, _ = self._backward(pre, post, upstream)

        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.reshape(-1))
            parts.append(gb)
        return loss, ParameterVector(np.concatenate(parts))

    def logit_input_gradient(self, x, target):
        """Gradient of the target logit with respect to a single input vector."""
        batch = self._check_batch(x)
        if batch.shape[0] != 1:
            raise DimensionMismatch('Input gradients are computed for one sample at a time.')
        self._check_labels([target], 1)
        pre, post = self._forward_pass(batch)
        upstream = np.zeros((1, self.n_classes))
        upstream[0, int(target)] = 1.0
        _, _, input_gradient = self._backward(pre, post, upstream)
        return input_gradient[0]


def forward(m, batch):
    return m.forward(batch)


def loss_and_gradient(m, batch, labels):
    return m.loss_and_gradient(batch, labels)


@dataclass(frozen=True)
class ModelConfig:
    """Hidden layer widths and activation; input and output sizes come from the data."""

    hidden: tuple = (64,)
    activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, 'hidden', tuple(int(h) for h in self.hidden))
        object.__setattr__(self, 'activation', Activation(self.activation))
        if any(h < 1 for h in self.hidden):
            raise ValidationError(f"Hidden layer widths must be positive, got {self.hidden}.")

    def layer_dims(self, input_dim, n_classes):
        return (int(input_dim), *self.hidden, int(n_classes))

    def build(self, input_dim, n_classes, rng):
        return MlpModel.initialise(self.layer_dims(input_dim, n_classes), self.activation, rng)
