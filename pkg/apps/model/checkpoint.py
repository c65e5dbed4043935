"""
Model checkpoints.

Layout (JSON, keys sorted):
    format       "ocfl-mlp/1"
    layer_dims   [d, hidden..., k]
    activation   "relu" | "tanh"
    parameters   flattened parameters, per layer row-major weights then biases
"""
import json
from pathlib import Path

import numpy as np

from core.exceptions import IoError, MissingCheckpoint, ValidationError

from .network import MlpModel

CHECKPOINT_FORMAT = 'ocfl-mlp/1'


def model_to_dict(m):
    return {
        'format': CHECKPOINT_FORMAT,
        'layer_dims': list(m.layer_dims),
        'activation': m.activation.value,
        'parameters': m.flatten().values.tolist(),
    }


def model_from_dict(payload):
    if payload.get('format') != CHECKPOINT_FORMAT:
        raise ValidationError(f"Unsupported checkpoint format {payload.get('format')!r}.")
    template = MlpModel.zeros(payload['layer_dims'], payload['activation'])
    return template.with_parameters(np.asarray(payload['parameters'], dtype=np.float64))


def save_model(m, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(model_to_dict(m), sort_keys=True), encoding='utf-8')
    except OSError as exc:
        raise IoError(f"Cannot write checkpoint {path}: {exc}", path=str(path)) from exc
    return path


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"Checkpoint {path} does not exist.", path=str(path))
    return model_from_dict(json.loads(path.read_text(encoding='utf-8')))
