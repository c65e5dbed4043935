"""
Dataset export and hash-verified loading.

Every client is written to ``client_<id>.npy`` and the orchestrator test set to
``orchestrator.npy``. Each file holds one float32 row per sample:

    [split, label, x_0, ..., x_{d-1}]      split: 0 = train, 1 = local test

``manifest.json`` (keys sorted) records the seed, the plan, the DGPs, the
ground-truth partition and the SHA-256 of every data file.
"""
import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np

from apps.clustering.partition import Partition
from core.exceptions import IntegrityError, IoError, MissingRun

from .plans import ORCHESTRATOR_ID, DgpSpec, FederatedDataset, LocalDataset, SplitPlan

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = 'ocfl-dataset/1'
MANIFEST_NAME = 'manifest.json'
ORCHESTRATOR_FILE = 'orchestrator.npy'

TRAIN_SPLIT = 0
TEST_SPLIT = 1


def client_file_name(client_id):
    return f"client_{client_id:03d}.npy"


def _rows(dataset):
    def block(split, x, y):
        codes = np.full((y.shape[0], 1), split, dtype=np.float32)
        return np.hstack([codes, y.reshape(-1, 1).astype(np.float32), x.astype(np.float32)])

    return np.vstack(
        [
            block(TRAIN_SPLIT, dataset.x_train, dataset.y_train),
            block(TEST_SPLIT, dataset.x_test, dataset.y_test),
        ]
    )


def _encode(rows):
    buffer = io.BytesIO()
    np.save(buffer, rows, allow_pickle=False)
    return buffer.getvalue()


def _write(path, payload):
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise IoError(f"Cannot write {path}: {exc}", path=str(path)) from exc
    return hashlib.sha256(payload).hexdigest()


def export_manifest(fd, path):
    """
    Write per-client data files and the manifest into directory ``path``.

    Returns the manifest path. The same dataset always yields byte-identical
    files and manifest.
    """
    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"Cannot create dataset directory {out_dir}: {exc}", path=str(out_dir)) from exc

    clients = {}
    for client_id in fd.client_ids:
        dataset = fd.clients[client_id]
        name = client_file_name(client_id)
        clients[str(client_id)] = {
            'file': name,
            'sha256': _write(out_dir / name, _encode(_rows(dataset))),
            'n_train': dataset.n_train,
            'n_test': dataset.n_test,
            'cluster': fd.ground_truth[client_id],
        }

    orchestrator = fd.orchestrator_test
    manifest = {
        'format': MANIFEST_FORMAT,
        'seed': fd.seed,
        'plan': fd.plan.to_dict(),
        'n_classes': fd.n_classes,
        'feature_dim': fd.feature_dim,
        'layout': {
            'dtype': 'float32',
            'columns': ['split', 'label', f"x[0..{fd.feature_dim - 1}]"],
            'splits': {'train': TRAIN_SPLIT, 'test': TEST_SPLIT},
        },
        'dgps': [dgp.to_dict() for dgp in fd.dgps],
        'ground_truth': fd.ground_truth.to_dict(),
        'clients': clients,
        'orchestrator': {
            'file': ORCHESTRATOR_FILE,
            'sha256': _write(out_dir / ORCHESTRATOR_FILE, _encode(_rows(orchestrator))),
            'n_test': orchestrator.n_test,
        },
    }
    manifest_path = out_dir / MANIFEST_NAME
    _write(manifest_path, (json.dumps(manifest, sort_keys=True, indent=2) + '\n').encode('utf-8'))
    logger.info(
        f"Exported dataset with {len(clients)} clients to {out_dir}",
        extra={'seed': fd.seed, 'path': str(manifest_path)},
    )
    return manifest_path


def _read_verified(path, expected):
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise IoError(f"Cannot read {path}: {exc}", path=str(path)) from exc
    actual = hashlib.sha256(payload).hexdigest()
    if actual != expected:
        raise IntegrityError(
            f"Content hash of {path.name} does not match the manifest.",
            path=str(path),
            expected=expected,
            actual=actual,
        )
    return np.load(io.BytesIO(payload), allow_pickle=False)


def _dataset(client_id, rows, feature_dim):
    rows = rows.reshape(-1, feature_dim + 2)
    train = rows[:, 0] == TRAIN_SPLIT
    labels = rows[:, 1].astype(np.int64)
    return LocalDataset(
        client_id=client_id,
        x_train=rows[train, 2:],
        y_train=labels[train],
        x_test=rows[~train, 2:],
        y_test=labels[~train],
    )


def load_federated_dataset(manifest_path):
    """Load an exported dataset, verifying every file against its recorded hash."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingRun(f"Dataset manifest {manifest_path} does not exist.", path=str(manifest_path))
    manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    root = manifest_path.parent
    feature_dim = manifest['feature_dim']

    clients = {}
    for key, entry in manifest['clients'].items():
        rows = _read_verified(root / entry['file'], entry['sha256'])
        clients[int(key)] = _dataset(int(key), rows, feature_dim)

    entry = manifest['orchestrator']
    orchestrator = _dataset(
        ORCHESTRATOR_ID, _read_verified(root / entry['file'], entry['sha256']), feature_dim
    )
    return FederatedDataset(
        clients=clients,
        ground_truth=Partition.from_dict(manifest['ground_truth']),
        orchestrator_test=orchestrator,
        n_classes=manifest['n_classes'],
        feature_dim=feature_dim,
        plan=SplitPlan.from_dict(manifest['plan']),
        seed=manifest['seed'],
        dgps=tuple(DgpSpec.from_dict(d) for d in manifest['dgps']),
    )
