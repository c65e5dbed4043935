"""
Result files of a run.

Tabular outputs are CSV with a header row, structured ones JSON with sorted
keys. Floats are rendered with ``OCFL['FLOAT_FORMAT']`` so reruns are
byte-identical.
"""
import csv
import hashlib
import io
import json
import math
from pathlib import Path

from django.conf import settings

from core.exceptions import IoError

ROUND_COLUMNS = (
    't',
    'temperature',
    'fired',
    'k',
    'ri',
    'ari',
    'ami',
    'com',
    'mean_pf1',
    'mean_gf1',
    'learning_gap',
    'mean_train_loss',
)
TEMPERATURE_COLUMNS = (
    't',
    'temperature',
    'previous_temperature',
    'lambda',
    'previous_lambda',
    'fired',
)
CALIBRATION_COLUMNS = ('t', 'update_norm', 'rolling_norm')

ROUNDS_FILE = 'rounds.csv'
PARTITION_FILE = 'partition.json'
TEMPERATURE_FILE = 'temperature.csv'
MANIFEST_FILE = 'manifest.json'
CLUSTER_STATE_FILE = 'cluster_state.json'
CONFIG_FILE = 'config.json'
INDE_FILE = 'inde.json'
CALIBRATION_FILE = 'calibration.csv'
CALIBRATION_SUMMARY_FILE = 'calibration.json'
MODELS_DIR = 'models'


def seed_dir_name(seed):
    return f"seed_{seed}"


def model_file_name(cluster_id):
    return f"cluster_{cluster_id}.json"


def format_value(value):
    """CSV cell for a number, flag or missing value."""
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return format(value, settings.OCFL['FLOAT_FORMAT'])
    return str(value)


def stable(value):
    """Round floats in a JSON-able structure to the configured precision."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(format(value, settings.OCFL['FLOAT_FORMAT']))
    if isinstance(value, dict):
        return {str(key): stable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [stable(item) for item in value]
    return value


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_bytes(path, payload):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as exc:
        raise IoError(f"Cannot write {path}: {exc}", path=str(path)) from exc
    return hashlib.sha256(payload).hexdigest()


def write_json(path, payload):
    """Write ``payload`` as sorted, indented JSON and return its SHA-256."""
    text = json.dumps(stable(payload), sort_keys=True, indent=2) + '\n'
    return _write_bytes(path, text.encode('utf-8'))


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise IoError(f"Cannot read {path}: {exc}", path=str(path)) from exc


def write_csv(path, columns, rows):
    """Write ``rows`` (mappings keyed by column) and return the file's SHA-256."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(column)) for column in columns])
    return _write_bytes(path, buffer.getvalue().encode('utf-8'))


def read_csv(path):
    path = Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            return list(csv.DictReader(handle))
    except OSError as exc:
        raise IoError(f"Cannot read {path}: {exc}", path=str(path)) from exc


def round_row(record):
    """One ``rounds.csv`` row of a RoundRecord."""
    return {
        't': record.t,
        'temperature': record.temperature,
        'fired': record.fired_this_round,
        'k': record.k,
        'ri': record.scores['ri'],
        'ari': record.scores['ari'],
        'ami': record.scores['ami'],
        'com': record.scores['com'],
        'mean_pf1': record.mean_pf1,
        'mean_gf1': record.mean_gf1,
        'learning_gap': record.learning_gap,
        'mean_train_loss': record.mean_train_loss,
    }


def temperature_rows(records):
    """Monitored rounds only: those that observed a temperature."""
    rows, previous = [], None
    for record in records:
        if record.temperature is None:
            continue
        rows.append(
            {
                't': record.t,
                'temperature': record.temperature,
                'previous_temperature': previous.temperature if previous else None,
                'lambda': record.lambda_value,
                'previous_lambda': previous.lambda_value if previous else None,
                'fired': record.fired_this_round,
            }
        )
        previous = record
    return rows


def partition_payload(ground_truth, records):
    return {
        'ground_truth': ground_truth.to_dict(),
        'rounds': [
            {
                't': record.t,
                'k': record.k,
                'fired': record.fired_this_round,
                'assignment': record.partition.to_dict(),
                'clustering': record.clustering,
            }
            for record in records
        ],
        'final': records[-1].partition.to_dict() if records else None,
    }
