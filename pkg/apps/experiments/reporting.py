"""
Cross-run summaries.

Every value in ``summary.csv`` is recomputed from the per-seed ``rounds.csv``
files, so a report never depends on state a run did not persist.
"""
import logging
import math
from pathlib import Path

import numpy as np

from apps.metrics.agreement import ScoreSeries
from core.exceptions import MissingRun, ValidationError

from .persistence import ROUNDS_FILE, read_csv, write_csv

logger = logging.getLogger(__name__)

SCORE_NAMES = ('ri', 'ari', 'ami', 'com')

METRIC_COLUMNS = (
    'rounds',
    'fired_round',
    'last_fired_round',
    'fired_count',
    'final_k',
    'final_ri',
    'final_ari',
    'final_ami',
    'final_com',
    'avg_ri',
    'avg_ari',
    'avg_ami',
    'avg_com',
    'mean_pf1',
    'mean_gf1',
    'learning_gap',
    'mean_train_loss',
)
SUMMARY_COLUMNS = ('run', 'seed') + METRIC_COLUMNS
SUMMARY_FILE = 'summary.csv'


def _number(value):
    if value is None or value == '':
        return None
    return float(value)


def summarize_rounds(rows):
    """
    Headline metrics of one seed from its ``rounds.csv`` rows (strings or
    numbers): first and last clustering round, final scores, time-averaged
    agreement scores and the final-round F1 figures.

    OCFL clusters at most once; the bipartition baseline may split many times
    and is reported by its last clustering round.
    """
    if not rows:
        raise ValidationError('A seed summary needs at least one round.')
    series = {name: ScoreSeries(name) for name in SCORE_NAMES}
    fired = []
    for row in rows:
        for name in SCORE_NAMES:
            series[name].append(_number(row[name]))
        if _number(row['fired']):
            fired.append(int(_number(row['t'])))

    final = rows[-1]
    summary = {
        'rounds': len(rows),
        'fired_round': fired[0] if fired else None,
        'last_fired_round': fired[-1] if fired else None,
        'fired_count': len(fired),
        'final_k': int(_number(final['k'])),
        'mean_pf1': _number(final['mean_pf1']),
        'mean_gf1': _number(final['mean_gf1']),
        'learning_gap': _number(final['learning_gap']),
        'mean_train_loss': _number(final['mean_train_loss']),
    }
    for name in SCORE_NAMES:
        summary[f"final_{name}"] = _number(final[name])
        summary[f"avg_{name}"] = series[name].time_average
    return summary


def _seed_of(seed_dir):
    return int(seed_dir.name.split('_', 1)[1])


def collect_run(run_dir):
    """Per-seed summaries of one run directory, in seed order."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingRun(f"Run directory {run_dir} does not exist.", path=str(run_dir))

    summaries = []
    for seed_dir in sorted(run_dir.glob('seed_*'), key=_seed_of):
        rounds_path = seed_dir / ROUNDS_FILE
        if not rounds_path.exists():
            logger.warning(
                f"Seed directory {seed_dir} has no {ROUNDS_FILE} - Skipped",
                extra={'path': str(seed_dir)},
            )
            continue
        summaries.append((_seed_of(seed_dir), summarize_rounds(read_csv(rounds_path))))

    if not summaries:
        raise MissingRun(f"Run directory {run_dir} holds no completed seed.", path=str(run_dir))
    return summaries


def _aggregate(values, reducer):
    values = [v for v in values if v is not None and not math.isnan(v)]
    return float(reducer(values)) if values else None


def build_report(run_dirs, out_path):
    """
    Write ``summary.csv``: one row per (run, seed) and, per run, a ``mean`` and
    a ``std`` row (population standard deviation) over its seeds.
    """
    if not run_dirs:
        raise ValidationError('At least one run directory is required.')

    rows = []
    for run_dir in run_dirs:
        summaries = collect_run(run_dir)
        name = str(run_dir)
        rows.extend({'run': name, 'seed': seed, **summary} for seed, summary in summaries)
        for label, reducer in (('mean', np.mean), ('std', np.std)):
            aggregate = {'run': name, 'seed': label}
            for column in METRIC_COLUMNS:
                aggregate[column] = _aggregate([s[column] for _, s in summaries], reducer)
            rows.append(aggregate)

    out_path = Path(out_path)
    if out_path.is_dir() or not out_path.suffix:
        out_path = out_path / SUMMARY_FILE
    write_csv(out_path, SUMMARY_COLUMNS, rows)
    logger.info(
        f"Wrote summary of {len(run_dirs)} runs to {out_path}",
        extra={'path': str(out_path), 'runs': len(run_dirs)},
    )
    return out_path
