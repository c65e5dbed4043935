"""
Experiment runs: one federated training per seed, persisted under
``<output_dir>/seed_<n>/``.

Per seed the runner writes ``rounds.csv``, ``temperature.csv``,
``partition.json``, ``cluster_state.json``, ``models/cluster_<id>.json`` and a
``manifest.json`` with output hashes and the seed summary (or the abort
payload). The run directory gets ``config.json`` and a run-level
``manifest.json``.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path

import django
from django.apps import apps as django_apps
from django.conf import settings

from apps.clustering.partition import Partition
from apps.federation.calibration import calibrate_scl
from apps.federation.orchestrator import build_training
from apps.federation.state import ClusterState
from apps.model.checkpoint import load_model, save_model
from apps.xai.inde import IndeOrdering, run_inde
from core.exceptions import EmptyEvaluationSet, MissingCheckpoint, MissingRun, OcflError, error_payload
from core.instrumentation import log_stage

from .config import DEFAULT_INDE, build_config
from .persistence import (
    CALIBRATION_COLUMNS,
    CALIBRATION_FILE,
    CALIBRATION_SUMMARY_FILE,
    CLUSTER_STATE_FILE,
    CONFIG_FILE,
    INDE_FILE,
    MANIFEST_FILE,
    MODELS_DIR,
    PARTITION_FILE,
    ROUND_COLUMNS,
    ROUNDS_FILE,
    TEMPERATURE_COLUMNS,
    TEMPERATURE_FILE,
    model_file_name,
    partition_payload,
    read_json,
    round_row,
    seed_dir_name,
    sha256_file,
    temperature_rows,
    write_csv,
    write_json,
)
from .reporting import summarize_rounds

logger = logging.getLogger(__name__)


@dataclass
class SeedOutcome:
    """Result of one seed: a summary and output hashes, or an abort payload."""

    seed: int
    wall_clock: float
    summary: dict = None
    hashes: dict = field(default_factory=dict)
    error: dict = None

    @property
    def aborted(self):
        return self.error is not None

    def to_dict(self):
        payload = {'seed': self.seed, 'wall_clock': self.wall_clock, 'outputs': dict(self.hashes)}
        if self.aborted:
            payload['error'] = self.error
        else:
            payload['summary'] = self.summary
        return payload


@dataclass
class RunManifest:
    config_hash: str
    run_dir: Path
    outcomes: list
    wall_clock: float

    @property
    def aborted_seeds(self):
        return [o.seed for o in self.outcomes if o.aborted]

    def to_dict(self):
        return {
            'config_hash': self.config_hash,
            'wall_clock': self.wall_clock,
            'seeds': {str(o.seed): o.to_dict() for o in self.outcomes},
        }


def _write_seed_outputs(seed_dir, fd, training, records):
    """Write the per-seed artifacts and return their SHA-256 by relative path."""
    hashes = {
        ROUNDS_FILE: write_csv(seed_dir / ROUNDS_FILE, ROUND_COLUMNS, [round_row(r) for r in records]),
        TEMPERATURE_FILE: write_csv(seed_dir / TEMPERATURE_FILE, TEMPERATURE_COLUMNS, temperature_rows(records)),
        PARTITION_FILE: write_json(seed_dir / PARTITION_FILE, partition_payload(fd.ground_truth, records)),
    }

    state = training.state
    model_files = {}
    for cluster_id, model in sorted(state.models.items()):
        relative = f"{MODELS_DIR}/{model_file_name(cluster_id)}"
        save_model(model, seed_dir / relative)
        hashes[relative] = sha256_file(seed_dir / relative)
        model_files[str(cluster_id)] = relative

    hashes[CLUSTER_STATE_FILE] = write_json(
        seed_dir / CLUSTER_STATE_FILE,
        {
            'strategy': training.strategy.value,
            'fired': state.fired,
            'partition': state.partition.to_dict(),
            'models': model_files,
        },
    )
    return hashes


def run_seed(config, seed, run_dir, workers=None):
    """
    Train one seed and persist its outputs. A laboratory error aborts only
    this seed; its payload is written to the seed manifest.
    """
    seed_dir = Path(run_dir) / seed_dir_name(seed)
    workers = workers or settings.OCFL['CLIENT_WORKERS']
    start = time.perf_counter()
    try:
        with log_stage('seed run', seed=seed, strategy=config.strategy.strategy.value):
            fd = config.dataset.build(seed)
            training = build_training(
                fd,
                config.model,
                config.client_optimizer,
                config.strategy,
                config.clustering,
                config.rounds,
                seed,
                server_opt=config.server_optimizer,
                workers=workers,
            )
            records = training.run()
            hashes = _write_seed_outputs(seed_dir, fd, training, records)
    except OcflError as exc:
        outcome = SeedOutcome(
            seed=seed,
            wall_clock=time.perf_counter() - start,
            error=error_payload(exc, {'seed': seed})['error'],
        )
    else:
        outcome = SeedOutcome(
            seed=seed,
            wall_clock=time.perf_counter() - start,
            summary=summarize_rounds([round_row(r) for r in records]),
            hashes=hashes,
        )

    write_json(seed_dir / MANIFEST_FILE, {'config_hash': config.config_hash, **outcome.to_dict()})
    return outcome


def _seed_job(config, seed, run_dir):
    if not django_apps.ready:
        django.setup()
    return run_seed(config, seed, run_dir)


def run_experiment(config, seeds=None, parallel=False):
    """
    Run every seed of ``config``. With ``parallel`` the seeds are spread over
    ``OCFL['SEED_WORKERS']`` processes; outputs are per seed.
    """
    if seeds:
        config = config.with_seeds(seeds)
    run_dir = Path(config.output_dir)
    start = time.perf_counter()
    write_json(run_dir / CONFIG_FILE, config.source)

    with log_stage('experiment', seeds=len(config.seeds), strategy=config.strategy.strategy.value):
        if parallel and len(config.seeds) > 1:
            with ProcessPoolExecutor(max_workers=settings.OCFL['SEED_WORKERS']) as pool:
                outcomes = list(pool.map(_seed_job, repeat(config), config.seeds, repeat(run_dir)))
        else:
            outcomes = [run_seed(config, seed, run_dir) for seed in config.seeds]

    manifest = RunManifest(
        config_hash=config.config_hash,
        run_dir=run_dir,
        outcomes=outcomes,
        wall_clock=time.perf_counter() - start,
    )
    write_json(run_dir / MANIFEST_FILE, manifest.to_dict())
    if manifest.aborted_seeds:
        logger.warning(
            f"{len(manifest.aborted_seeds)} of {len(outcomes)} seeds aborted",
            extra={'seeds': manifest.aborted_seeds, 'path': str(run_dir)},
        )
    return manifest


def load_run_config(run_dir):
    """Configuration snapshot a run was produced with."""
    path = Path(run_dir) / CONFIG_FILE
    if not path.exists():
        raise MissingRun(f"{run_dir} is not a run directory: no {CONFIG_FILE}.", path=str(run_dir))
    return build_config(read_json(path))


def load_cluster_state(seed_dir):
    """Final partition and cluster models of one seed."""
    seed_dir = Path(seed_dir)
    path = seed_dir / CLUSTER_STATE_FILE
    if not path.exists():
        raise MissingCheckpoint(f"No final cluster state in {seed_dir}.", path=str(path))
    payload = read_json(path)
    models = {int(cluster_id): load_model(seed_dir / relative) for cluster_id, relative in payload['models'].items()}
    return ClusterState(
        partition=Partition.from_dict(payload['partition']),
        models=models,
        server_states={cluster_id: None for cluster_id in models},
        fired=payload['fired'],
    )


def explain_seed(config, seed, seed_dir, inde_settings):
    """InDe AUCs of every requested mode under saliency and random orderings."""
    state = load_cluster_state(seed_dir)
    fd = config.dataset.build(seed)
    modes = {}
    for mode in inde_settings.modes:
        block = {}
        for ordering in IndeOrdering:
            try:
                result = run_inde(state, fd, inde_settings.config(mode, ordering), seed)
            except EmptyEvaluationSet as exc:
                block[ordering.value] = error_payload(exc, {'seed': seed, 'mode': mode.value})
            else:
                block[ordering.value] = result.to_dict()
        modes[mode.value] = block
    return {'seed': seed, 'k': state.partition.k, 'modes': modes}


def run_xai(run_dir, inde_settings=None, seeds=None):
    """
    Write ``inde.json`` into every seed directory of a run. Seeds that aborted
    during training are skipped.
    """
    run_dir = Path(run_dir)
    config = load_run_config(run_dir)
    inde_settings = inde_settings or config.inde or DEFAULT_INDE

    written = {}
    for seed in seeds or config.seeds:
        seed_dir = run_dir / seed_dir_name(seed)
        manifest_path = seed_dir / MANIFEST_FILE
        if manifest_path.exists() and 'error' in read_json(manifest_path):
            logger.warning(f"Seed {seed} aborted during training - Skipped", extra={'seed': seed})
            continue
        with log_stage('xai', seed=seed):
            payload = explain_seed(config, seed, seed_dir, inde_settings)
        write_json(seed_dir / INDE_FILE, payload)
        written[seed] = seed_dir / INDE_FILE
    return written


def run_calibration(config, out_dir, seed=None, rounds=None, **options):
    """
    Calibrate the bipartitioning thresholds on the pooled data of one seed and
    write ``calibration.csv`` and ``calibration.json`` into ``out_dir``.
    """
    seed = config.seeds[0] if seed is None else seed
    out_dir = Path(out_dir)
    fd = config.dataset.build(seed)
    result = calibrate_scl(fd, config.model, config.client_optimizer, rounds or config.rounds, seed, **options)
    write_csv(out_dir / CALIBRATION_FILE, CALIBRATION_COLUMNS, result.rows())
    write_json(out_dir / CALIBRATION_SUMMARY_FILE, {'config_hash': config.config_hash, **result.to_dict()})
    return result
