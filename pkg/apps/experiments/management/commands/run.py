"""Run a federated clustering experiment over one or more seeds."""
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.config import load_config
from apps.experiments.runner import run_experiment
from core.exceptions import OcflError


class Command(BaseCommand):
    help = 'Train the configured strategy for every seed and persist per-seed results.'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment TOML file.')
        parser.add_argument('--seeds', type=int, nargs='+', default=None, help='Override the configured seeds.')
        parser.add_argument('--out', default=None, help='Override the output directory.')
        parser.add_argument(
            '--parallel-seeds',
            action='store_true',
            help='Spread seeds over OCFL_SEED_WORKERS processes.',
        )

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            if options['out']:
                config = config.with_output_dir(options['out'])
            manifest = run_experiment(config, seeds=options['seeds'], parallel=options['parallel_seeds'])
        except OcflError as exc:
            raise CommandError(str(exc)) from exc

        for outcome in manifest.outcomes:
            if outcome.aborted:
                self.stderr.write(f"Seed {outcome.seed} aborted: {outcome.error['message']}")
                continue
            summary = outcome.summary
            self.stdout.write(
                f"Seed {outcome.seed}: clustered at {summary['fired_round']} "
                f"(last {summary['last_fired_round']}), "
                f"k={summary['final_k']}, ARI={summary['final_ari']:.4f}, "
                f"PF1={summary['mean_pf1']:.4f}, GF1={summary['mean_gf1']:.4f}"
            )

        if manifest.aborted_seeds:
            raise CommandError(f"Seeds {manifest.aborted_seeds} aborted; see {manifest.run_dir}.")
        self.stdout.write(self.style.SUCCESS(f"Run written to {manifest.run_dir}"))
