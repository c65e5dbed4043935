"""Suggest bipartitioning thresholds from a central training run."""
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.config import load_config
from apps.experiments.runner import run_calibration
from core.exceptions import OcflError


class Command(BaseCommand):
    help = 'Train centrally on the pooled client data and write calibration.csv with suggested SCL settings.'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment TOML file.')
        parser.add_argument('--out', default=None, help='Output directory, the configured one by default.')
        parser.add_argument('--seed', type=int, default=None, help='Dataset seed, the first configured one by default.')
        parser.add_argument('--rounds', type=int, default=None, help='Central rounds, the configured R by default.')
        parser.add_argument('--window', type=int, default=5, help='Rounds in the rolling mean.')
        parser.add_argument('--tolerance', type=float, default=0.05, help='Relative change that counts as converged.')
        parser.add_argument('--epsilon2-factor', type=float, default=3.0, help='epsilon2 as a multiple of epsilon1.')

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            result = run_calibration(
                config,
                options['out'] or config.output_dir,
                seed=options['seed'],
                rounds=options['rounds'],
                window=options['window'],
                tolerance=options['tolerance'],
                epsilon2_factor=options['epsilon2_factor'],
            )
        except OcflError as exc:
            raise CommandError(str(exc)) from exc

        self.stdout.write('[strategy.scl]')
        self.stdout.write(f"epsilon1 = {result.epsilon1:.6g}")
        self.stdout.write(f"epsilon2 = {result.epsilon2:.6g}")
        self.stdout.write(f"cooldown = {result.cooldown}")
        self.stdout.write(self.style.SUCCESS(f"Calibration of seed {result.seed} written"))
