"""Insertion/deletion evaluation of the final cluster models of a run."""
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.config import load_config
from apps.experiments.runner import run_xai
from core.exceptions import OcflError


class Command(BaseCommand):
    help = 'Compute InDe AUCs per cluster and mode and write inde.json next to each seed.'

    def add_arguments(self, parser):
        parser.add_argument('run_dir', help='Directory produced by the run command.')
        parser.add_argument('--config', default=None, help='TOML file whose [inde] table overrides the run.')
        parser.add_argument('--seeds', type=int, nargs='+', default=None, help='Restrict to these seeds.')

    def handle(self, *args, **options):
        try:
            inde = load_config(options['config']).inde if options['config'] else None
            written = run_xai(options['run_dir'], inde_settings=inde, seeds=options['seeds'])
        except OcflError as exc:
            raise CommandError(str(exc)) from exc

        for seed, path in written.items():
            self.stdout.write(f"Seed {seed}: {path}")
        self.stdout.write(self.style.SUCCESS(f"InDe results written for {len(written)} seeds"))
