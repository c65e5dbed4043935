"""Summarize completed runs into summary.csv."""
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.reporting import build_report
from core.exceptions import OcflError


class Command(BaseCommand):
    help = 'Write one summary row per (run, seed) plus mean/std rows per run.'

    def add_arguments(self, parser):
        parser.add_argument('run_dirs', nargs='*', help='Run directories produced by the run command.')
        parser.add_argument('--out', default='summary.csv', help='Output CSV file or directory.')

    def handle(self, *args, **options):
        if not options['run_dirs']:
            raise CommandError('Provide at least one run directory.')
        try:
            path = build_report(options['run_dirs'], options['out'])
        except OcflError as exc:
            raise CommandError(str(exc)) from exc
        self.stdout.write(self.style.SUCCESS(f"Summary written to {path}"))
