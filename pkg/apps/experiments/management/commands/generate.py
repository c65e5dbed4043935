"""Generate a federated dataset and export it with a hash manifest."""
from django.core.management.base import BaseCommand, CommandError

from apps.datagen.manifest import export_manifest
from apps.experiments.config import load_config
from core.exceptions import OcflError


class Command(BaseCommand):
    help = 'Sample the configured federated dataset and write per-client files plus manifest.json.'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment TOML file.')
        parser.add_argument('--out', required=True, help='Directory receiving the dataset.')
        parser.add_argument('--seed', type=int, default=None, help='Master seed (default: first configured seed).')

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            seed = config.seeds[0] if options['seed'] is None else options['seed']
            fd = config.dataset.build(seed)
            manifest_path = export_manifest(fd, options['out'])
        except OcflError as exc:
            raise CommandError(str(exc)) from exc

        sizes = ', '.join(
            f"cluster {cluster_id}: {size}" for cluster_id, size in enumerate(fd.ground_truth.sizes())
        )
        self.stdout.write(f"Ground-truth clusters - {sizes}")
        self.stdout.write(self.style.SUCCESS(f"Dataset manifest written to {manifest_path}"))
