import logging
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import SidelinkError
from ...harness import load_config, manifest, manifest_options, write_manifest
from ...models import SweepRun

logger = logging.getLogger(__name__)


def native_records(frame):
    """DataFrame rows as dicts of plain Python values."""
    return [
        {key: value.item() if isinstance(value, np.generic) else value for key, value in row.items()}
        for row in frame.to_dict('records')
    ]


class ExperimentCommand(BaseCommand):
    """Shared flags, config loading, manifest writing and result storage."""
    kind = None
    # command options that shape the results and go into the manifest
    recorded_options = ()

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Experiment file with dotted "key = value" lines, or a run manifest')
        parser.add_argument('--set', action='append', default=[], dest='overrides', metavar='KEY=VALUE',
                            help='Override one configuration key; may be repeated')
        parser.add_argument('--seed', type=int, help='Master seed, overrides sweep.master_seed')
        parser.add_argument('--out-dir', default=f'results/{self.kind}', help='Directory for CSV outputs')
        parser.add_argument('--workers', type=int, default=1, help='Worker processes for independent trials')
        parser.add_argument('--no-store', action='store_true', help='Do not store the result table in the database')

    def handle(self, *args, **options):
        try:
            if options['config']:
                self.restore_options(options, manifest_options(options['config']))
            overrides = [*options['overrides'], *self.option_overrides(options)]
            config = load_config(options['config'], overrides, options['seed'])
            out_dir = Path(options['out_dir'])
            out_dir.mkdir(parents=True, exist_ok=True)
            self.run(config, out_dir, options)
        except SidelinkError as exc:
            raise CommandError(str(exc))

    def restore_options(self, options, recorded):
        """Take recorded options from a manifest wherever the command line left the default."""
        parser = self.create_parser('manage.py', self.kind)
        for key in self.recorded_options:
            if key in recorded and options.get(key) == parser.get_default(key):
                options[key] = recorded[key]

    def option_overrides(self, options):
        """Config overrides spelled as dedicated flags."""
        return []

    def options_snapshot(self, options):
        return {key: options.get(key) for key in self.recorded_options}

    def run(self, config, out_dir, options):
        raise NotImplementedError

    def write_manifest(self, config, out_dir, options):
        return write_manifest(out_dir, self.kind, config, self.options_snapshot(options))

    def finish(self, config, out_dir, options, rows=(), row_model=None):
        path = self.write_manifest(config, out_dir, options)
        if not options['no_store']:
            run = SweepRun.record(manifest(self.kind, config, self.options_snapshot(options)), out_dir, rows,
                                  row_model)
            logger.info('stored run %s', run.pk)
        self.stdout.write(self.style.SUCCESS(f'{self.kind}: results in {out_dir} (manifest {path.name})'))
