import pandas as pd

from ...evaluator import STATS_COLUMNS, crossing_power
from ...exceptions import NotCrossedError, SidelinkError
from ...harness import BACKOFF_COLUMNS, read_csv, write_csv
from ...models import BackoffPoint
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Extra transmit power the q99 BLER curve needs to meet the target compared with the mean curve'
    kind = 'backoff'
    recorded_options = ('input',)

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--input', default='results/bler_sweep/bler_stats.csv',
                            help='bler_stats.csv written by bler_sweep')

    def crossing(self, curve, target, floor, name):
        try:
            return crossing_power(curve, target, floor, name)
        except NotCrossedError as exc:
            self.stderr.write(self.style.WARNING(str(exc)))
            return None

    def run(self, config, out_dir, options):
        stats = read_csv(options['input'], STATS_COLUMNS)
        target, floor = config.sweep.target_bler, config.sweep.log_floor
        rows = []
        for mcs, group in stats.sort_values(['mcs', 'tx_power_dbm']).groupby('mcs'):
            powers = group['tx_power_dbm'].tolist()
            mean = self.crossing(list(zip(powers, group['bler_mean'])), target, floor, f'mean MCS {mcs}')
            q99 = self.crossing(list(zip(powers, group['bler_q99'])), target, floor, f'q99 MCS {mcs}')
            backoff = q99 - mean if mean is not None and q99 is not None else None
            rows.append(dict(mcs=int(mcs), target_bler=target, crossing_mean_dbm=mean,
                             crossing_q99_dbm=q99, backoff_db=backoff))
            if backoff is not None:
                self.stdout.write(f'MCS {mcs}: back-off {backoff:.2f} dB')
        if not any(row['backoff_db'] is not None for row in rows):
            raise SidelinkError(f'No MCS crosses BLER {target:g} on both curves')
        frame = pd.DataFrame(rows, columns=BACKOFF_COLUMNS)
        write_csv(frame, out_dir / 'backoff.csv', BACKOFF_COLUMNS)
        self.finish(config, out_dir, options, rows, BackoffPoint)
