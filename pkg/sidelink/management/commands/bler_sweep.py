from ...evaluator import SAMPLE_COLUMNS, STATS_COLUMNS, run_bler_sweep
from ...harness import write_csv
from ...models import BlerCell
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Mean, standard deviation and 99th percentile of BLER over a power x MCS grid'
    kind = 'bler_sweep'

    def run(self, config, out_dir, options):
        table = run_bler_sweep(config, options['workers'])
        write_csv(table.stats, out_dir / 'bler_stats.csv', STATS_COLUMNS)
        write_csv(table.samples, out_dir / 'bler_samples.csv', SAMPLE_COLUMNS)
        rows = [
            dict(tx_power_dbm=power, mcs=mcs, n_samples=cell.n_samples, bler_mean=cell.mean,
                 bler_std=cell.std, bler_q99=cell.q99, low_confidence=cell.low_confidence)
            for (power, mcs), cell in sorted(table.cells.items())
        ]
        if any(row['low_confidence'] for row in rows):
            self.stderr.write(self.style.WARNING('Fewer than 100 samples per cell: q99 is low confidence'))
        self.finish(config, out_dir, options, rows, BlerCell)
