from ...evaluator import THROUGHPUT_COLUMNS, run_throughput_sweep
from ...harness import write_csv
from ...models import ThroughputPoint
from ._base import ExperimentCommand, native_records


class Command(ExperimentCommand):
    help = 'Throughput against MCS at one transmit power'
    kind = 'throughput_sweep'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--tx-power', type=float, help='Transmit power in dBm, overrides sweep.throughput_power_dbm')

    def option_overrides(self, options):
        if options['tx_power'] is None:
            return []
        return [f'sweep.throughput_power_dbm={options["tx_power"]!r}']

    def run(self, config, out_dir, options):
        frame = run_throughput_sweep(config, workers=options['workers'])
        write_csv(frame, out_dir / 'throughput.csv', THROUGHPUT_COLUMNS)
        peak = frame.loc[frame['throughput_bps'].idxmax()]
        self.stdout.write(f'peak {peak["throughput_bps"]:.0f} bit/s at MCS {int(peak["mcs"])}')
        self.finish(config, out_dir, options, native_records(frame), ThroughputPoint)
