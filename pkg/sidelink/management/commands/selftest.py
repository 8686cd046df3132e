from dataclasses import replace

import numpy as np
import pandas as pd

from ...channel import ImpairmentConfig, channel_profile
from ...coding import MAX_MCS, CrcKind, crc_attach, crc_check, mcs_lookup, tbs_for
from ...exceptions import AllocationError, SidelinkError
from ...grid import Allocation, pssch_re_count
from ...harness import write_csv
from ...link import LinkSimulator
from ._base import ExperimentCommand

REPORT_COLUMNS = ['mcs', 'n_subchannels', 'n_blocks', 'n_failures']


class Command(ExperimentCommand):
    help = 'Loopback over an ideal channel: every block and every SCI must come back exactly'
    kind = 'selftest'
    recorded_options = ('subframes', 'full')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--subframes', type=int, default=5, help='Subframes per (MCS, width) pair')
        parser.add_argument('--full', action='store_true', help='Every MCS 0-28 instead of sweep.mcs')

    def widths(self, config):
        return sorted({w for w in (1, 2, config.grid.n_subchannels) if w <= config.grid.n_subchannels})

    def check_crc(self, rng):
        bits = crc_attach(rng.integers(0, 2, 64, dtype=np.uint8), CrcKind.DATA24)
        flipped = bits.copy()
        flipped[rng.integers(len(bits))] ^= 1
        return bool(crc_check(bits, CrcKind.DATA24)) and not crc_check(flipped, CrcKind.DATA24)

    def run(self, config, out_dir, options):
        rng = np.random.default_rng(config.master_seed)
        failures = 0 if self.check_crc(rng) else 1
        self.stdout.write(f'{"PASS" if not failures else "FAIL"} crc single-bit detection')

        mcs_list = range(MAX_MCS + 1) if options['full'] else config.sweep.mcs
        rows = []
        for width in self.widths(config):
            link = replace(config.link_for(Allocation(0, width)), channel=channel_profile('ideal'),
                           impairments=ImpairmentConfig(cfo_enabled=False, timing_enabled=False))
            sim = LinkSimulator(link)
            for mcs in mcs_list:
                try:
                    tbs_for(mcs_lookup(mcs), pssch_re_count(link.grid, link.alloc))
                except AllocationError:
                    self.stdout.write(f'SKIP mcs {mcs} on {width} sub-channel(s): no room for a transport block')
                    continue
                outcomes = sim.run_window(0.0, mcs, range(options['subframes']), rng)
                bad = sum(not (o.payload_exact and o.sci_detected) for o in outcomes)
                rows.append((mcs, width, len(outcomes), bad))
                failures += bad
                self.stdout.write(f'{"PASS" if not bad else "FAIL"} mcs {mcs:2d} on {width} sub-channel(s): '
                                  f'{len(outcomes) - bad}/{len(outcomes)}')
        write_csv(pd.DataFrame(rows, columns=REPORT_COLUMNS), out_dir / 'selftest.csv')
        self.write_manifest(config, out_dir, options)
        if failures:
            raise SidelinkError(f'selftest: {failures} failure(s)')
        self.stdout.write(self.style.SUCCESS('selftest: all checks passed'))
