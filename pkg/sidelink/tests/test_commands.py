import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from sidelink.evaluator import STATS_COLUMNS
from sidelink.harness import cli_run
from sidelink.models import BackoffPoint, BlerCell, SpsOutcome, SweepRun, ThroughputPoint

TINY_SWEEP = ['sweep.tx_power_dbm=-10', 'sweep.mcs=0', 'sweep.trials=1', 'sweep.window_blocks=3',
              'sweep.n_subchannels=1']


class CommandTestCase(TestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def call(self, name, *overrides, out_dir=None, **options):
        out, err = StringIO(), StringIO()
        call_command(name, set=list(overrides), out_dir=str(out_dir or self.tmp), stdout=out, stderr=err,
                     **options)
        return out.getvalue(), err.getvalue()


class BlerSweepCommandTest(CommandTestCase):

    def test_single_cell(self):
        _, err = self.call('bler_sweep', *TINY_SWEEP)
        stats = pd.read_csv(self.tmp / 'bler_stats.csv')
        self.assertEqual(list(stats.columns), STATS_COLUMNS)
        self.assertEqual(len(stats), 1)
        self.assertEqual(len(pd.read_csv(self.tmp / 'bler_samples.csv')), 1)
        self.assertIn('low confidence', err)

        run = SweepRun.objects.get()
        self.assertEqual(run.kind, 'bler_sweep')
        self.assertEqual(run.master_seed, 2019)
        self.assertEqual(BlerCell.objects.filter(run=run).count(), 1)
        manifest = json.loads((self.tmp / 'manifest.json').read_text())
        self.assertEqual(manifest['config']['sweep.trials'], '1')

    def test_byte_identical_reruns(self):
        first, second = self.tmp / 'first', self.tmp / 'second'
        overrides = [*TINY_SWEEP, 'sweep.trials=2', 'sweep.mcs=0,5']
        self.call('bler_sweep', *overrides, out_dir=first, no_store=True)
        self.call('bler_sweep', *overrides, out_dir=second, no_store=True, workers=2)
        for name in ('bler_stats.csv', 'bler_samples.csv', 'manifest.json'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)
        self.assertFalse(SweepRun.objects.exists())

    def test_seed_flag(self):
        self.call('bler_sweep', *TINY_SWEEP, seed=77)
        self.assertEqual(SweepRun.objects.get().master_seed, 77)

    def test_config_error(self):
        with self.assertRaisesMessage(CommandError, 'sweep.window_blocks'):
            self.call('bler_sweep', 'sweep.window_blocks=0')

    def test_cli_run_exit_status(self):
        status = cli_run('bler-sweep', overrides=TINY_SWEEP, out_dir=str(self.tmp), stdout=StringIO(),
                         stderr=StringIO())
        self.assertEqual(status, 0)
        self.assertTrue((self.tmp / 'bler_stats.csv').is_file())


class ThroughputCommandTest(CommandTestCase):

    def test_points(self):
        out, _ = self.call('throughput_sweep', 'sweep.throughput_mcs=0,5', 'sweep.trials=1',
                           'sweep.window_blocks=2', 'sweep.n_subchannels=1', 'channel.profile=ideal', tx_power=-10.0)
        frame = pd.read_csv(self.tmp / 'throughput.csv')
        self.assertEqual(list(frame['mcs']), [0, 5])
        self.assertEqual(list(frame['tx_power_dbm']), [-10.0, -10.0])
        self.assertEqual(frame.loc[0, 'throughput_bps'], 32000.0)
        self.assertEqual(list(frame['throughput_bps']), list(frame['tbs_bits'] * 1000.0))
        self.assertIn('MCS 5', out)
        self.assertEqual(ThroughputPoint.objects.count(), 2)

    def test_tx_power_flag_survives_a_rerun_from_the_manifest(self):
        first, second = self.tmp / 'first', self.tmp / 'second'
        self.call('throughput_sweep', 'sweep.throughput_mcs=0,20', 'sweep.trials=1', 'sweep.window_blocks=3',
                  'sweep.n_subchannels=1', 'channel.profile=awgn', out_dir=first, no_store=True, tx_power=-22.0)
        manifest = json.loads((first / 'manifest.json').read_text())
        self.assertEqual(manifest['config']['sweep.throughput_power_dbm'], '-22.0')
        self.call('throughput_sweep', out_dir=second, no_store=True, config=str(first / 'manifest.json'))
        self.assertEqual((first / 'throughput.csv').read_bytes(), (second / 'throughput.csv').read_bytes())
        self.assertEqual(list(pd.read_csv(second / 'throughput.csv')['tx_power_dbm']), [-22.0, -22.0])


class BackoffCommandTest(CommandTestCase):

    def write_stats(self, shift_db):
        rows = []
        for power in (-16.0, -14.0, -12.0, -10.0, -8.0, -6.0):
            mean = 10 ** min(0.0, -2 - 0.5 * (power + 12))
            q99 = 10 ** min(0.0, -2 - 0.5 * (power + 12 - shift_db))
            rows.append((power, 0, 100, mean, 0.0, q99))
        path = self.tmp / 'bler_stats.csv'
        pd.DataFrame(rows, columns=STATS_COLUMNS).to_csv(path, index=False)
        return path

    def test_backoff(self):
        path = self.write_stats(2.0)
        self.call('backoff', out_dir=self.tmp / 'out', input=str(path))
        frame = pd.read_csv(self.tmp / 'out' / 'backoff.csv')
        self.assertAlmostEqual(frame.loc[0, 'backoff_db'], 2.0)
        self.assertAlmostEqual(frame.loc[0, 'crossing_mean_dbm'], -12.0)
        self.assertAlmostEqual(BackoffPoint.objects.get().backoff_db, 2.0)

    def test_input_recorded_and_restored(self):
        path = self.write_stats(2.0)
        self.call('backoff', out_dir=self.tmp / 'out', input=str(path), no_store=True)
        manifest = self.tmp / 'out' / 'manifest.json'
        self.assertEqual(json.loads(manifest.read_text())['options'], {'input': str(path)})
        self.call('backoff', out_dir=self.tmp / 'again', config=str(manifest), no_store=True)
        self.assertEqual((self.tmp / 'out' / 'backoff.csv').read_bytes(),
                         (self.tmp / 'again' / 'backoff.csv').read_bytes())

    def test_not_crossed(self):
        path = self.write_stats(20.0)
        with self.assertRaises(CommandError):
            self.call('backoff', out_dir=self.tmp / 'out', input=str(path))

    def test_missing_input(self):
        with self.assertRaisesMessage(CommandError, 'does not exist'):
            self.call('backoff', input=str(self.tmp / 'absent.csv'))


class SpsCommandTest(CommandTestCase):

    def test_policies(self):
        out, _ = self.call('sps_sim', 'sps.vehicles=4', 'sps.duration_ms=200', 'sps.replicas=2',
                           'sps.calibration_blocks=2', 'sps.calibration_snr_db=-10,10',
                           'pool.selection_period_ms=10', 'pool.sensing_window_ms=20', 'pool.n_subchannels=2')
        frame = pd.read_csv(self.tmp / 'sps.csv')
        self.assertEqual(list(frame['policy']), ['random', 'sensing'])
        self.assertEqual(list(frame['load']), [0.2, 0.2])
        self.assertTrue(frame['collision_rate'].between(0, 1).all())
        self.assertEqual(SpsOutcome.objects.count(), 2)
        self.assertIn('sensing', out)

    def test_full_phy_needs_matching_pool(self):
        with self.assertRaisesMessage(CommandError, 'full_phy'):
            self.call('sps_sim', 'sps.mode=full_phy', 'pool.n_subchannels=2')


class SelftestCommandTest(CommandTestCase):

    def test_reports_each_pair(self):
        out, _ = self.call('selftest', 'grid.n_subchannels=1', 'sweep.n_subchannels=1', 'sweep.mcs=0,9,16',
                           subframes=1)
        report = pd.read_csv(self.tmp / 'selftest.csv')
        self.assertEqual(list(report['mcs']), [0, 9, 16])
        self.assertEqual(report['n_failures'].sum(), 0)
        self.assertIn('PASS crc', out)
        self.assertFalse(SweepRun.objects.exists())
        manifest = json.loads((self.tmp / 'manifest.json').read_text())
        self.assertEqual(manifest['options'], {'full': False, 'subframes': 1})


class TrafficCommandTest(CommandTestCase):

    def test_stdio(self):
        out, _ = self.call('traffic', 'channel.profile=ideal',
                           stdin=StringIO('PKT 0 1 2 ABCD\nnot a packet\nPKT 5000 0 1 FF\n'))
        self.assertEqual(out.splitlines()[0], 'RES 0 ok')
        self.assertTrue(out.splitlines()[1].startswith('ERR '))
        self.assertEqual(out.splitlines()[2], 'RES 5000 ok')
        manifest = json.loads((self.tmp / 'manifest.json').read_text())
        self.assertEqual(manifest['subcommand'], 'traffic')
        self.assertEqual(manifest['options'], {'traffic': 'stdio'})
        self.assertEqual(manifest['config']['channel.profile'], 'ideal')

    def test_bad_transport(self):
        with self.assertRaisesMessage(CommandError, '--traffic'):
            self.call('traffic', traffic='udp:9', stdin=StringIO(''))
