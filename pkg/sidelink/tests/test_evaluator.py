import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag
from scipy import special, stats

from sidelink.coding import mcs_lookup, tbs_for
from sidelink.evaluator import (
    BlerSample, DecodeCache, DecodeRecord, backoff_db, bler_stats, crossing_power, measure_uncoded_ber,
    run_bler_sweep, run_throughput_sweep, throughput, throughput_bps,
)
from sidelink.exceptions import ContractError, DuplicateRecordError, NotCrossedError
from sidelink.grid import Allocation, GridConfig
from sidelink.harness import load_config


def records(outcomes, trial=0, power=-10.0, mcs=0):
    return [DecodeRecord(trial, i, power, mcs, ok, 416) for i, ok in enumerate(outcomes)]


def oracle(values):
    """Exact moments and nearest-rank percentile computed independently of bler_stats."""
    ordered = sorted(values)
    n = len(ordered)
    mean = sum(map(Fraction, ordered), Fraction(0)) / n
    var = sum(((Fraction(v) - mean) ** 2 for v in ordered), Fraction(0)) / (n - 1) if n > 1 else Fraction(0)
    rank = math.ceil(Fraction(99, 100) * n)
    return float(mean), math.sqrt(float(var)), ordered[rank - 1]


def tiny_sweep(*overrides):
    return load_config(overrides=[
        'sweep.n_subchannels=1', 'sweep.window_blocks=2', 'sweep.trials=3',
        'sweep.tx_power_dbm=-20,-10', 'sweep.mcs=0,5', *overrides,
    ])


class DecodeCacheTest(SimpleTestCase):

    def test_append_and_duplicate(self):
        cache = DecodeCache(records([True, False, True]))
        self.assertEqual(len(cache), 3)
        with self.assertRaises(DuplicateRecordError):
            cache.record(DecodeRecord(0, 1, -10.0, 0, True, 416))

    def test_windows(self):
        cache = DecodeCache(records([True, False, True, True, False, False, True]))
        samples = cache.samples(3)
        self.assertEqual([(s.n_blocks, s.n_errors) for s in samples], [(3, 1), (3, 2), (1, 0)])
        with self.assertRaises(ContractError):
            cache.samples(0)

    def test_order_independent(self):
        rng = np.random.default_rng(0)
        recs = [r for trial in range(4) for r in records(rng.random(20) > 0.3, trial=trial)]
        shuffled = [recs[i] for i in rng.permutation(len(recs))]
        self.assertEqual(DecodeCache(recs).samples(5), DecodeCache(shuffled).samples(5))
        self.assertEqual(bler_stats(DecodeCache(recs).samples(5)), bler_stats(DecodeCache(shuffled).samples(5)))

    def test_concurrent_writers(self):
        rng = np.random.default_rng(1)
        recs = [r for trial in range(8) for r in records(rng.random(50) > 0.5, trial=trial)]
        cache = DecodeCache()
        with ThreadPoolExecutor(max_workers=4) as pool:
            list(pool.map(cache.record, recs))
        self.assertEqual(len(cache), len(recs))
        self.assertEqual(cache.snapshot(), DecodeCache(recs).snapshot())

    def test_sample_contract(self):
        with self.assertRaises(ContractError):
            BlerSample(0, 0, 5, 6)
        self.assertEqual(BlerSample(0, 0, 4, 1).value, 0.25)


class BlerStatsTest(SimpleTestCase):

    def test_single_failure_in_hundred(self):
        result = bler_stats([0.0] * 99 + [1.0])
        self.assertAlmostEqual(result.mean, 0.01, places=15)
        self.assertAlmostEqual(result.std, 0.1, places=12)
        self.assertEqual(result.q99, 0.0)
        self.assertEqual(result.n_samples, 100)
        self.assertFalse(result.low_confidence)

    def test_constant(self):
        result = bler_stats([0.25] * 10)
        self.assertEqual((result.mean, result.std, result.q99), (0.25, 0.0, 0.25))
        self.assertTrue(result.low_confidence)

    def test_single_sample(self):
        result = bler_stats([0.5])
        self.assertEqual((result.mean, result.std, result.q99), (0.5, 0.0, 0.5))

    def test_empty(self):
        with self.assertRaises(ContractError):
            bler_stats([])

    def test_matches_oracle(self):
        rng = np.random.default_rng(2019)
        for _ in range(10000):
            n = int(rng.integers(1, 50))
            values = list(rng.integers(0, 1001, n) / 1000)
            result = bler_stats(values)
            mean, std, q99 = oracle(values)
            self.assertEqual((result.mean, result.std, result.q99), (mean, std, q99))
            self.assertGreaterEqual(result.q99, result.median)

    def test_confidence_interval(self):
        values = [0.1, 0.2, 0.15, 0.3, 0.05]
        result = bler_stats(values, confidence=0.95)
        expected = stats.t.ppf(0.975, 4) * np.std(values, ddof=1) / math.sqrt(5)
        self.assertAlmostEqual(result.mean_ci_halfwidth, expected)
        self.assertTrue(math.isnan(bler_stats(values).mean_ci_halfwidth))


class CrossingTest(SimpleTestCase):

    def test_hand_interpolation(self):
        expected = (math.log10(0.01) - math.log10(0.5)) / (math.log10(0.001) - math.log10(0.5))
        self.assertAlmostEqual(crossing_power([(0.0, 0.5), (1.0, 0.001)], 0.01), expected)

    def test_exact_grid_point(self):
        curve = [(-14.0, 0.1), (-12.0, 0.01), (-10.0, 0.001)]
        self.assertAlmostEqual(crossing_power(curve, 0.01), -12.0)

    def test_zero_bler_floor(self):
        self.assertAlmostEqual(crossing_power([(0.0, 0.1), (2.0, 0.0)], 0.01, floor=1e-6), 0.4)

    def test_not_crossed(self):
        with self.assertRaises(NotCrossedError):
            crossing_power([(0.0, 0.5), (1.0, 0.2)], 0.01)
        with self.assertRaises(NotCrossedError):
            crossing_power([(0.0, 0.001), (1.0, 0.0)], 0.01)

    def test_powers_must_increase(self):
        with self.assertRaises(ContractError):
            crossing_power([(0.0, 0.5), (0.0, 0.001)], 0.01)

    def test_backoff_shifted_lines(self):
        mean = [(p, 10 ** (-2 - 0.5 * (p + 12))) for p in (-16.0, -14.0, -12.0, -10.0, -8.0)]
        q99 = [(p, 10 ** (-2 - (p + 9) / 3)) for p in (-14.0, -12.0, -10.0, -8.0, -6.0)]
        self.assertAlmostEqual(backoff_db(mean, q99, 0.01), 3.0, delta=1e-9)
        self.assertAlmostEqual(backoff_db(mean, mean, 0.01), 0.0)

    def test_backoff_names_missing_curve(self):
        mean = [(0.0, 0.1), (1.0, 0.001)]
        with self.assertRaises(NotCrossedError) as ctx:
            backoff_db(mean, [(0.0, 0.5), (1.0, 0.3)], 0.01)
        self.assertEqual(ctx.exception.curve, 'q99')


class ThroughputTest(SimpleTestCase):

    def test_error_free(self):
        cfg, alloc = GridConfig(), Allocation(0, 6)
        rate = throughput(records([True] * 10), alloc, cfg)
        self.assertEqual(rate, {0: 1000 * tbs_for(mcs_lookup(0), 2208)})
        self.assertEqual(rate[0], 416000)

    def test_half_lost(self):
        rate = throughput(records([True, False] * 5), Allocation(0, 6), GridConfig())
        self.assertAlmostEqual(rate[0], 208000.0)
        self.assertEqual(throughput_bps(0, 1.0, Allocation(0, 6), GridConfig()), 0.0)


class UncodedBerTest(SimpleTestCase):

    def test_qpsk_matches_theory(self):
        rng = np.random.default_rng(3)
        for ebn0_db in (0.0, 4.0, 6.8):
            ber = measure_uncoded_ber(ebn0_db + 10 * math.log10(2), 1_000_000, rng)
            upper = 0.5 * special.erfc(math.sqrt(10 ** ((ebn0_db - 0.5) / 10)))
            lower = 0.5 * special.erfc(math.sqrt(10 ** ((ebn0_db + 0.5) / 10)))
            self.assertTrue(lower <= ber <= upper, (ebn0_db, ber))


class BlerSweepTest(SimpleTestCase):

    def test_shape(self):
        table = run_bler_sweep(tiny_sweep())
        self.assertEqual(len(table.stats), 4)
        self.assertEqual(len(table.samples), 12)
        self.assertEqual(set(table.stats['n_samples']), {3})
        self.assertEqual(list(table.stats['tx_power_dbm']), [-20.0, -20.0, -10.0, -10.0])
        self.assertEqual(len(table.curve(5)), 2)

    def test_ideal_channel_error_free(self):
        table = run_bler_sweep(tiny_sweep('channel.profile=ideal'))
        self.assertTrue((table.stats['bler_mean'] == 0).all())
        self.assertTrue((table.stats['bler_q99'] == 0).all())

    def test_worker_count_does_not_change_results(self):
        config = tiny_sweep()
        serial = run_bler_sweep(config, workers=1)
        parallel = run_bler_sweep(config, workers=2)
        pd.testing.assert_frame_equal(serial.stats, parallel.stats)
        pd.testing.assert_frame_equal(serial.samples, parallel.samples)

    def test_repeatable(self):
        first = run_bler_sweep(tiny_sweep('sweep.tx_power_dbm=-36', 'sweep.mcs=5', 'sweep.window_blocks=8'))
        again = run_bler_sweep(tiny_sweep('sweep.tx_power_dbm=-36', 'sweep.mcs=5', 'sweep.window_blocks=8'))
        pd.testing.assert_frame_equal(first.samples, again.samples)

    def test_awgn_low_power_mean_above_std(self):
        table = run_bler_sweep(tiny_sweep('channel.profile=awgn', 'sweep.tx_power_dbm=-45', 'sweep.mcs=0'))
        cell = table.stats.iloc[0]
        self.assertGreater(cell['bler_mean'], cell['bler_std'])

    @tag('slow')
    def test_awgn_thresholds_increase_with_mcs(self):
        config = load_config(overrides=[
            'channel.profile=awgn', 'sweep.n_subchannels=2', 'sweep.trials=4', 'sweep.window_blocks=25',
            'sweep.tx_power_dbm=-46:-18:1', 'sweep.mcs=0,5,10,15',
        ])
        table = run_bler_sweep(config)
        first_below = []
        for mcs in (0, 5, 10, 15):
            curve = table.curve(mcs)
            first_below.append(next(p for p, bler in curve if bler < 0.1))
        self.assertEqual(first_below, sorted(set(first_below)))

    @tag('slow')
    def test_fading_spreads_windows(self):
        config = load_config(overrides=[
            'sweep.n_subchannels=2', 'sweep.trials=30', 'sweep.window_blocks=20',
            'sweep.tx_power_dbm=-30:-14:2', 'sweep.mcs=5',
        ])
        table = run_bler_sweep(config)
        self.assertTrue(((table.stats['bler_std'] > table.stats['bler_mean']) & (table.stats['bler_mean'] > 0)).any())
        self.assertTrue((table.stats['bler_q99'] >= table.stats['bler_mean']).all())

    @tag('slow')
    def test_fading_backoff_is_a_few_db(self):
        config = load_config(overrides=[
            'sweep.trials=40', 'sweep.window_blocks=25', 'sweep.tx_power_dbm=-30:4:2', 'sweep.mcs=0,5,10,15',
        ])
        table = run_bler_sweep(config)
        for mcs in (0, 5, 10, 15):
            backoff = backoff_db(table.curve(mcs), table.curve(mcs, 'bler_q99'), 0.01)
            self.assertTrue(0 < backoff <= 6, (mcs, backoff))

    @tag('slow')
    def test_throughput_peaks_inside_the_mcs_range(self):
        config = load_config(overrides=['sweep.trials=5', 'sweep.window_blocks=20'])
        frame = run_throughput_sweep(config, mcs_list=(0, 4, 8, 12, 16, 20, 24, 28))
        rates = frame['throughput_bps'].tolist()
        peak = rates.index(max(rates))
        self.assertTrue(0 < peak < len(rates) - 1, rates)
        self.assertTrue(all(a < b for a, b in zip(rates[:2], rates[1:3])), rates)
        self.assertLess(rates[-1], 0.2 * max(rates))
