"""
Decode-outcome cache and the offline statistics computed from it.

Trials only append DecodeRecords; BLER samples, their statistics, the
power back-off and throughput are all derived afterwards from a snapshot.
"""
import logging
import math
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import groupby

import numpy as np
import pandas as pd
from scipy import stats

from .coding import Modulation, mcs_lookup, modulate, soft_demod, tbs_for
from .exceptions import ContractError, DuplicateRecordError, NotCrossedError
from .grid import pssch_re_count
from .link import LinkSimulator

logger = logging.getLogger(__name__)

LOW_CONFIDENCE_SAMPLES = 100
LOG_FLOOR = 1e-6

STATS_COLUMNS = ['tx_power_dbm', 'mcs', 'n_samples', 'bler_mean', 'bler_std', 'bler_q99']
SAMPLE_COLUMNS = ['trial', 'tx_power_dbm', 'mcs', 'window_idx', 'n_blocks', 'n_errors']
THROUGHPUT_COLUMNS = ['tx_power_dbm', 'mcs', 'tbs_bits', 'bler_mean', 'throughput_bps']


@dataclass(frozen=True)
class DecodeRecord:
    trial_idx: int
    subframe_idx: int
    tx_power_dbm: float
    mcs: int
    crc_pass: bool
    tb_bits: int

    @property
    def key(self):
        return self.trial_idx, self.subframe_idx


class DecodeCache:
    """Append-only store of decode outcomes for one (power, mcs) cell."""

    def __init__(self, records=()):
        self._records = {}
        self._lock = threading.Lock()
        for rec in records:
            self.record(rec)

    def record(self, rec):
        with self._lock:
            if rec.key in self._records:
                raise DuplicateRecordError(rec.key)
            self._records[rec.key] = rec

    def __len__(self):
        return len(self._records)

    def snapshot(self):
        with self._lock:
            return tuple(self._records[key] for key in sorted(self._records))

    def samples(self, window_blocks):
        """Group each trial's subframes into consecutive windows of `window_blocks`."""
        if window_blocks < 1:
            raise ContractError('A BLER window needs at least one block')
        samples = []
        for (trial, window), recs in groupby(self.snapshot(),
                                             key=lambda r: (r.trial_idx, r.subframe_idx // window_blocks)):
            recs = list(recs)
            samples.append(BlerSample(trial, window, len(recs), sum(not r.crc_pass for r in recs),
                                      recs[0].tx_power_dbm, recs[0].mcs))
        return samples


@dataclass(frozen=True)
class BlerSample:
    trial_idx: int
    window_idx: int
    n_blocks: int
    n_errors: int
    tx_power_dbm: float = 0.0
    mcs: int = 0

    def __post_init__(self):
        if self.n_blocks < 1 or not 0 <= self.n_errors <= self.n_blocks:
            raise ContractError(f'Window of {self.n_blocks} blocks cannot hold {self.n_errors} errors')

    @property
    def value(self):
        return self.n_errors / self.n_blocks


@dataclass(frozen=True)
class BlerStats:
    mean: float
    std: float
    q99: float
    n_samples: int
    median: float
    mean_ci_halfwidth: float = math.nan

    @property
    def low_confidence(self):
        return self.n_samples < LOW_CONFIDENCE_SAMPLES


def _values(samples):
    return [s.value if isinstance(s, BlerSample) else float(s) for s in samples]


def bler_stats(samples, confidence=None):
    """
    Mean, sample standard deviation and nearest-rank 99th percentile.

    Moments are computed in exact rational arithmetic and rounded once, so
    the result does not depend on sample order. `confidence` adds the
    Student-t half width of the mean's interval.
    """
    values = sorted(_values(samples))
    n = len(values)
    if not n:
        raise ContractError('BLER statistics need at least one sample')
    exact = [Fraction(v) for v in values]
    exact_mean = sum(exact, Fraction(0)) / n
    mean = float(exact_mean)
    std = math.sqrt(float(sum(((v - exact_mean) ** 2 for v in exact), Fraction(0)) / (n - 1))) if n > 1 else 0.0
    q99 = values[-(-99 * n // 100) - 1]
    halfwidth = math.nan
    if confidence is not None and n > 1:
        halfwidth = float(stats.t.ppf((1 + confidence) / 2, n - 1) * std / math.sqrt(n))
    return BlerStats(mean, std, q99, n, float(np.median(values)), halfwidth)


def crossing_power(curve, target_bler, floor=LOG_FLOOR, name='curve'):
    """Power where a (power, bler) curve first falls to `target_bler`, interpolated in log10 BLER."""
    powers = [float(p) for p, _ in curve]
    if any(b <= a for a, b in zip(powers, powers[1:])):
        raise ContractError(f'Powers of "{name}" must be strictly increasing')
    logs = [math.log10(max(float(b), floor)) for _, b in curve]
    goal = math.log10(target_bler)
    for (p0, y0), (p1, y1) in zip(zip(powers, logs), zip(powers[1:], logs[1:])):
        if y0 > goal >= y1:
            return p0 + (goal - y0) * (p1 - p0) / (y1 - y0)
    raise NotCrossedError(name, target_bler)


def backoff_db(curve_mean, curve_q99, target_bler, floor=LOG_FLOOR):
    return (crossing_power(curve_q99, target_bler, floor, name='q99')
            - crossing_power(curve_mean, target_bler, floor, name='mean'))


def throughput_bps(mcs, bler, alloc, cfg, blocks_per_second=1000):
    return (1.0 - bler) * tbs_for(mcs_lookup(mcs), pssch_re_count(cfg, alloc)) * blocks_per_second


def throughput(records, alloc, cfg, blocks_per_second=1000):
    """Throughput per MCS from decode records: (1 - mean BLER) * TBS * blocks per second."""
    frame = pd.DataFrame([(r.mcs, not r.crc_pass) for r in records], columns=['mcs', 'error'])
    bler = frame.groupby('mcs')['error'].mean()
    return {int(mcs): throughput_bps(int(mcs), float(value), alloc, cfg, blocks_per_second)
            for mcs, value in bler.items()}


def trial_rng(master_seed, power_idx, mcs_idx, trial):
    seq = np.random.SeedSequence(master_seed, spawn_key=(power_idx, mcs_idx, trial))
    return np.random.default_rng(seq), int(seq.generate_state(1)[0])


def run_trial(task):
    """One independent trial of a (power, mcs) cell; module level so it pickles."""
    link_config, sweep, power_idx, mcs_idx, trial, tx_power_dbm, mcs = task
    rng, channel_seed = trial_rng(sweep.master_seed, power_idx, mcs_idx, trial)
    sim = LinkSimulator(link_config, channel_seed=channel_seed)
    n_blocks = sweep.windows_per_trial * sweep.window_blocks
    return [
        DecodeRecord(trial, o.subframe_idx, tx_power_dbm, mcs, o.crc_pass, o.tb_bits)
        for o in sim.run_window(tx_power_dbm, mcs, range(n_blocks), rng)
    ]


def run_parallel(fn, tasks, workers=1):
    """Results in task order whatever the worker count."""
    if workers <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class SweepTable:
    stats: pd.DataFrame
    samples: pd.DataFrame
    cells: dict

    def curve(self, mcs, column='bler_mean'):
        rows = self.stats[self.stats['mcs'] == mcs].sort_values('tx_power_dbm')
        return list(zip(rows['tx_power_dbm'], rows[column]))


def _collect(tasks, workers):
    caches = {}
    for task, records in zip(tasks, run_parallel(run_trial, tasks, workers)):
        cache = caches.setdefault((task[5], task[6]), DecodeCache())
        for rec in records:
            cache.record(rec)
    return caches


def run_bler_sweep(config, workers=1):
    sweep = config.sweep
    link_config = config.link
    tasks = [
        (link_config, sweep, p, m, trial, power, mcs)
        for p, power in enumerate(sweep.tx_power_dbm)
        for m, mcs in enumerate(sweep.mcs)
        for trial in range(sweep.trials)
    ]
    logger.info('BLER sweep: %d powers x %d MCS x %d trials on %d worker(s)',
                len(sweep.tx_power_dbm), len(sweep.mcs), sweep.trials, workers)
    caches = _collect(tasks, workers)

    stats_rows, sample_rows, cells = [], [], {}
    for (power, mcs), cache in sorted(caches.items()):
        samples = cache.samples(sweep.window_blocks)
        cell = bler_stats(samples)
        cells[(power, mcs)] = cell
        stats_rows.append((power, mcs, cell.n_samples, cell.mean, cell.std, cell.q99))
        sample_rows.extend((s.trial_idx, power, mcs, s.window_idx, s.n_blocks, s.n_errors) for s in samples)
        logger.info('%.1f dBm MCS %d: mean %.4g std %.4g q99 %.4g', power, mcs, cell.mean, cell.std, cell.q99)
    return SweepTable(
        pd.DataFrame(stats_rows, columns=STATS_COLUMNS),
        pd.DataFrame(sample_rows, columns=SAMPLE_COLUMNS).sort_values(
            ['tx_power_dbm', 'mcs', 'trial', 'window_idx'], ignore_index=True),
        cells,
    )


def run_throughput_sweep(config, tx_power_dbm=None, mcs_list=None, workers=1):
    """Throughput against MCS at one transmit power."""
    sweep = config.sweep
    power = sweep.throughput_power_dbm if tx_power_dbm is None else tx_power_dbm
    mcs_list = sweep.throughput_mcs if mcs_list is None else mcs_list
    link_config = config.link
    tasks = [(link_config, sweep, 0, m, trial, power, mcs)
             for m, mcs in enumerate(mcs_list) for trial in range(sweep.trials)]
    caches = _collect(tasks, workers)
    n_re = pssch_re_count(link_config.grid, link_config.alloc)
    rows = []
    for (_, mcs), cache in sorted(caches.items()):
        records = cache.snapshot()
        bler = sum(not r.crc_pass for r in records) / len(records)
        rate = throughput(records, link_config.alloc, link_config.grid, sweep.blocks_per_second)[mcs]
        rows.append((power, mcs, tbs_for(mcs_lookup(mcs), n_re), bler, rate))
    return pd.DataFrame(rows, columns=THROUGHPUT_COLUMNS)


def measure_uncoded_ber(snr_db, n_bits, rng, modulation=Modulation.QPSK):
    """Bit error rate of hard decisions over AWGN; `snr_db` is Es/N0."""
    bits = rng.integers(0, 2, n_bits - n_bits % int(modulation), dtype=np.uint8)
    symbols = modulate(bits, modulation)
    noise_var = 10.0 ** (-snr_db / 10.0)
    noise = rng.standard_normal(symbols.shape) + 1j * rng.standard_normal(symbols.shape)
    llrs = soft_demod(symbols + np.sqrt(noise_var / 2) * noise, modulation, noise_var)
    return float(np.mean((llrs < 0) != bits.astype(bool)))
