"""Transmit chain: SCI, PSCCH/PSSCH encoding, grid mapping and OFDM modulation."""
from dataclasses import dataclass, field

import numpy as np

from .coding import CrcKind, Modulation, ScramblingStream, block_symbols, mcs_lookup, scrambling_seed, tbs_for
from .exceptions import ConfigError, ContractError
from .grid import allocation_dmrs, empty_grid, map_subframe, pscch_re_count, pssch_re_count

SCI_FIELDS = (('mcs', 5), ('n_subchannels', 4), ('rri_code', 4), ('priority', 3))
SCI_RESERVED_BITS = 16
SCI_BITS = sum(width for _, width in SCI_FIELDS) + SCI_RESERVED_BITS
RRI_MS = {0: 0, 1: 1, 2: 10, 3: 20, 4: 50, 5: 100}


@dataclass(frozen=True)
class Sci:
    mcs: int
    n_subchannels: int
    rri_code: int = 0
    priority: int = 0

    def __post_init__(self):
        for name, width in SCI_FIELDS:
            value = getattr(self, name)
            if not 0 <= value < (1 << width):
                raise ContractError(f'SCI field {name}={value} does not fit {width} bits')
        if self.rri_code not in RRI_MS:
            raise ContractError(f'Unknown reservation interval code {self.rri_code}')
        if self.n_subchannels < 1:
            raise ContractError('SCI must claim at least one sub-channel')

    @property
    def reservation_ms(self):
        return RRI_MS[self.rri_code]

    @classmethod
    def for_period(cls, mcs, n_subchannels, period_ms, priority=0):
        codes = {ms: code for code, ms in RRI_MS.items()}
        return cls(mcs, n_subchannels, codes[period_ms], priority)

    def to_bits(self):
        bits = []
        for name, width in SCI_FIELDS:
            value = getattr(self, name)
            bits.extend((value >> (width - 1 - i)) & 1 for i in range(width))
        bits.extend([0] * SCI_RESERVED_BITS)
        return np.array(bits, dtype=np.uint8)

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape != (SCI_BITS,):
            raise ContractError(f'SCI needs {SCI_BITS} bits, got {bits.shape}')
        if bits[-SCI_RESERVED_BITS:].any():
            raise ContractError('Reserved SCI bits are not zero')
        values, pos = {}, 0
        for name, width in SCI_FIELDS:
            values[name] = int(bits[pos:pos + width] @ (1 << np.arange(width - 1, -1, -1)))
            pos += width
        return cls(**values)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 512
    cp_len: int = 64
    subcarrier_spacing_hz: float = 15e3

    def __post_init__(self):
        if not 0 <= self.cp_len < self.fft_size:
            raise ConfigError('Cyclic prefix must be shorter than the FFT')

    @property
    def sample_rate(self):
        return self.fft_size * self.subcarrier_spacing_hz

    @property
    def symbol_len(self):
        return self.fft_size + self.cp_len

    def subframe_len(self, cfg):
        return cfg.n_symbols * self.symbol_len

    def bins(self, cfg):
        """FFT bin of every pool subcarrier, centred on DC."""
        if cfg.n_subcarriers > self.fft_size:
            raise ConfigError(f'{cfg.n_subcarriers} subcarriers do not fit a {self.fft_size}-point FFT')
        return (np.arange(cfg.n_subcarriers) - cfg.n_subcarriers // 2) % self.fft_size

    def symbol_times(self, cfg):
        """Centre of each symbol's useful part, seconds from the subframe start."""
        starts = np.arange(cfg.n_symbols) * self.symbol_len + self.cp_len
        return (starts + self.fft_size / 2) / self.sample_rate


@dataclass(frozen=True)
class LinkIds:
    vehicle_id: int
    subframe_idx: int

    def seed(self, stream):
        return scrambling_seed(self.vehicle_id, self.subframe_idx, stream)


@dataclass
class TxSubframe:
    samples: np.ndarray = field(repr=False)
    grid: np.ndarray = field(repr=False)
    sci: Sci
    payload: np.ndarray = field(repr=False)


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


def encode_pscch(sci, vehicle_id, subframe_idx, cfg):
    seed = scrambling_seed(vehicle_id, subframe_idx, ScramblingStream.PSCCH)
    return block_symbols(sci.to_bits(), CrcKind.CONTROL16, pscch_re_count(cfg), Modulation.QPSK, seed)


def encode_pssch(payload, mcs, alloc, vehicle_id, subframe_idx, cfg):
    entry = mcs_lookup(mcs)
    n_re = pssch_re_count(cfg, alloc)
    tbs = tbs_for(entry, n_re)
    if len(payload) != tbs:
        raise ContractError(f'Payload of {len(payload)} bits, MCS {mcs} on {n_re} RE carries {tbs}')
    seed = scrambling_seed(vehicle_id, subframe_idx, ScramblingStream.PSSCH)
    return block_symbols(payload, CrcKind.DATA24, n_re, entry.modulation, seed)


def random_payload(mcs, alloc, cfg, rng):
    tbs = tbs_for(mcs_lookup(mcs), pssch_re_count(cfg, alloc))
    return rng.integers(0, 2, tbs, dtype=np.uint8)


def transmit_grid(payload, sci, alloc, ids, cfg, grid=None):
    """Frequency-domain image of one transmission, written into `grid`."""
    if sci.n_subchannels != alloc.n_subchannels:
        raise ContractError(f'SCI claims {sci.n_subchannels} sub-channels, allocation has {alloc.n_subchannels}')
    return map_subframe(
        cfg, alloc,
        encode_pscch(sci, ids.vehicle_id, ids.subframe_idx, cfg),
        encode_pssch(payload, sci.mcs, alloc, ids.vehicle_id, ids.subframe_idx, cfg),
        allocation_dmrs(cfg, alloc, ids.vehicle_id, ids.subframe_idx),
        grid=grid,
    )


def ofdm_modulate(grid, cfg, ofdm):
    """Unitary per-symbol IFFT with cyclic prefix, symbols concatenated."""
    freq = np.zeros((cfg.n_symbols, ofdm.fft_size), dtype=np.complex128)
    freq[:, ofdm.bins(cfg)] = grid
    time = np.fft.ifft(freq, axis=-1, norm='ortho')
    return np.concatenate([time[:, ofdm.fft_size - ofdm.cp_len:], time], axis=-1).ravel()


def scale_to_power(samples, tx_power_dbm):
    power = np.mean(np.abs(samples) ** 2)
    if power == 0:
        return samples
    return samples * np.sqrt(dbm_to_mw(tx_power_dbm) / power)


def build_tx_subframe(payload, sci, alloc, ids, cfg, ofdm, tx_power_dbm=0.0):
    grid = transmit_grid(payload, sci, alloc, ids, cfg)
    samples = scale_to_power(ofdm_modulate(grid, cfg, ofdm), tx_power_dbm)
    return TxSubframe(samples, grid, sci, np.asarray(payload, dtype=np.uint8))
