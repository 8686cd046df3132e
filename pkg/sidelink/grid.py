"""
Rel-14 sidelink subframe geometry.

The grid is a complex array of shape (n_symbols, pool subcarriers). Within an
allocation the PSCCH takes the lowest `pscch_width_sc` subcarriers of the
first sub-channel on every data symbol, the PSSCH takes the remaining
allocated subcarriers of the data symbols, and the DMRS rows span the whole
allocation. Symbols are mapped frequency first, then time.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coding import Modulation, ScramblingStream, lfsr_bits, modulate, scrambling_seed
from .exceptions import AllocationError, ConfigError, ContractError


@dataclass(frozen=True)
class GridConfig:
    n_symbols: int = 14
    sc_per_subchannel: int = 48
    n_subchannels: int = 6
    dmrs_symbols: tuple = (2, 5, 8, 11)
    agc_symbol: int = 0
    guard_symbol: int = 13
    pscch_width_sc: int = 12

    def __post_init__(self):
        object.__setattr__(self, 'dmrs_symbols', tuple(self.dmrs_symbols))
        self.validate()

    def validate(self):
        reserved = list(self.dmrs_symbols) + [self.agc_symbol, self.guard_symbol]
        if len(set(reserved)) != len(reserved):
            raise ConfigError('DMRS, AGC and guard symbols must be pairwise disjoint')
        if any(not 0 <= s < self.n_symbols for s in reserved):
            raise ConfigError(f'Symbol indices must lie in 0..{self.n_symbols - 1}')
        if list(self.dmrs_symbols) != sorted(self.dmrs_symbols):
            raise ConfigError('DMRS symbols must be listed in ascending order')
        if self.n_subchannels < 1 or self.sc_per_subchannel < 1:
            raise ConfigError('The pool needs at least one non-empty sub-channel')
        if not 0 <= self.pscch_width_sc <= self.sc_per_subchannel:
            raise ConfigError('PSCCH width must fit inside one sub-channel')

    @property
    def n_subcarriers(self):
        return self.sc_per_subchannel * self.n_subchannels

    @property
    def data_symbols(self):
        reserved = set(self.dmrs_symbols) | {self.agc_symbol, self.guard_symbol}
        return tuple(s for s in range(self.n_symbols) if s not in reserved)

    @property
    def n_data_symbols(self):
        return self.n_symbols - 2 - len(self.dmrs_symbols)


@dataclass(frozen=True)
class Allocation:
    start_subchannel: int
    n_subchannels: int = 1

    @property
    def stop_subchannel(self):
        return self.start_subchannel + self.n_subchannels

    def check(self, cfg):
        if self.n_subchannels < 1 or self.start_subchannel < 0 or self.stop_subchannel > cfg.n_subchannels:
            raise AllocationError(
                f'Sub-channels {self.start_subchannel}..{self.stop_subchannel - 1} '
                f'outside a pool of {cfg.n_subchannels}')
        return self

    def subcarriers(self, cfg):
        return np.arange(self.start_subchannel * cfg.sc_per_subchannel, self.stop_subchannel * cfg.sc_per_subchannel)


@dataclass(frozen=True)
class ResourceMap:
    pscch: tuple
    pssch: tuple
    dmrs: tuple


def _cells(rows, cols):
    rr, cc = np.meshgrid(np.asarray(rows), np.asarray(cols), indexing='ij')
    rr, cc = rr.ravel(), cc.ravel()
    rr.flags.writeable = False
    cc.flags.writeable = False
    return rr, cc


@lru_cache(maxsize=256)
def resource_map(cfg, alloc):
    """Cell coordinates of each region, in mapping order."""
    alloc.check(cfg)
    cols = alloc.subcarriers(cfg)
    ctrl = cols[:cfg.pscch_width_sc]
    data = cols[cfg.pscch_width_sc:]
    return ResourceMap(
        pscch=_cells(cfg.data_symbols, ctrl),
        pssch=_cells(cfg.data_symbols, data),
        dmrs=_cells(cfg.dmrs_symbols, cols),
    )


def pssch_re_count(cfg, alloc):
    alloc.check(cfg)
    return cfg.n_data_symbols * (alloc.n_subchannels * cfg.sc_per_subchannel - cfg.pscch_width_sc)


def pscch_re_count(cfg):
    return cfg.n_data_symbols * cfg.pscch_width_sc


def dmrs_re_count(cfg, alloc):
    return len(cfg.dmrs_symbols) * alloc.n_subchannels * cfg.sc_per_subchannel


def empty_grid(cfg):
    return np.zeros((cfg.n_symbols, cfg.n_subcarriers), dtype=np.complex128)


def _expect_len(name, seq, expected):
    if len(seq) != expected:
        raise ContractError(f'{name} carries {len(seq)} symbols, allocation needs {expected}')


def map_subframe(cfg, alloc, pscch_syms, pssch_syms, dmrs_seq, grid=None):
    """Write one transmission into `grid` (a fresh zero grid by default)."""
    rmap = resource_map(cfg, alloc)
    _expect_len('PSCCH', pscch_syms, pscch_re_count(cfg))
    _expect_len('PSSCH', pssch_syms, pssch_re_count(cfg, alloc))
    _expect_len('DMRS', dmrs_seq, dmrs_re_count(cfg, alloc))
    grid = empty_grid(cfg) if grid is None else grid
    grid[rmap.pscch] = pscch_syms
    grid[rmap.pssch] = pssch_syms
    grid[rmap.dmrs] = dmrs_seq
    cols = alloc.subcarriers(cfg)
    grid[cfg.agc_symbol, cols] = grid[cfg.agc_symbol + 1, cols]
    grid[cfg.guard_symbol, cols] = 0
    return grid


def extract_subframe(cfg, alloc, grid):
    grid = np.asarray(grid)
    if grid.shape[-2:] != (cfg.n_symbols, cfg.n_subcarriers):
        raise ContractError(f'Grid {grid.shape} does not match {cfg.n_symbols}x{cfg.n_subcarriers}')
    rmap = resource_map(cfg, alloc)
    return grid[(..., *rmap.pscch)], grid[(..., *rmap.pssch)], grid[(..., *rmap.dmrs)]


def dmrs_sequence(vehicle_id, subframe_idx, length):
    """Unit-magnitude QPSK reference sequence from the scrambler LFSR."""
    if length <= 0:
        raise ContractError('DMRS length must be positive')
    seed = scrambling_seed(vehicle_id, subframe_idx, ScramblingStream.DMRS)
    return modulate(lfsr_bits(seed, 2 * length), Modulation.QPSK)


def pool_dmrs(cfg, vehicle_id, subframe_idx):
    """Pool-wide DMRS as a (n_dmrs_symbols, n_subcarriers) matrix."""
    seq = dmrs_sequence(vehicle_id, subframe_idx, len(cfg.dmrs_symbols) * cfg.n_subcarriers)
    return seq.reshape(len(cfg.dmrs_symbols), cfg.n_subcarriers)


def allocation_dmrs(cfg, alloc, vehicle_id, subframe_idx):
    """DMRS of one allocation, laid out in map_subframe order."""
    alloc.check(cfg)
    return pool_dmrs(cfg, vehicle_id, subframe_idx)[:, alloc.subcarriers(cfg)].ravel()
