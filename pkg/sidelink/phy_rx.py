"""
Buffered whole-subframe receiver.

A subframe is demodulated in one piece and re-aligned when the DMRS phase
ramp shows a late or early arrival, the CFO is measured on the DMRS columns
and removed per symbol, the channel is estimated on every pool
subcarrier, the PSCCH is searched blindly on each sub-channel, and each
detected SCI drives the PSSCH decode of its claimed sub-channels.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .coding import MAX_MCS, CrcKind, Modulation, ScramblingStream, decode_blocks, mcs_lookup, tbs_for
from .exceptions import AllocationError, ContractError
from .grid import Allocation, pool_dmrs, pssch_re_count, resource_map
from .phy_tx import SCI_BITS, LinkIds, OfdmConfig, Sci

EQUALIZERS = ('mmse', 'zf')
_UNRELIABLE_VAR = 1e12


@dataclass(frozen=True)
class ReceiverConfig:
    cfo_correction: bool = True
    timing_correction: bool = True
    equalizer: str = 'mmse'


@dataclass
class ChannelEstimate:
    gains: np.ndarray = field(repr=False)
    noise_var: float


@dataclass
class Equalized:
    symbols: np.ndarray = field(repr=False)
    noise_var: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)

    def unbiased(self):
        """Symbols scaled back onto the constellation and their noise variance."""
        ok = self.bias > 0
        safe = np.where(ok, self.bias, 1.0)
        symbols = np.where(ok, self.symbols / safe, 0)
        var = np.where(ok, self.noise_var / safe ** 2, _UNRELIABLE_VAR)
        return symbols, var


@dataclass
class DecodedBlock:
    start_subchannel: int
    payload: np.ndarray = field(repr=False)
    crc_pass: bool
    mcs: int
    n_re: int


@dataclass
class RxResult:
    detected_scis: list
    blocks: list
    channel_estimate: np.ndarray = field(repr=False)
    noise_var_estimate: float
    cfo_estimate_hz: float
    timing_offset_estimate: int = 0

    def block_at(self, start_subchannel):
        return next((b for b in self.blocks if b.start_subchannel == start_subchannel), None)


@dataclass
class FrontEnd:
    grid: np.ndarray = field(repr=False)
    estimate: ChannelEstimate
    cfo_hz: float
    ids: LinkIds
    timing_offset: int = 0


def ofdm_demodulate(samples, cfg, ofdm, advance=None):
    """
    FFT of every symbol's useful part, on the pool subcarriers.

    The window opens `advance` samples early (half the CP by default), so
    both early and late arrivals of up to that many samples stay inside the
    symbol. The resulting phase ramp is removed again.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    expected = ofdm.subframe_len(cfg)
    if samples.shape[-1] != expected:
        raise ContractError(f'Subframe needs {expected} samples, got {samples.shape[-1]}')
    advance = ofdm.cp_len // 2 if advance is None else advance
    if not 0 <= advance <= ofdm.cp_len:
        raise ContractError(f'Window advance must lie in [0, {ofdm.cp_len}], got {advance}')
    start = ofdm.cp_len - advance
    symbols = samples.reshape(cfg.n_symbols, ofdm.symbol_len)[:, start:start + ofdm.fft_size]
    bins = ofdm.bins(cfg)
    return np.fft.fft(symbols, axis=-1, norm='ortho')[:, bins] * np.exp(2j * np.pi * bins * advance / ofdm.fft_size)


def _dmrs_ls(grid, cfg, dmrs_expected):
    # DMRS is unit magnitude, so rx / expected == rx * conj(expected)
    return grid[list(cfg.dmrs_symbols), :] * np.conj(dmrs_expected)


def estimate_cfo(grid, cfg, dmrs_expected, ofdm=OfdmConfig()):
    if len(cfg.dmrs_symbols) < 2:
        raise ContractError('CFO estimation needs at least two DMRS symbols')
    ls = _dmrs_ls(grid, cfg, dmrs_expected)
    corr = np.sum(np.conj(ls[:-1]) * ls[1:], axis=-1)
    spacing = np.diff(ofdm.symbol_times(cfg)[list(cfg.dmrs_symbols)])
    weights = np.abs(corr)
    if not weights.any():
        return 0.0
    return float(np.average(np.angle(corr) / (2 * np.pi * spacing), weights=weights))


def correct_cfo(grid, cfo_hz, cfg, ofdm):
    return grid * np.exp(-2j * np.pi * cfo_hz * ofdm.symbol_times(cfg))[:, None]


def _ramp_step(ls):
    """Mean phase step between neighbouring subcarriers, radians."""
    corr = np.sum(np.conj(ls[..., :-1]) * ls[..., 1:])
    return float(np.angle(corr)) if corr else 0.0


def estimate_timing(grid, cfg, dmrs_expected, ofdm=OfdmConfig()):
    """Arrival delay in samples (positive is late) from the DMRS phase ramp."""
    ls = _dmrs_ls(grid, cfg, dmrs_expected)
    return -ofdm.fft_size * _ramp_step(ls) / (2 * np.pi)


@lru_cache(maxsize=16)
def _time_weights(cfg):
    # column j interpolates DMRS column j onto every symbol; ends hold the nearest value
    symbols = np.arange(cfg.n_symbols)
    eye = np.eye(len(cfg.dmrs_symbols))
    weights = np.stack([np.interp(symbols, cfg.dmrs_symbols, eye[j]) for j in range(len(cfg.dmrs_symbols))], axis=1)
    weights.flags.writeable = False
    return weights


def estimate_channel(grid, cfg, alloc, dmrs_expected):
    """
    LS at the DMRS cells, linear interpolation across time.

    `dmrs_expected` is the pool-wide DMRS matrix; the estimate covers the
    allocation's subcarriers. Noise variance comes from each DMRS value's
    residual against the mean of its two frequency neighbours inside the
    same sub-channel (E|r|^2 = 1.5 sigma^2), after the common delay ramp
    has been turned back.
    """
    cols = alloc.check(cfg).subcarriers(cfg)
    ls = _dmrs_ls(grid[:, cols], cfg, np.asarray(dmrs_expected)[:, cols])
    gains = _time_weights(cfg) @ ls
    per_sub = ls.reshape(len(cfg.dmrs_symbols), alloc.n_subchannels, cfg.sc_per_subchannel)
    if cfg.sc_per_subchannel < 3:
        return ChannelEstimate(gains, 0.0)
    per_sub = per_sub * np.exp(-1j * _ramp_step(per_sub) * np.arange(cfg.sc_per_subchannel))
    resid = per_sub[..., 1:-1] - 0.5 * (per_sub[..., :-2] + per_sub[..., 2:])
    return ChannelEstimate(gains, float(np.mean(np.abs(resid) ** 2) / 1.5))


def equalize(cells, gains, noise_var):
    """MMSE per cell; noise_var=0 gives zero forcing."""
    cells = np.asarray(cells, dtype=np.complex128)
    power = np.abs(gains) ** 2
    denom = power + noise_var
    ok = denom > 0
    safe = np.where(ok, denom, 1.0)
    symbols = np.where(ok, np.conj(gains) * cells / safe, 0)
    bias = np.where(ok, power / safe, 0.0)
    return Equalized(symbols, bias * (1 - bias), bias)


def zero_forcing(cells, gains, noise_var):
    """y / h with the per-cell noise variance noise_var / |h|^2."""
    cells = np.asarray(cells, dtype=np.complex128)
    power = np.abs(gains) ** 2
    ok = power > 0
    safe = np.where(ok, power, 1.0)
    symbols = np.where(ok, np.conj(gains) * cells / safe, 0)
    return symbols, np.where(ok, max(noise_var, 1e-12) / safe, _UNRELIABLE_VAR)


class SidelinkReceiver:

    def __init__(self, cfg, ofdm=OfdmConfig(), rx=ReceiverConfig()):
        self.cfg = cfg
        self.ofdm = ofdm
        self.rx = rx
        self.pool = Allocation(0, cfg.n_subchannels)

    def front_end(self, samples, ids):
        dmrs = pool_dmrs(self.cfg, ids.vehicle_id, ids.subframe_idx)
        grid = ofdm_demodulate(samples, self.cfg, self.ofdm)
        offset = 0
        if self.rx.timing_correction:
            offset = int(round(estimate_timing(grid, self.cfg, dmrs, self.ofdm)))
            # within a quarter CP the early window already holds the whole symbol
            if abs(offset) > self.ofdm.cp_len // 4:
                grid = ofdm_demodulate(np.roll(samples, -offset), self.cfg, self.ofdm)
                offset += int(round(estimate_timing(grid, self.cfg, dmrs, self.ofdm)))
        return self._front_end(grid, ids, dmrs, offset)

    def front_end_grid(self, grid, ids):
        return self._front_end(grid, ids, pool_dmrs(self.cfg, ids.vehicle_id, ids.subframe_idx))

    def _front_end(self, grid, ids, dmrs, offset=0):
        cfo = estimate_cfo(grid, self.cfg, dmrs, self.ofdm)
        if self.rx.cfo_correction:
            grid = correct_cfo(grid, cfo, self.cfg, self.ofdm)
        return FrontEnd(grid, estimate_channel(grid, self.cfg, self.pool, dmrs), cfo, ids, offset)

    def _soft_cells(self, fe, cells):
        rows, cols = cells
        gains = fe.estimate.gains[rows, cols]
        received = fe.grid[rows, cols]
        if self.rx.equalizer == 'zf':
            return zero_forcing(received, gains, fe.estimate.noise_var)
        return equalize(received, gains, fe.estimate.noise_var).unbiased()

    def blind_search(self, front_ends):
        """Detected (start, Sci) pairs for each front end."""
        n_sub = self.cfg.n_subchannels
        symbols, noise, seeds = [], [], []
        for fe in front_ends:
            for s in range(n_sub):
                sym, var = self._soft_cells(fe, resource_map(self.cfg, Allocation(s, 1)).pscch)
                symbols.append(sym)
                noise.append(var)
                seeds.append(fe.ids.seed(ScramblingStream.PSCCH))
        if not symbols or not symbols[0].size:
            return [[] for _ in front_ends]
        bits, ok = decode_blocks(np.array(symbols), np.array(noise), Modulation.QPSK, seeds,
                                 SCI_BITS, CrcKind.CONTROL16)
        detections = []
        for f in range(len(front_ends)):
            found, claimed_to = [], 0
            for s in range(n_sub):
                row = f * n_sub + s
                sci = _parse_sci(bits[row]) if ok[row] else None
                if sci is None or sci.mcs > MAX_MCS or s + sci.n_subchannels > n_sub or s < claimed_to:
                    continue
                found.append((s, sci))
                claimed_to = s + sci.n_subchannels
            detections.append(found)
        return detections

    def decode_shared(self, front_ends, detections):
        """Decode every detected PSSCH, batching blocks of equal shape."""
        blocks = [[None] * len(found) for found in detections]
        groups = defaultdict(list)
        for f, found in enumerate(detections):
            for i, (s, sci) in enumerate(found):
                groups[(sci.mcs, sci.n_subchannels)].append((f, i, s))
        for (mcs, width), members in groups.items():
            entry = mcs_lookup(mcs)
            n_re = pssch_re_count(self.cfg, Allocation(0, width))
            try:
                tbs = tbs_for(entry, n_re)
            except AllocationError:
                for f, i, s in members:
                    blocks[f][i] = DecodedBlock(s, np.zeros(0, dtype=np.uint8), False, mcs, n_re)
                continue
            symbols, noise, seeds = [], [], []
            for f, i, s in members:
                sym, var = self._soft_cells(front_ends[f], resource_map(self.cfg, Allocation(s, width)).pssch)
                symbols.append(sym)
                noise.append(var)
                seeds.append(front_ends[f].ids.seed(ScramblingStream.PSSCH))
            payloads, ok = decode_blocks(np.array(symbols), np.array(noise), entry.modulation, seeds,
                                         tbs, CrcKind.DATA24)
            for row, (f, i, s) in enumerate(members):
                blocks[f][i] = DecodedBlock(s, payloads[row], bool(ok[row]), mcs, n_re)
        return blocks

    def receive_batch(self, subframes):
        """`subframes` is a sequence of (samples, LinkIds); returns one RxResult each."""
        front_ends = [self.front_end(samples, ids) for samples, ids in subframes]
        return self._results(front_ends)

    def receive_grids(self, grids):
        front_ends = [self.front_end_grid(grid, ids) for grid, ids in grids]
        return self._results(front_ends)

    def _results(self, front_ends):
        detections = self.blind_search(front_ends)
        blocks = self.decode_shared(front_ends, detections)
        return [
            RxResult(found, decoded, fe.estimate.gains, fe.estimate.noise_var, fe.cfo_hz, fe.timing_offset)
            for fe, found, decoded in zip(front_ends, detections, blocks)
        ]

    def receive_subframe(self, samples, ids):
        return self.receive_batch([(samples, ids)])[0]


def _parse_sci(bits):
    try:
        return Sci.from_bits(bits)
    except ContractError:
        return None


def blind_decode_pscch(grid, cfg, vehicle_id, subframe_idx, rx=ReceiverConfig(), ofdm=OfdmConfig()):
    receiver = SidelinkReceiver(cfg, ofdm, rx)
    fe = receiver.front_end_grid(grid, LinkIds(vehicle_id, subframe_idx))
    return receiver.blind_search([fe])[0]


def decode_pssch(grid, cfg, sci, start_subchannel, ids, rx=ReceiverConfig(), ofdm=OfdmConfig()):
    receiver = SidelinkReceiver(cfg, ofdm, rx)
    fe = receiver.front_end_grid(grid, ids)
    block = receiver.decode_shared([fe], [[(start_subchannel, sci)]])[0][0]
    return block.payload, block.crc_pass


def receive_subframe(samples, cfg, ofdm, ids, rx=ReceiverConfig()):
    return SidelinkReceiver(cfg, ofdm, rx).receive_subframe(samples, ids)
