"""
Bit-level processing shared by the transmit and receive chains.

CRC attachment, the rate-1/3 convolutional code with its soft Viterbi
decoder, circular-buffer rate matching, LFSR scrambling, Gray-mapped QAM and
max-log soft demapping, and the MCS table.
"""
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import AllocationError, ConfigError, ContractError


class Modulation(enum.IntEnum):
    QPSK = 2
    QAM16 = 4
    QAM64 = 6

    @property
    def bits_per_symbol(self):
        return int(self)


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation: Modulation
    code_rate: float

    @property
    def bits_per_symbol(self):
        return self.modulation.bits_per_symbol


MAX_MCS = 28


def _code_rate(index):
    if index <= 9:
        rate = 0.10 + 0.05 * index
    elif index <= 16:
        rate = 0.33 + 0.045 * (index - 10)
    else:
        rate = 0.43 + 0.0455 * (index - 17)
    return round(rate, 4)


def _modulation(index):
    if index <= 9:
        return Modulation.QPSK
    if index <= 16:
        return Modulation.QAM16
    return Modulation.QAM64


MCS_TABLE = tuple(McsEntry(i, _modulation(i), _code_rate(i)) for i in range(MAX_MCS + 1))


def mcs_lookup(index):
    if not 0 <= index <= MAX_MCS:
        raise AllocationError(f'MCS index {index} outside 0..{MAX_MCS}')
    return MCS_TABLE[index]


# --- CRC --------------------------------------------------------------------

class CrcKind(enum.Enum):
    DATA24 = (24, 0x1864CFB)
    CONTROL16 = (16, 0x11021)

    @property
    def length(self):
        return self.value[0]

    @property
    def poly(self):
        return self.value[1]


CRC_DATA_LEN = CrcKind.DATA24.length


def tbs_for(mcs, n_re):
    """Transport block size in bits for `n_re` data resource elements."""
    if n_re <= 0:
        raise AllocationError('Allocation carries no data resource elements')
    raw = n_re * mcs.bits_per_symbol * mcs.code_rate - CRC_DATA_LEN
    tbs = math.floor(raw / 8 + 1e-9) * 8
    if tbs < 8:
        raise AllocationError(f'Allocation of {n_re} RE too small for MCS {mcs.index}')
    return tbs


@lru_cache(maxsize=64)
def _crc_matrix(n_bits, kind):
    # Row i holds x^(n-1-i+L) mod g(x), so remainder = bits @ M (mod 2).
    length, poly = kind.length, kind.poly
    weights = np.arange(length - 1, -1, -1)
    matrix = np.zeros((n_bits, length), dtype=np.float32)
    rem = poly ^ (1 << length)
    for k in range(n_bits):
        matrix[n_bits - 1 - k] = (rem >> weights) & 1
        rem <<= 1
        if rem >> length & 1:
            rem ^= poly
    matrix.flags.writeable = False
    return matrix


def crc_remainder(bits, kind):
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1] + (kind.length,), dtype=np.uint8)
    acc = bits.astype(np.float32) @ _crc_matrix(bits.shape[-1], kind)
    return (np.rint(acc).astype(np.int64) % 2).astype(np.uint8)


def crc_attach(bits, kind):
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc_remainder(bits, kind)], axis=-1)


def crc_check(bits, kind):
    """True where the trailing CRC matches the payload (vectorised over rows)."""
    bits = np.asarray(bits, dtype=np.uint8)
    payload, parity = bits[..., :-kind.length], bits[..., -kind.length:]
    ok = np.all(crc_remainder(payload, kind) == parity, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


# --- Convolutional code -----------------------------------------------------

GENERATORS = (0o133, 0o171, 0o165)
CONSTRAINT_LENGTH = 7
TAIL_BITS = CONSTRAINT_LENGTH - 1
N_STATES = 1 << TAIL_BITS
CODE_RATE_INV = len(GENERATORS)

# _TAPS[g, d] is the tap of generator g on the input delayed by d steps.
_TAPS = np.array([[(g >> (TAIL_BITS - d)) & 1 for d in range(CONSTRAINT_LENGTH)] for g in GENERATORS],
                 dtype=np.uint8)


def coded_length(n_bits):
    return CODE_RATE_INV * (n_bits + TAIL_BITS)


def conv_encode(bits):
    """Rate-1/3, K=7 zero-tail encoder; output interleaves the three generators."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = np.zeros(bits.shape[:-1] + (TAIL_BITS,), dtype=np.uint8)
    padded = np.concatenate([pad, bits, pad], axis=-1)
    windows = sliding_window_view(padded, CONSTRAINT_LENGTH, axis=-1)[..., ::-1]
    out = (windows.astype(np.uint16) @ _TAPS.T.astype(np.uint16)) % 2
    return out.reshape(bits.shape[:-1] + (-1,)).astype(np.uint8)


def _trellis():
    # state bit 5 is the previous input, bit 0 the input six steps back
    pred = np.zeros((N_STATES, 2), dtype=np.int64)
    code = np.zeros((N_STATES, 2), dtype=np.int64)
    for nxt in range(N_STATES):
        bit = nxt >> (TAIL_BITS - 1)
        for x in (0, 1):
            prev = ((nxt & (N_STATES // 2 - 1)) << 1) | x
            reg = np.array([bit] + [(prev >> (TAIL_BITS - d)) & 1 for d in range(1, CONSTRAINT_LENGTH)])
            out = (_TAPS @ reg) % 2
            pred[nxt, x] = prev
            code[nxt, x] = int(out[0]) << 2 | int(out[1]) << 1 | int(out[2])
    patterns = np.array([[(p >> (2 - i)) & 1 for i in range(3)] for p in range(8)])
    return pred, code, (1.0 - 2.0 * patterns).T


_PRED, _CODE, _PATTERN_SIGNS = _trellis()
_SURVIVOR_CELLS = 1 << 26


def viterbi_decode(llrs):
    """
    Maximum-likelihood decoding of zero-tail codewords from soft inputs.

    `llrs` is one codeword (1-D) or a batch of equal-length codewords (2-D);
    positive LLR means bit 0. Returns the information bits without the tail.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape[-1] % CODE_RATE_INV:
        raise ContractError(f'LLR length {llrs.shape[-1]} is not a multiple of {CODE_RATE_INV}')
    single = llrs.ndim == 1
    batch = llrs.reshape(-1, llrs.shape[-1])
    steps = batch.shape[1] // CODE_RATE_INV
    if steps <= TAIL_BITS:
        raise ContractError('Codeword shorter than the encoder tail')
    chunk = max(1, _SURVIVOR_CELLS // (steps * N_STATES))
    decoded = np.concatenate([_viterbi_chunk(batch[i:i + chunk], steps) for i in range(0, len(batch), chunk)])
    return decoded[0] if single else decoded


def _viterbi_chunk(llrs, steps):
    rows = np.arange(llrs.shape[0])
    triples = llrs.reshape(len(rows), steps, CODE_RATE_INV)
    metric = np.full((len(rows), N_STATES), -np.inf)
    metric[:, 0] = 0.0
    survivors = np.empty((steps, len(rows), N_STATES), dtype=bool)
    for t in range(steps):
        branch = triples[:, t, :] @ _PATTERN_SIGNS
        cand = metric[:, _PRED] + branch[:, _CODE]
        choice = cand[..., 1] > cand[..., 0]
        survivors[t] = choice
        metric = np.where(choice, cand[..., 1], cand[..., 0])
    state = np.zeros(len(rows), dtype=np.int64)
    bits = np.empty((len(rows), steps), dtype=np.uint8)
    for t in range(steps - 1, -1, -1):
        bits[:, t] = state >> (TAIL_BITS - 1)
        state = ((state & (N_STATES // 2 - 1)) << 1) | survivors[t, rows, state]
    return bits[:, :steps - TAIL_BITS]


def path_metric(llrs, bits):
    """Correlation metric the decoder maximises, for brute-force oracles."""
    signs = 1.0 - 2.0 * conv_encode(bits)
    return float(np.dot(np.asarray(llrs, dtype=np.float64), signs))


# --- Rate matching ----------------------------------------------------------

def rate_match_indices(source_len, target_len):
    if source_len <= 0 or target_len <= 0:
        raise ContractError('Rate matching needs non-empty source and target')
    positions = np.arange(target_len)
    if target_len >= source_len:
        return positions % source_len
    return (positions * source_len) // target_len


def rate_match(coded, target_len):
    coded = np.asarray(coded)
    return coded[..., rate_match_indices(coded.shape[-1], target_len)]


def rate_dematch(llrs, source_len):
    """Receiver inverse: sum repeated LLRs, zero LLRs at punctured positions."""
    llrs = np.asarray(llrs, dtype=np.float64)
    target_len = llrs.shape[-1]
    lead = llrs.shape[:-1]
    if target_len >= source_len:
        folds = -(-target_len // source_len)
        padded = np.zeros(lead + (folds * source_len,))
        padded[..., :target_len] = llrs
        return padded.reshape(lead + (folds, source_len)).sum(axis=-2)
    out = np.zeros(lead + (source_len,))
    out[..., rate_match_indices(source_len, target_len)] = llrs
    return out


# --- Scrambling -------------------------------------------------------------

class ScramblingStream(enum.IntEnum):
    PSCCH = 1
    PSSCH = 2
    DMRS = 3


SEED_BITS = 31


def scrambling_seed(vehicle_id, subframe_idx, stream):
    return ((vehicle_id & 0x7FFF) << 16) | ((subframe_idx % 10240) << 2) | int(stream)


@lru_cache(maxsize=4096)
def lfsr_bits(seed, n_bits):
    """x^31 + x^3 + 1 sequence: output is state bit 0, one shift per bit."""
    if not 0 < seed < (1 << SEED_BITS):
        raise ConfigError(f'Scrambler seed must be a non-zero {SEED_BITS}-bit value, got {seed}')
    x = np.zeros(n_bits + SEED_BITS, dtype=np.uint8)
    x[:SEED_BITS] = (seed >> np.arange(SEED_BITS)) & 1
    done = 0
    while done < n_bits:
        step = min(SEED_BITS - 3, n_bits - done)
        x[done + SEED_BITS:done + SEED_BITS + step] = x[done + 3:done + 3 + step] ^ x[done:done + step]
        done += step
    out = x[:n_bits]
    out.flags.writeable = False
    return out


def scramble(bits, seed):
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ lfsr_bits(seed, bits.shape[-1])


def descramble_llrs(llrs, seed):
    llrs = np.asarray(llrs, dtype=np.float64)
    return llrs * (1.0 - 2.0 * lfsr_bits(seed, llrs.shape[-1]))


# --- Constellations ---------------------------------------------------------

def _pam_levels(axis_bits):
    # Gray PAM amplitude: first bit is the sign, the rest pick the magnitude
    signs = 1 - 2 * axis_bits.astype(np.int64)
    inner = np.ones(axis_bits.shape[:-1], dtype=np.int64)
    m = axis_bits.shape[-1]
    for k in range(m - 1, 0, -1):
        inner = 2 ** (m - k) - signs[..., k] * inner
    return signs[..., 0] * inner


@dataclass(frozen=True)
class Constellation:
    modulation: Modulation
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)


@lru_cache(maxsize=None)
def constellation(modulation):
    bps = modulation.bits_per_symbol
    labels = (np.arange(1 << bps)[:, None] >> np.arange(bps - 1, -1, -1)) & 1
    raw = _pam_levels(labels[:, 0::2]) + 1j * _pam_levels(labels[:, 1::2])
    points = raw / np.sqrt(np.mean(np.abs(raw) ** 2))
    points.flags.writeable = False
    labels.flags.writeable = False
    return Constellation(modulation, points, labels.astype(np.uint8))


def modulate(bits, modulation):
    bits = np.asarray(bits, dtype=np.uint8)
    bps = modulation.bits_per_symbol
    if bits.shape[-1] % bps:
        raise ContractError(f'{bits.shape[-1]} bits do not fill {modulation.name} symbols')
    groups = bits.reshape(bits.shape[:-1] + (-1, bps)).astype(np.int64)
    index = groups @ (1 << np.arange(bps - 1, -1, -1))
    return constellation(modulation).points[index]


def soft_demod(symbols, modulation, noise_var):
    """Max-log LLRs; positive favours bit 0. `noise_var` broadcasts against `symbols`."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    const = constellation(modulation)
    dist = np.abs(symbols[..., None] - const.points) ** 2
    noise = np.maximum(np.broadcast_to(np.asarray(noise_var, dtype=np.float64), symbols.shape), 1e-12)
    llrs = np.empty(symbols.shape + (modulation.bits_per_symbol,))
    for j in range(modulation.bits_per_symbol):
        ones = const.labels[:, j].astype(bool)
        llrs[..., j] = (dist[..., ones].min(axis=-1) - dist[..., ~ones].min(axis=-1)) / noise
    return llrs.reshape(symbols.shape[:-1] + (-1,))


# --- Block chain ------------------------------------------------------------

@dataclass(frozen=True)
class CodedBlock:
    payload_bits: np.ndarray = field(repr=False)
    crc_bits: np.ndarray = field(repr=False)
    coded_bits: np.ndarray = field(repr=False)


def encode_block(payload, kind, target_len):
    """CRC -> convolutional code -> rate matching to exactly `target_len` bits."""
    payload = np.asarray(payload, dtype=np.uint8)
    with_crc = crc_attach(payload, kind)
    coded = rate_match(conv_encode(with_crc), target_len)
    return CodedBlock(payload, with_crc[..., payload.shape[-1]:], coded)


def block_symbols(payload, kind, n_symbols, modulation, seed):
    block = encode_block(payload, kind, n_symbols * modulation.bits_per_symbol)
    return modulate(scramble(block.coded_bits, seed), modulation)


def decode_blocks(symbols, noise_var, modulation, seeds, payload_len, kind):
    """
    Inverse chain for a batch of equally shaped blocks.

    `symbols` and `noise_var` are (batch, n_symbols); `seeds` holds one
    scrambling seed per row. Returns (payloads, crc_pass) arrays.
    """
    symbols = np.atleast_2d(symbols)
    noise_var = np.broadcast_to(noise_var, symbols.shape)
    llrs = soft_demod(symbols, modulation, noise_var)
    llrs = np.stack([descramble_llrs(row, seed) for row, seed in zip(llrs, seeds)])
    soft = rate_dematch(llrs, coded_length(payload_len + kind.length))
    bits = viterbi_decode(soft)
    return bits[:, :payload_len], crc_check(bits, kind)
