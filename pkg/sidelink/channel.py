"""
Stochastic stand-in for the over-the-air link.

Fading taps follow a random-amplitude sum of sinusoids: every tap is the sum
of 16 equal-power complex exponentials whose Doppler shifts sit at angles
(2*pi*k + theta0) / 16 of the classical ring of scatterers. The marginal is
exactly complex Gaussian and the ensemble autocorrelation is J0(2*pi*fd*tau).
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

CHANNEL_MODELS = ('ideal', 'awgn', 'rayleigh_flat', 'rayleigh_tdl')
FADING_MODELS = ('rayleigh_flat', 'rayleigh_tdl')
N_SINUSOIDS = 16
DEFAULT_SAMPLE_RATE = 512 * 15e3


@dataclass(frozen=True)
class ChannelConfig:
    model: str = 'rayleigh_tdl'
    doppler_hz: float = 60.0
    taps: tuple = ((0, 0.7), (4, 0.2), (9, 0.1))
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'taps', tuple((int(d), float(p)) for d, p in self.taps))
        if self.model not in CHANNEL_MODELS:
            raise ConfigError(f'Unknown channel model "{self.model}"')
        if self.doppler_hz < 0:
            raise ConfigError('Doppler frequency must be non-negative')
        if not self.taps or any(d < 0 or p < 0 for d, p in self.taps):
            raise ConfigError('Taps need non-negative delays and powers')
        if abs(sum(p for _, p in self.taps) - 1.0) > 1e-9:
            raise ConfigError('Tap powers must sum to 1')

    @property
    def is_fading(self):
        return self.model in FADING_MODELS

    @property
    def effective_taps(self):
        if self.model == 'rayleigh_tdl':
            return self.taps
        return ((0, 1.0),)

    def check_cp(self, cp_len):
        if any(d >= cp_len for d, _ in self.effective_taps):
            raise ConfigError(f'Tap delays must stay below the {cp_len}-sample cyclic prefix')
        return self


PROFILES = {
    'ideal': dict(model='ideal', doppler_hz=0.0, taps=((0, 1.0),)),
    'awgn': dict(model='awgn', doppler_hz=0.0, taps=((0, 1.0),)),
    'rayleigh_flat': dict(model='rayleigh_flat', doppler_hz=60.0, taps=((0, 1.0),)),
    'indoor-v2v': dict(model='rayleigh_tdl', doppler_hz=60.0, taps=((0, 0.7), (4, 0.2), (9, 0.1))),
}
PROFILE_CFO_HZ = {'indoor-v2v': 300.0}


def channel_profile(name, seed=1, **overrides):
    if name not in PROFILES:
        raise ConfigError(f'Unknown channel profile "{name}"')
    return ChannelConfig(seed=seed, **{**PROFILES[name], **overrides})


@dataclass(frozen=True)
class ImpairmentConfig:
    cfo_hz: float = 0.0
    timing_offset_samples: int = 0
    cfo_enabled: bool = True
    timing_enabled: bool = True

    def check_cp(self, cp_len):
        if abs(self.timing_offset_samples) >= cp_len:
            raise ConfigError(f'Timing offset must stay within the {cp_len}-sample cyclic prefix')
        return self


@dataclass(frozen=True)
class PowerCalibration:
    gain_offset_db: float = 30.0

    def snr_db(self, tx_power_dbm):
        return tx_power_dbm + self.gain_offset_db

    def noise_power_mw(self):
        return 10.0 ** (-self.gain_offset_db / 10.0)


@dataclass
class ChannelTrace:
    """True per-sample tap gains, for estimator oracles."""
    delays: np.ndarray
    gains: np.ndarray = field(repr=False)

    def frequency_response(self, cfg, ofdm):
        """True channel at every (symbol, subcarrier), sampled at symbol centres."""
        centres = np.arange(cfg.n_symbols) * ofdm.symbol_len + ofdm.cp_len + ofdm.fft_size // 2
        bins = ofdm.bins(cfg)
        ramps = np.exp(-2j * np.pi * np.outer(self.delays, bins) / ofdm.fft_size)
        return self.gains[:, centres].T @ ramps


class FadingChannel:
    """One link's channel; keeps Doppler phase continuity through `time_origin`."""

    def __init__(self, config, sample_rate=DEFAULT_SAMPLE_RATE):
        self.config = config
        self.sample_rate = sample_rate
        taps = config.effective_taps
        self.delays = np.array([d for d, _ in taps], dtype=np.int64)
        powers = np.array([p for _, p in taps])
        rng = np.random.default_rng(config.seed)
        theta0 = rng.uniform(-np.pi, np.pi, size=(len(taps), 1))
        angles = (2 * np.pi * np.arange(N_SINUSOIDS) + theta0) / N_SINUSOIDS
        self._freqs = config.doppler_hz * np.cos(angles)
        scale = np.sqrt(powers[:, None] / (2 * N_SINUSOIDS))
        self._amps = scale * (rng.standard_normal((len(taps), N_SINUSOIDS))
                              + 1j * rng.standard_normal((len(taps), N_SINUSOIDS)))

    def tap_gains(self, time_origin, n_samples):
        if not self.config.is_fading:
            return np.ones((1, n_samples), dtype=np.complex128)
        t = (time_origin + np.arange(n_samples)) / self.sample_rate
        rotors = np.exp(2j * np.pi * self._freqs[:, :, None] * t)
        return np.einsum('ks,ksn->kn', self._amps, rotors)

    def apply(self, samples, time_origin=0):
        samples = np.asarray(samples, dtype=np.complex128)
        gains = self.tap_gains(time_origin, len(samples))
        trace = ChannelTrace(self.delays.copy(), gains)
        if not self.config.is_fading:
            return samples.copy(), trace
        out = np.zeros_like(samples)
        for delay, gain in zip(self.delays, gains):
            out[delay:] += gain[delay:] * samples[:len(samples) - delay]
        return out, trace


def apply_channel(samples, config, time_origin=0, sample_rate=DEFAULT_SAMPLE_RATE):
    return FadingChannel(config, sample_rate).apply(samples, time_origin)


def add_awgn(samples, snr_db, reference_power, rng):
    samples = np.asarray(samples, dtype=np.complex128)
    if np.isinf(snr_db) and snr_db > 0:
        return samples.copy()
    var = reference_power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape)
    return samples + np.sqrt(var / 2) * noise


def apply_cfo(samples, cfo_hz, sample_rate):
    samples = np.asarray(samples, dtype=np.complex128)
    if cfo_hz == 0:
        return samples.copy()
    return samples * np.exp(2j * np.pi * cfo_hz * np.arange(len(samples)) / sample_rate)


def apply_timing_offset(samples, offset):
    """Circular shift; positive offsets arrive late."""
    return np.roll(np.asarray(samples, dtype=np.complex128), offset)


def apply_impairments(samples, impairments, sample_rate):
    if impairments.cfo_enabled:
        samples = apply_cfo(samples, impairments.cfo_hz, sample_rate)
    if impairments.timing_enabled and impairments.timing_offset_samples:
        samples = apply_timing_offset(samples, impairments.timing_offset_samples)
    return samples
