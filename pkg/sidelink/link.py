"""One transmitter-receiver pair: phy_tx -> channel -> impairments -> noise -> phy_rx."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, FadingChannel, ImpairmentConfig, PowerCalibration, add_awgn, apply_impairments
from .grid import Allocation, GridConfig
from .phy_rx import ReceiverConfig, SidelinkReceiver
from .phy_tx import LinkIds, OfdmConfig, Sci, build_tx_subframe, dbm_to_mw, random_payload

logger = logging.getLogger(__name__)

RX_BATCH = 32


@dataclass(frozen=True)
class LinkConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    impairments: ImpairmentConfig = field(default_factory=ImpairmentConfig)
    calibration: PowerCalibration = field(default_factory=PowerCalibration)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    alloc: Allocation = Allocation(0, 6)
    vehicle_id: int = 1

    def __post_init__(self):
        self.alloc.check(self.grid)
        self.ofdm.bins(self.grid)
        self.channel.check_cp(self.ofdm.cp_len)
        self.impairments.check_cp(self.ofdm.cp_len)

    @property
    def noiseless(self):
        return self.channel.model == 'ideal'


@dataclass(frozen=True)
class BlockOutcome:
    subframe_idx: int
    crc_pass: bool
    tb_bits: int
    sci_detected: bool
    payload_exact: bool


class LinkSimulator:

    def __init__(self, config, channel_seed=None):
        self.config = config
        channel = config.channel if channel_seed is None else replace(config.channel, seed=int(channel_seed))
        self.channel = FadingChannel(channel, config.ofdm.sample_rate)
        self.receiver = SidelinkReceiver(config.grid, config.ofdm, config.receiver)

    def sci_for(self, mcs, rri_code=0, priority=0):
        return Sci(mcs, self.config.alloc.n_subchannels, rri_code, priority)

    def propagate(self, samples, subframe_idx, tx_power_dbm, rng):
        cfg = self.config
        faded, _ = self.channel.apply(samples, subframe_idx * cfg.ofdm.subframe_len(cfg.grid))
        impaired = apply_impairments(faded, cfg.impairments, cfg.ofdm.sample_rate)
        if cfg.noiseless:
            return impaired
        return add_awgn(impaired, cfg.calibration.snr_db(tx_power_dbm), dbm_to_mw(tx_power_dbm), rng)

    def run_blocks(self, payloads, mcs, subframe_indices, tx_power_dbm, rng, sci=None):
        """Send one transport block per subframe and decode them in batches."""
        cfg = self.config
        sci = sci or self.sci_for(mcs)
        outcomes = []
        for start in range(0, len(subframe_indices), RX_BATCH):
            batch = []
            for idx, payload in zip(subframe_indices[start:start + RX_BATCH], payloads[start:start + RX_BATCH]):
                ids = LinkIds(cfg.vehicle_id, idx)
                tx = build_tx_subframe(payload, sci, cfg.alloc, ids, cfg.grid, cfg.ofdm, tx_power_dbm)
                batch.append((self.propagate(tx.samples, idx, tx_power_dbm, rng), ids, tx))
            results = self.receiver.receive_batch([(samples, ids) for samples, ids, _ in batch])
            for (_, ids, tx), result in zip(batch, results):
                block = result.block_at(cfg.alloc.start_subchannel)
                detected = any(s == cfg.alloc.start_subchannel and found == sci for s, found in result.detected_scis)
                passed = block is not None and block.crc_pass
                exact = passed and np.array_equal(block.payload, tx.payload)
                outcomes.append(BlockOutcome(ids.subframe_idx, passed, len(tx.payload), detected, exact))
        return outcomes

    def run_window(self, tx_power_dbm, mcs, subframe_indices, rng):
        subframe_indices = list(subframe_indices)
        payloads = [random_payload(mcs, self.config.alloc, self.config.grid, rng) for _ in subframe_indices]
        outcomes = self.run_blocks(payloads, mcs, subframe_indices, tx_power_dbm, rng)
        logger.debug('window of %d blocks at %.1f dBm, MCS %d: %d errors', len(outcomes), tx_power_dbm, mcs,
                     sum(not o.crc_pass for o in outcomes))
        return outcomes
