"""
Semi-persistent scheduling over a sub-channelized pool.

A candidate resource is a (phase, start sub-channel) pair: the grant
transmits on every subframe whose index is congruent to the phase modulo the
selection period, on `width` sub-channels from the start. Vehicles sense the
pool whenever they are not transmitting and remember, per subframe of the
sensing window, the energy on every sub-channel and the reservations announced
by the SCIs they decoded.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .channel import FadingChannel, ImpairmentConfig, add_awgn
from .evaluator import crossing_power
from .exceptions import AllocationError, ConfigError, ContractError, NotCrossedError
from .grid import Allocation
from .link import LinkSimulator
from .phy_rx import SidelinkReceiver
from .phy_tx import LinkIds, Sci, build_tx_subframe, dbm_to_mw, random_payload

logger = logging.getLogger(__name__)

SELECTION_PERIODS_MS = (1, 10, 20, 50, 100)
POLICIES = ('random', 'preconfigured', 'sensing')
MODES = ('abstract', 'full_phy')
CALIBRATION_BLER = 0.1


@dataclass(frozen=True)
class PoolConfig:
    n_subchannels: int = 6
    selection_period_ms: int = 100
    sensing_window_ms: int = 100
    keep_fraction: float = 0.2
    rssi_threshold: float = -math.inf
    reselection_min: int = 5
    reselection_max: int = 15

    def __post_init__(self):
        if self.selection_period_ms not in SELECTION_PERIODS_MS:
            raise ConfigError(f'Selection period must be one of {SELECTION_PERIODS_MS} ms')
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError('keep_fraction must lie in (0, 1]')
        if self.n_subchannels < 1 or self.sensing_window_ms < 1:
            raise ConfigError('Pool and sensing window must be non-empty')
        if not 1 <= self.reselection_min <= self.reselection_max:
            raise ConfigError('Reselection counter range must satisfy 1 <= min <= max')

    @property
    def n_resources(self):
        return self.selection_period_ms * self.n_subchannels


@dataclass
class Grant:
    start_subchannel: int
    n_subchannels: int
    period_ms: int
    reselection_counter: int
    subframe_offset: int = 0
    via_fallback: bool = False

    @property
    def stop_subchannel(self):
        return self.start_subchannel + self.n_subchannels

    def occupies(self, subframe_idx):
        return subframe_idx % self.period_ms == self.subframe_offset % self.period_ms

    def overlaps(self, other):
        return self.start_subchannel < other.stop_subchannel and other.start_subchannel < self.stop_subchannel

    @property
    def allocation(self):
        return Allocation(self.start_subchannel, self.n_subchannels)


class SensingHistory:
    """Ring buffer of the last `window_ms` subframes as seen by one vehicle."""

    def __init__(self, window_ms, n_subchannels):
        self.window_ms = window_ms
        self.n_subchannels = n_subchannels
        self.energy = np.zeros((window_ms, n_subchannels))
        self.stamps = np.full(window_ms, -1, dtype=np.int64)
        self.sensed = np.zeros(window_ms, dtype=bool)
        self.reservations = [()] * window_ms

    def __len__(self):
        return self.window_ms

    def observe(self, subframe_idx, energy, reservations=()):
        """`reservations` holds (start, n_subchannels, period_ms) triples from decoded SCIs."""
        row = subframe_idx % self.window_ms
        self.energy[row] = energy
        self.stamps[row] = subframe_idx
        self.sensed[row] = True
        self.reservations[row] = tuple(reservations)

    def skip(self, subframe_idx):
        # half duplex: nothing is heard while transmitting
        row = subframe_idx % self.window_ms
        self.energy[row] = 0.0
        self.stamps[row] = subframe_idx
        self.sensed[row] = False
        self.reservations[row] = ()

    def phase_energy(self, period):
        """
        Mean sensed energy per (phase, sub-channel).

        Once anything has been sensed, phases never sensed read +inf so they
        rank last; an empty history reads zero everywhere.
        """
        total = np.zeros((period, self.n_subchannels))
        count = np.zeros(period)
        rows = np.flatnonzero(self.sensed)
        phases = self.stamps[rows] % period
        np.add.at(total, phases, self.energy[rows])
        np.add.at(count, phases, 1)
        energy = total / np.maximum(count, 1)[:, None]
        if len(rows):
            energy[count == 0] = np.inf
        return energy

    def reserved_mask(self, period, width):
        """Candidates whose future transmissions meet a remembered reservation."""
        n_starts = self.n_subchannels - width + 1
        mask = np.zeros((period, n_starts), dtype=bool)
        phases = np.arange(period)
        starts = np.arange(n_starts)
        for row in np.flatnonzero(self.sensed):
            for start, n, reserved_period in self.reservations[row]:
                if reserved_period <= 0:
                    continue
                # t + k*p and phase + m*P meet iff gcd(p, P) divides their offset
                time_hit = (self.stamps[row] - phases) % math.gcd(reserved_period, period) == 0
                freq_hit = (starts < start + n) & (starts + width > start)
                mask |= np.outer(time_hit, freq_hit)
        return mask

    def candidate_energy(self, period, width):
        per_sub = self.phase_energy(period)
        return sliding_window_view(per_sub, width, axis=1).mean(axis=-1)


def preconfigured_layout(pool, n_vehicles, width):
    """Disjoint (start, phase) slots handed out round robin."""
    slots = [(s * width, phase)
             for phase in range(pool.selection_period_ms)
             for s in range(pool.n_subchannels // width)]
    return [slots[i % len(slots)] for i in range(n_vehicles)]


def select_resource(policy, history, pool, width, rng, preconfigured=None):
    if not 1 <= width <= pool.n_subchannels:
        raise AllocationError(f'Width {width} does not fit a pool of {pool.n_subchannels} sub-channels')
    period = pool.selection_period_ms
    n_starts = pool.n_subchannels - width + 1
    counter = int(rng.integers(pool.reselection_min, pool.reselection_max + 1))

    if policy == 'random':
        phase = int(rng.integers(period))
        start = int(rng.integers(n_starts))
        return Grant(start, width, period, counter, phase)

    if policy == 'preconfigured':
        if preconfigured is None:
            raise ContractError('Pre-configured policy needs a (start, phase) position')
        start, phase = preconfigured
        if not 0 <= start < n_starts:
            raise AllocationError(f'Pre-configured start {start} does not fit width {width}')
        return Grant(int(start), width, period, counter, int(phase) % period)

    if policy != 'sensing':
        raise ConfigError(f'Unknown selection policy "{policy}"')

    energy = history.candidate_energy(period, width)
    with np.errstate(divide='ignore'):
        loud = 10 * np.log10(energy) > pool.rssi_threshold
    excluded = history.reserved_mask(period, width) & loud
    fallback = bool(excluded.all())
    candidates = np.argwhere(np.ones_like(excluded) if fallback else ~excluded)
    values = energy[candidates[:, 0], candidates[:, 1]]
    shuffled = rng.permutation(len(candidates))
    ranked = shuffled[np.argsort(values[shuffled], kind='stable')]
    keep = max(1, math.ceil(pool.keep_fraction * len(candidates)))
    phase, start = candidates[ranked[int(rng.integers(keep))]]
    if fallback:
        logger.debug('every candidate reserved, falling back to energy ranking')
    return Grant(int(start), width, period, counter, int(phase), via_fallback=fallback)


@dataclass
class Vehicle:
    vehicle_id: int
    policy: str = 'random'
    width: int = 1
    mcs: int = 5
    has_traffic: bool = True
    preconfigured: tuple = None
    grant: Grant = None
    history: SensingHistory = field(default=None, repr=False)
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f'Unknown selection policy "{self.policy}"')
        if self.rng is None:
            self.rng = np.random.default_rng(self.vehicle_id)

    def reselect(self, pool):
        self.grant = select_resource(self.policy, self.history, pool, self.width, self.rng, self.preconfigured)
        return self.grant


@dataclass(frozen=True)
class TransmissionOutcome:
    subframe_idx: int
    vehicle_id: int
    start_subchannel: int
    n_subchannels: int
    collided: bool
    n_receivers: int
    n_received: int


@dataclass(frozen=True)
class SnrThresholds:
    """Per-MCS link SNR (dB) at which a single link reaches BLER 0.1."""
    table: tuple = ()

    def threshold(self, mcs):
        for index, snr_db in self.table:
            if index == mcs:
                return snr_db
        raise ContractError(f'No SNR threshold calibrated for MCS {mcs}')

    @classmethod
    def calibrate(cls, link_config, mcs_list, snr_grid_db, n_blocks, seed=0, target_bler=CALIBRATION_BLER):
        snr_grid_db = sorted(snr_grid_db)
        table = []
        for m, mcs in enumerate(mcs_list):
            curve = []
            for s, snr_db in enumerate(snr_grid_db):
                seq = np.random.SeedSequence(seed, spawn_key=(m, s))
                rng = np.random.default_rng(seq)
                sim = LinkSimulator(link_config, channel_seed=int(seq.generate_state(1)[0]))
                power = snr_db - link_config.calibration.gain_offset_db
                outcomes = sim.run_window(power, mcs, range(n_blocks), rng)
                curve.append((power, sum(not o.crc_pass for o in outcomes) / n_blocks))
            try:
                crossing = crossing_power(curve, target_bler, name=f'mcs{mcs}')
                snr_db = link_config.calibration.snr_db(crossing)
            except NotCrossedError:
                snr_db = snr_grid_db[0] if curve[0][1] <= target_bler else math.inf
            logger.info('MCS %d decodes at %.2f dB link SNR', mcs, snr_db)
            table.append((mcs, float(snr_db)))
        return cls(tuple(table))


class AbstractMedium:
    """Every link shares one SNR; a transmission is heard iff it is alone on its sub-channels."""

    def __init__(self, link_snr_db=30.0, thresholds=None):
        self.link_snr_db = link_snr_db
        self.thresholds = thresholds

    def decodable(self, mcs):
        return self.thresholds is None or self.link_snr_db >= self.thresholds.threshold(mcs)

    def deliver(self, subframe_idx, transmissions, listeners, pool):
        rx_power = 10.0 ** (self.link_snr_db / 10.0)
        energy = np.ones(pool.n_subchannels)
        for _, grant, _ in transmissions:
            energy[grant.start_subchannel:grant.stop_subchannel] += rx_power
        heard = [(v, g) for v, g, collided in transmissions if not collided and self.decodable(v.mcs)]
        reservations = [(g.start_subchannel, g.n_subchannels, g.period_ms) for _, g in heard]
        received = {v.vehicle_id: {rx.vehicle_id for rx in listeners} for v, _ in heard}
        observations = {rx.vehicle_id: (energy, reservations) for rx in listeners}
        return received, observations


class PhyNetwork:
    """Waveform medium: one fading channel per ordered vehicle pair, superposition, full receiver."""

    def __init__(self, link_config, tx_power_dbm=-10.0, seed=0):
        self.config = replace(link_config, impairments=ImpairmentConfig(cfo_enabled=False))
        self.tx_power_dbm = tx_power_dbm
        self.seed = seed
        self.receiver = SidelinkReceiver(link_config.grid, link_config.ofdm, link_config.receiver)
        self.rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        self._channels = {}

    def channel(self, tx_id, rx_id):
        key = (tx_id, rx_id)
        if key not in self._channels:
            seed = int(np.random.SeedSequence(self.seed, spawn_key=(1, tx_id, rx_id)).generate_state(1)[0])
            config = replace(self.config.channel, seed=seed)
            self._channels[key] = FadingChannel(config, self.config.ofdm.sample_rate)
        return self._channels[key]

    def deliver(self, subframe_idx, transmissions, listeners, pool):
        cfg = self.config
        if cfg.grid.n_subchannels != pool.n_subchannels:
            raise ContractError('Grid and pool disagree on the number of sub-channels')
        ids = LinkIds(cfg.vehicle_id, subframe_idx)
        sent = {}
        for vehicle, grant, _ in transmissions:
            sci = Sci.for_period(vehicle.mcs, grant.n_subchannels, grant.period_ms)
            payload = random_payload(vehicle.mcs, grant.allocation, cfg.grid, vehicle.rng)
            sent[vehicle.vehicle_id] = (grant, build_tx_subframe(
                payload, sci, grant.allocation, ids, cfg.grid, cfg.ofdm, self.tx_power_dbm))

        origin = subframe_idx * cfg.ofdm.subframe_len(cfg.grid)
        batch = []
        for rx in listeners:
            total = np.zeros(cfg.ofdm.subframe_len(cfg.grid), dtype=np.complex128)
            for tx_id, (_, tx) in sent.items():
                total += self.channel(tx_id, rx.vehicle_id).apply(tx.samples, origin)[0]
            noisy = add_awgn(total, cfg.calibration.snr_db(self.tx_power_dbm), dbm_to_mw(self.tx_power_dbm), self.rng)
            batch.append((noisy, ids))
        results = self.receiver.receive_batch(batch) if batch else []

        received = {tx_id: set() for tx_id in sent}
        observations = {}
        for rx, result in zip(listeners, results):
            gains = np.abs(result.channel_estimate) ** 2
            energy = gains.reshape(cfg.grid.n_symbols, pool.n_subchannels, -1).mean(axis=(0, 2))
            reservations = [(s, sci.n_subchannels, sci.reservation_ms) for s, sci in result.detected_scis]
            observations[rx.vehicle_id] = (energy, reservations)
            for tx_id, (grant, tx) in sent.items():
                block = result.block_at(grant.start_subchannel)
                if block is not None and block.crc_pass and np.array_equal(block.payload, tx.payload):
                    received[tx_id].add(rx.vehicle_id)
        return received, observations


def step_network(vehicles, pool, subframe_idx, mode='abstract', medium=None):
    """Advance every vehicle by one subframe; returns one outcome per transmission."""
    if mode not in MODES:
        raise ConfigError(f'Unknown network mode "{mode}"')
    if medium is None:
        if mode == 'full_phy':
            raise ContractError('full_phy mode needs a PhyNetwork medium')
        medium = AbstractMedium()

    for vehicle in vehicles:
        if vehicle.history is None:
            vehicle.history = SensingHistory(pool.sensing_window_ms, pool.n_subchannels)
        if vehicle.has_traffic and vehicle.grant is None:
            vehicle.reselect(pool)

    active = [v for v in vehicles if v.has_traffic and v.grant.occupies(subframe_idx)]
    active_ids = {v.vehicle_id for v in active}
    collided = {
        v.vehicle_id: any(o.vehicle_id != v.vehicle_id and o.grant.overlaps(v.grant) for o in active)
        for v in active
    }
    listeners = [v for v in vehicles if v.vehicle_id not in active_ids]
    received, observations = medium.deliver(
        subframe_idx, [(v, v.grant, collided[v.vehicle_id]) for v in active], listeners, pool)

    for vehicle in listeners:
        energy, reservations = observations[vehicle.vehicle_id]
        vehicle.history.observe(subframe_idx, energy, reservations)

    outcomes = []
    for vehicle in active:
        grant = vehicle.grant
        outcomes.append(TransmissionOutcome(
            subframe_idx, vehicle.vehicle_id, grant.start_subchannel, grant.n_subchannels,
            collided[vehicle.vehicle_id], len(vehicles) - 1, len(received.get(vehicle.vehicle_id, ()))))
        vehicle.history.skip(subframe_idx)
        grant.reselection_counter -= 1
        if grant.reselection_counter == 0:
            vehicle.reselect(pool)
    return outcomes


def collision_rate(log):
    log = list(log)
    if not log:
        return 0.0
    return sum(o.collided for o in log) / len(log)


def packet_reception_ratio(log):
    log = list(log)
    potential = sum(o.n_receivers for o in log)
    if not potential:
        return 0.0
    return sum(o.n_received for o in log) / potential


class SpsScenario:
    """A fixed population of vehicles sharing one pool, stepped one subframe at a time."""

    def __init__(self, pool, n_vehicles, policy, width=1, mcs=5, mode='abstract', medium=None, seed=0):
        self.pool = pool
        self.policy = policy
        self.mode = mode
        self.medium = medium
        layout = preconfigured_layout(pool, n_vehicles, width) if policy == 'preconfigured' else [None] * n_vehicles
        streams = np.random.SeedSequence(seed).spawn(n_vehicles)
        self.vehicles = [
            Vehicle(i + 1, policy, width, mcs, preconfigured=layout[i], rng=np.random.default_rng(stream))
            for i, stream in enumerate(streams)
        ]
        self.subframe_idx = 0
        self.log = []
        self._occupancy = {}

    @property
    def load(self):
        return sum(v.width for v in self.vehicles if v.has_traffic) / self.pool.n_resources

    def step(self):
        outcomes = step_network(self.vehicles, self.pool, self.subframe_idx, self.mode, self.medium)
        self._occupancy[self.subframe_idx] = [(o.start_subchannel, o.n_subchannels) for o in outcomes]
        self._occupancy.pop(self.subframe_idx - self.pool.sensing_window_ms, None)
        self.log.extend(outcomes)
        self.subframe_idx += 1
        return outcomes

    def run(self, duration_ms):
        for _ in range(duration_ms):
            self.step()
        logger.info('%s: %d transmissions, collision rate %.4f', self.policy,
                    len(self.log), collision_rate(self.log))
        return self.log

    def background_collision(self, subframe_idx, start, width):
        """Whether any scenario vehicle occupies the given sub-channels in that subframe."""
        while self.subframe_idx <= subframe_idx:
            self.step()
        return any(s < start + width and start < s + n for s, n in self._occupancy.get(subframe_idx, ()))


@dataclass(frozen=True)
class ReplicaSpec:
    """Everything one independent scenario replica needs; picklable for worker pools."""
    pool: PoolConfig
    n_vehicles: int
    policy: str
    duration_ms: int
    seed: int
    width: int = 1
    mcs: int = 5
    mode: str = 'abstract'
    link_snr_db: float = 30.0
    thresholds: SnrThresholds = None
    link_config: object = None
    tx_power_dbm: float = -10.0

    def medium(self):
        if self.mode == 'full_phy':
            return PhyNetwork(self.link_config, self.tx_power_dbm, self.seed)
        return AbstractMedium(self.link_snr_db, self.thresholds)


def run_replica(spec):
    scenario = SpsScenario(spec.pool, spec.n_vehicles, spec.policy, spec.width, spec.mcs,
                           spec.mode, spec.medium(), spec.seed)
    log = scenario.run(spec.duration_ms)
    return scenario.load, collision_rate(log), packet_reception_ratio(log)
