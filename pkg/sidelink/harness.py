"""
Experiment plumbing: dotted-key configuration, CSV tables, run manifests and
the PKT/RES traffic line protocol.
"""
import json
import logging
import math
import socketserver
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError

from . import __version__
from .channel import PROFILE_CFO_HZ, PROFILES, ChannelConfig, ImpairmentConfig, PowerCalibration
from .coding import mcs_lookup, tbs_for
from .exceptions import AllocationError, ConfigError, TrafficProtocolError
from .forms import SECTION_FORMS
from .grid import Allocation, GridConfig, pssch_re_count
from .link import LinkConfig, LinkSimulator
from .mac_sps import PoolConfig
from .phy_rx import ReceiverConfig
from .phy_tx import OfdmConfig

logger = logging.getLogger(__name__)

BACKOFF_COLUMNS = ['mcs', 'target_bler', 'crossing_mean_dbm', 'crossing_q99_dbm', 'backoff_db']
SPS_COLUMNS = ['policy', 'load', 'collision_rate', 'prr']
MANIFEST_NAME = 'manifest.json'
TRAFFIC_STATUSES = ('ok', 'collision', 'crc_fail')


# --- Configuration -----------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    tx_power_dbm: tuple
    mcs: tuple
    trials: int = 100
    windows_per_trial: int = 1
    window_blocks: int = 1000
    master_seed: int = 2019
    start_subchannel: int = 0
    n_subchannels: int = 6
    vehicle_id: int = 1
    blocks_per_second: float = 1000.0
    target_bler: float = 0.01
    log_floor: float = 1e-6
    throughput_power_dbm: float = -14.0
    throughput_mcs: tuple = tuple(range(29))


@dataclass(frozen=True)
class SpsConfig:
    vehicles: tuple = (20,)
    policies: tuple = ('random', 'sensing')
    duration_ms: int = 10000
    width: int = 1
    mcs: int = 5
    link_snr_db: float = 20.0
    mode: str = 'abstract'
    replicas: int = 5
    calibration_blocks: int = 40
    calibration_snr_db: tuple = ()
    tx_power_dbm: float = -10.0


@dataclass(frozen=True)
class TrafficConfig:
    mcs: int = 0
    start_subchannel: int = 0
    n_subchannels: int = 1
    tx_power_dbm: float = -10.0
    background_vehicles: int = 0
    background_policy: str = 'sensing'


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    grid: GridConfig
    ofdm: OfdmConfig
    channel: ChannelConfig
    impairments: ImpairmentConfig
    calibration: PowerCalibration
    receiver: ReceiverConfig
    pool: PoolConfig
    sweep: SweepConfig
    sps: SpsConfig
    traffic: TrafficConfig
    values: tuple = field(default=(), repr=False)

    @property
    def master_seed(self):
        return self.sweep.master_seed

    @property
    def link(self):
        return self.link_for(Allocation(self.sweep.start_subchannel, self.sweep.n_subchannels))

    def link_for(self, alloc):
        return LinkConfig(self.grid, self.ofdm, self.channel, self.impairments, self.calibration,
                          self.receiver, alloc, self.sweep.vehicle_id)

    def snapshot(self):
        """Effective configuration as the dotted text values it was loaded from."""
        return dict(self.values)


def format_value(value):
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(item) for item in value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}: expected "key = value", got "{line}"')
        key, value = (part.strip() for part in line.split('=', 1))
        values[key] = value
    return values


def parse_overrides(overrides):
    values = {}
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f'Override "{item}" is not of the form key=value')
        key, value = (part.strip() for part in item.split('=', 1))
        values[key] = value
    return values


def read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Config file {path} does not exist')
    if path.suffix == '.json':
        return dict(json.loads(path.read_text())['config'])
    return parse_config_text(path.read_text())


def _apply_profile(values, user_keys):
    # a chosen profile fills the channel keys the user did not set
    if 'channel.profile' not in user_keys:
        return values
    name = values['channel.profile']
    if name not in PROFILES:
        raise ConfigError(f'channel.profile: unknown profile "{name}"')
    preset = PROFILES[name]
    filled = {
        'channel.model': preset['model'],
        'channel.doppler_hz': preset['doppler_hz'],
        'channel.tap_delays': [d for d, _ in preset['taps']],
        'channel.tap_powers': [p for _, p in preset['taps']],
        'impairments.cfo_hz': PROFILE_CFO_HZ.get(name, 0.0),
    }
    return {**values, **{k: v for k, v in filled.items() if k not in user_keys}}


def validate_sections(values):
    """Clean every section through its form; returns {section: cleaned_data}."""
    sections = {name: {} for name in SECTION_FORMS}
    for key, value in values.items():
        section, _, name = key.partition('.')
        if section not in SECTION_FORMS or not name:
            raise ConfigError(f'Unknown configuration key "{key}"')
        sections[section][name] = value
    cleaned, errors = {}, []
    for section, data in sections.items():
        form = SECTION_FORMS[section](data=data)
        unknown = set(data) - set(form.fields)
        errors.extend(f'{section}.{name}: unknown key' for name in sorted(unknown))
        if form.is_valid():
            cleaned[section] = form.cleaned_data
            continue
        for name, messages in form.errors.items():
            label = section if name == '__all__' else f'{section}.{name}'
            errors.extend(f'{label}: {message}' for message in messages)
    if errors:
        raise ConfigError('; '.join(errors))
    return cleaned


def build_config(cleaned, values):
    channel = cleaned['channel']
    sweep = cleaned['sweep']
    sps = cleaned['sps']
    return ExperimentConfig(
        scenario=cleaned['scenario']['name'],
        grid=GridConfig(**cleaned['grid']),
        ofdm=OfdmConfig(**cleaned['ofdm']),
        channel=ChannelConfig(channel['model'], channel['doppler_hz'],
                              tuple(zip(channel['tap_delays'], channel['tap_powers'])), channel['seed']),
        impairments=ImpairmentConfig(**cleaned['impairments']),
        calibration=PowerCalibration(**cleaned['calibration']),
        receiver=ReceiverConfig(**cleaned['receiver']),
        pool=PoolConfig(**cleaned['pool']),
        sweep=SweepConfig(**{**sweep, 'tx_power_dbm': tuple(sweep['tx_power_dbm']), 'mcs': tuple(sweep['mcs']),
                             'throughput_mcs': tuple(sweep['throughput_mcs'])}),
        sps=SpsConfig(**{**sps, 'vehicles': tuple(sps['vehicles']), 'policies': tuple(sps['policies']),
                         'calibration_snr_db': tuple(sps['calibration_snr_db'])}),
        traffic=TrafficConfig(**cleaned['traffic']),
        values=tuple(sorted(values.items())),
    )


def load_config(path=None, overrides=(), seed=None):
    """Defaults, then the config file, then `--set` overrides, then `--seed`."""
    user = read_config_file(path) if path else {}
    user.update(parse_overrides(overrides))
    if seed is not None:
        user['sweep.master_seed'] = seed
    values = _apply_profile({**settings.SIDELINK_DEFAULTS, **user}, set(user))
    cleaned = validate_sections(values)
    flat = {f'{section}.{name}': format_value(value)
            for section, data in cleaned.items() for name, value in data.items()}
    config = build_config(cleaned, flat)
    try:
        config.link
    except (ConfigError, AllocationError) as exc:
        raise ConfigError(f'sweep: {exc}') from exc
    return config


# --- Result files ------------------------------------------------------------

def write_csv(frame, path, columns=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = frame if columns is None else frame[columns]
    frame.to_csv(path, index=False)
    logger.info('wrote %d rows to %s', len(frame), path)
    return path


def read_csv(path, columns=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Input file {path} does not exist')
    frame = pd.read_csv(path, float_precision='round_trip')
    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ConfigError(f'{path} lacks columns {", ".join(missing)}')
    return frame


def manifest(subcommand, config, options=None):
    data = {
        'subcommand': subcommand,
        'scenario': config.scenario,
        'master_seed': config.master_seed,
        'code_version': __version__,
        'config': config.snapshot(),
    }
    if options:
        data['options'] = dict(sorted(options.items()))
    return data


def write_manifest(out_dir, subcommand, config, options=None):
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest(subcommand, config, options), indent=2, sort_keys=True) + '\n')
    return path


def manifest_options(path):
    """Command options recorded in a run manifest; empty for plain config files."""
    path = Path(path)
    if path.suffix != '.json' or not path.is_file():
        return {}
    return dict(json.loads(path.read_text()).get('options', {}))


# --- Traffic protocol --------------------------------------------------------

@dataclass(frozen=True)
class TrafficEvent:
    arrival_time_us: int
    priority: int
    payload_len: int
    payload: bytes = field(repr=False)


def parse_traffic_line(line):
    parts = line.split()
    if len(parts) != 5 or parts[0] != 'PKT':
        raise TrafficProtocolError(f'expected "PKT <time_us> <prio> <len> <hex>", got "{line.strip()}"')
    try:
        arrival, priority, length = (int(p) for p in parts[1:4])
        payload = bytes.fromhex(parts[4])
    except ValueError:
        raise TrafficProtocolError(f'malformed field in "{line.strip()}"')
    if arrival < 0:
        raise TrafficProtocolError('arrival time must be non-negative')
    if not 0 <= priority <= 7:
        raise TrafficProtocolError(f'priority {priority} outside 0..7')
    if len(payload) != length:
        raise TrafficProtocolError(f'declared {length} bytes, payload carries {len(payload)}')
    return TrafficEvent(arrival, priority, length, payload)


def ingest_traffic(stream):
    """Yield a TrafficEvent per request line, or the TrafficProtocolError that rejected it."""
    last = None
    for line in stream:
        if not line.strip():
            continue
        try:
            event = parse_traffic_line(line)
        except TrafficProtocolError as exc:
            yield exc
            continue
        if last is not None and event.arrival_time_us < last:
            yield TrafficProtocolError(f'arrival {event.arrival_time_us} us precedes {last} us')
            continue
        last = event.arrival_time_us
        yield event


def emit_outcome(event, status):
    if status not in TRAFFIC_STATUSES:
        raise TrafficProtocolError(f'unknown status "{status}"')
    return f'RES {event.arrival_time_us} {status}'


def emit_error(error):
    return f'ERR {error}'


class TrafficAdapter:
    """Carries packets over one simulated link, one transport block per subframe."""

    def __init__(self, link_config, mcs, tx_power_dbm, seed=0, background=None):
        self.link_config = link_config
        self.mcs = mcs
        self.tx_power_dbm = tx_power_dbm
        self.background = background
        self.sim = LinkSimulator(link_config, channel_seed=seed)
        self.rng = np.random.default_rng(seed)
        self.tbs = tbs_for(mcs_lookup(mcs), pssch_re_count(link_config.grid, link_config.alloc))
        self.next_subframe = 0

    def segment(self, event):
        bits = np.unpackbits(np.frombuffer(event.payload, dtype=np.uint8))
        n_blocks = max(1, math.ceil(len(bits) / self.tbs))
        blocks = np.zeros(n_blocks * self.tbs, dtype=np.uint8)
        blocks[:len(bits)] = bits
        return blocks.reshape(n_blocks, self.tbs)

    def sci_for(self, event):
        return self.sim.sci_for(self.mcs, priority=event.priority)

    def handle(self, event):
        blocks = self.segment(event)
        first = max(event.arrival_time_us // 1000, self.next_subframe)
        indices = list(range(first, first + len(blocks)))
        self.next_subframe = indices[-1] + 1
        alloc = self.link_config.alloc
        if self.background is not None and any(
                self.background.background_collision(i, alloc.start_subchannel, alloc.n_subchannels)
                for i in indices):
            return 'collision'
        outcomes = self.sim.run_blocks(list(blocks), self.mcs, indices, self.tx_power_dbm, self.rng,
                                       sci=self.sci_for(event))
        return 'ok' if all(o.payload_exact for o in outcomes) else 'crc_fail'

    def serve(self, lines, write):
        for item in ingest_traffic(lines):
            if isinstance(item, TrafficProtocolError):
                write(emit_error(item))
            else:
                write(emit_outcome(item, self.handle(item)))


def serve_tcp(adapter, port, host='127.0.0.1'):
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            lines = (raw.decode('utf-8', 'replace') for raw in self.rfile)
            adapter.serve(lines, lambda text: self.wfile.write((text + '\n').encode()))

    with socketserver.TCPServer((host, port), Handler) as server:
        logger.info('traffic adapter listening on %s:%d', host, port)
        server.serve_forever()


# --- Entry point -------------------------------------------------------------

def cli_run(subcommand, config_path=None, overrides=(), **options):
    """Run a dashed subcommand name through its management command; returns the exit status."""
    try:
        call_command(subcommand.replace('-', '_'), config=config_path, set=list(overrides), **options)
    except CommandError as exc:
        logger.error('%s failed: %s', subcommand, exc)
        return 1
    return 0
