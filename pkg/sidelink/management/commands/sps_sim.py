from dataclasses import replace

import numpy as np
import pandas as pd

from ...channel import ImpairmentConfig, channel_profile
from ...evaluator import run_parallel
from ...exceptions import ConfigError
from ...grid import Allocation
from ...harness import SPS_COLUMNS, write_csv
from ...mac_sps import ReplicaSpec, SnrThresholds, run_replica
from ...models import SpsOutcome
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Collision rate and packet reception ratio of SPS policies on a shared pool'
    kind = 'sps_sim'

    def thresholds(self, config):
        sps = config.sps
        link = config.link_for(Allocation(0, sps.width))
        link = replace(link, channel=channel_profile('awgn'), impairments=ImpairmentConfig(cfo_enabled=False))
        return SnrThresholds.calibrate(link, [sps.mcs], sps.calibration_snr_db, sps.calibration_blocks,
                                       seed=config.master_seed)

    def run(self, config, out_dir, options):
        sps = config.sps
        if sps.mode == 'full_phy' and config.pool.n_subchannels != config.grid.n_subchannels:
            raise ConfigError('sps.mode: full_phy needs pool.n_subchannels == grid.n_subchannels')
        thresholds = self.thresholds(config) if sps.mode == 'abstract' else None
        link = config.link_for(Allocation(0, config.grid.n_subchannels))
        specs = []
        for policy in sps.policies:
            for v, n_vehicles in enumerate(sps.vehicles):
                for replica in range(sps.replicas):
                    # the same seed for every policy pairs the replicas
                    seed = int(np.random.SeedSequence(config.master_seed, spawn_key=(v, replica)).generate_state(1)[0])
                    specs.append(ReplicaSpec(config.pool, n_vehicles, policy, sps.duration_ms, seed, sps.width,
                                             sps.mcs, sps.mode, sps.link_snr_db, thresholds, link, sps.tx_power_dbm))
        results = run_parallel(run_replica, specs, options['workers'])

        frame = pd.DataFrame(
            [(s.policy, s.n_vehicles, load, cr, prr) for s, (load, cr, prr) in zip(specs, results)],
            columns=['policy', 'n_vehicles', 'load', 'collision_rate', 'prr'])
        summary = frame.groupby(['policy', 'n_vehicles'], sort=False, as_index=False).mean()
        write_csv(summary, out_dir / 'sps.csv', SPS_COLUMNS)
        for row in summary.itertuples():
            self.stdout.write(f'{row.policy:>13} load {row.load:.2f}: collisions {row.collision_rate:.4f}, '
                              f'PRR {row.prr:.4f}')
        rows = [dict(policy=row.policy, n_vehicles=int(row.n_vehicles), load=float(row.load),
                     collision_rate=float(row.collision_rate), prr=float(row.prr))
                for row in summary.itertuples()]
        self.finish(config, out_dir, options, rows, SpsOutcome)
