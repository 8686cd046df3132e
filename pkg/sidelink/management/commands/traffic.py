import sys

from django.core.management.base import CommandError

from ...grid import Allocation
from ...harness import TrafficAdapter, serve_tcp
from ...mac_sps import SpsScenario
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Answer PKT lines from an external network simulator with RES lines'
    kind = 'traffic'
    recorded_options = ('traffic',)
    stealth_options = ('stdin',)

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--traffic', default='stdio', help='"stdio" or "tcp:<port>"')

    def adapter(self, config):
        traffic = config.traffic
        link = config.link_for(Allocation(traffic.start_subchannel, traffic.n_subchannels))
        background = None
        if traffic.background_vehicles:
            background = SpsScenario(config.pool, traffic.background_vehicles, traffic.background_policy,
                                     width=traffic.n_subchannels, seed=config.master_seed)
        return TrafficAdapter(link, traffic.mcs, traffic.tx_power_dbm, seed=config.master_seed,
                              background=background)

    def run(self, config, out_dir, options):
        adapter = self.adapter(config)
        transport = options['traffic']
        if transport != 'stdio' and not (transport.startswith('tcp:') and transport[4:].isdigit()):
            raise CommandError(f'--traffic must be "stdio" or "tcp:<port>", got "{transport}"')
        self.write_manifest(config, out_dir, options)
        if transport == 'stdio':
            adapter.serve(options.get('stdin') or sys.stdin, self.stdout.write)
        else:
            serve_tcp(adapter, int(transport[4:]))
