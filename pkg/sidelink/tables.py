import django_tables2 as tables
from .models import SweepRun, BlerCell, ThroughputPoint, SpsOutcome, BackoffPoint


class SweepRunTable(tables.Table):
    id = tables.LinkColumn('run_detail', args=[tables.A('pk')], verbose_name='Run')

    class Meta:
        model = SweepRun
        attrs = {'class': 'table table-hover table-condensed'}
        fields = ('id', 'kind', 'scenario', 'master_seed', 'code_version', 'created')


class BlerCellTable(tables.Table):
    bler_mean = tables.Column()
    bler_std = tables.Column()
    bler_q99 = tables.Column()

    class Meta:
        model = BlerCell
        attrs = {'class': 'table table-hover table-condensed'}
        fields = ('tx_power_dbm', 'mcs', 'n_samples', 'bler_mean', 'bler_std', 'bler_q99', 'low_confidence')

    def render_bler_mean(self, value):
        return f'{value:.4g}'

    def render_bler_std(self, value):
        return f'{value:.4g}'

    def render_bler_q99(self, value):
        return f'{value:.4g}'


class ThroughputPointTable(tables.Table):

    class Meta:
        model = ThroughputPoint
        attrs = {'class': 'table table-hover table-condensed'}
        fields = ('tx_power_dbm', 'mcs', 'tbs_bits', 'bler_mean', 'throughput_bps')

    def render_throughput_bps(self, value):
        return f'{value:,.0f}'


class SpsOutcomeTable(tables.Table):

    class Meta:
        model = SpsOutcome
        attrs = {'class': 'table table-hover table-condensed'}
        fields = ('policy', 'n_vehicles', 'load', 'collision_rate', 'prr')


class BackoffPointTable(tables.Table):

    class Meta:
        model = BackoffPoint
        attrs = {'class': 'table table-hover table-condensed'}
        fields = ('mcs', 'target_bler', 'crossing_mean_dbm', 'crossing_q99_dbm', 'backoff_db')

    def render_backoff_db(self, value):
        if value is None:
            return 'not crossed'
        return f'{value:.2f}'


RESULT_TABLES = {
    'bler_sweep': BlerCellTable,
    'throughput_sweep': ThroughputPointTable,
    'sps_sim': SpsOutcomeTable,
    'backoff': BackoffPointTable,
}
