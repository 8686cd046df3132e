import django.core.validators
import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SweepRun',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('kind', models.CharField(choices=[('bler_sweep', 'BLER sweep'), ('throughput_sweep', 'Throughput sweep'), ('sps_sim', 'SPS simulation'), ('backoff', 'Power back-off')], max_length=20, verbose_name='Kind')),
                ('scenario', models.CharField(max_length=100, verbose_name='Scenario')),
                ('master_seed', models.BigIntegerField(verbose_name='Master seed')),
                ('code_version', models.CharField(max_length=20, verbose_name='Code version')),
                ('manifest', models.JSONField(verbose_name='Manifest')),
                ('out_dir', models.CharField(max_length=255, verbose_name='Output directory')),
                ('created', models.DateTimeField(auto_now_add=True, verbose_name='Created')),
            ],
            options={
                'verbose_name': 'Run',
                'verbose_name_plural': 'Runs',
                'db_table': 'sweep_run',
                'ordering': ('-created', '-id'),
                'managed': True,
            },
        ),
        migrations.CreateModel(
            name='BlerCell',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('tx_power_dbm', models.FloatField(verbose_name='Tx power, dBm')),
                ('mcs', models.PositiveSmallIntegerField(validators=[django.core.validators.MaxValueValidator(28)], verbose_name='MCS')),
                ('n_samples', models.PositiveIntegerField(verbose_name='Samples')),
                ('bler_mean', models.FloatField(verbose_name='Mean BLER')),
                ('bler_std', models.FloatField(verbose_name='BLER std')),
                ('bler_q99', models.FloatField(verbose_name='BLER q99')),
                ('low_confidence', models.BooleanField(default=False, verbose_name='Low confidence')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, to='sidelink.sweeprun', verbose_name='Run')),
            ],
            options={
                'verbose_name': 'BLER cell',
                'verbose_name_plural': 'BLER cells',
                'db_table': 'bler_cell',
                'ordering': ('run', 'tx_power_dbm', 'mcs'),
                'managed': True,
                'unique_together': {('run', 'tx_power_dbm', 'mcs')},
            },
        ),
        migrations.CreateModel(
            name='ThroughputPoint',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('tx_power_dbm', models.FloatField(verbose_name='Tx power, dBm')),
                ('mcs', models.PositiveSmallIntegerField(validators=[django.core.validators.MaxValueValidator(28)], verbose_name='MCS')),
                ('tbs_bits', models.PositiveIntegerField(verbose_name='TBS, bits')),
                ('bler_mean', models.FloatField(verbose_name='Mean BLER')),
                ('throughput_bps', models.FloatField(verbose_name='Throughput, bit/s')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, to='sidelink.sweeprun', verbose_name='Run')),
            ],
            options={
                'verbose_name': 'Throughput point',
                'verbose_name_plural': 'Throughput points',
                'db_table': 'throughput_point',
                'ordering': ('run', 'mcs'),
                'managed': True,
                'unique_together': {('run', 'tx_power_dbm', 'mcs')},
            },
        ),
        migrations.CreateModel(
            name='SpsOutcome',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('policy', models.CharField(max_length=20, verbose_name='Policy')),
                ('n_vehicles', models.PositiveIntegerField(validators=[django.core.validators.MinValueValidator(1)], verbose_name='Vehicles')),
                ('load', models.FloatField(verbose_name='Pool load')),
                ('collision_rate', models.FloatField(verbose_name='Collision rate')),
                ('prr', models.FloatField(verbose_name='PRR')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, to='sidelink.sweeprun', verbose_name='Run')),
            ],
            options={
                'verbose_name': 'SPS outcome',
                'verbose_name_plural': 'SPS outcomes',
                'db_table': 'sps_outcome',
                'ordering': ('run', 'policy', 'n_vehicles'),
                'managed': True,
                'unique_together': {('run', 'policy', 'n_vehicles')},
            },
        ),
        migrations.CreateModel(
            name='BackoffPoint',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('mcs', models.PositiveSmallIntegerField(validators=[django.core.validators.MaxValueValidator(28)], verbose_name='MCS')),
                ('target_bler', models.FloatField(verbose_name='Target BLER')),
                ('crossing_mean_dbm', models.FloatField(blank=True, null=True, verbose_name='Mean crossing, dBm')),
                ('crossing_q99_dbm', models.FloatField(blank=True, null=True, verbose_name='q99 crossing, dBm')),
                ('backoff_db', models.FloatField(blank=True, null=True, verbose_name='Back-off, dB')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, to='sidelink.sweeprun', verbose_name='Run')),
            ],
            options={
                'verbose_name': 'Back-off point',
                'verbose_name_plural': 'Back-off points',
                'db_table': 'backoff_point',
                'ordering': ('run', 'mcs'),
                'managed': True,
                'unique_together': {('run', 'mcs')},
            },
        ),
    ]
