from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models, transaction


class SweepRun(models.Model):
    KIND_CHOICES = [
        ('bler_sweep', 'BLER sweep'),
        ('throughput_sweep', 'Throughput sweep'),
        ('sps_sim', 'SPS simulation'),
        ('backoff', 'Power back-off'),
    ]
    id = models.BigAutoField(primary_key=True)
    kind = models.CharField(choices=KIND_CHOICES, max_length=20, verbose_name='Kind')
    scenario = models.CharField(max_length=100, verbose_name='Scenario')
    master_seed = models.BigIntegerField(verbose_name='Master seed')
    code_version = models.CharField(max_length=20, verbose_name='Code version')
    manifest = models.JSONField(verbose_name='Manifest')
    out_dir = models.CharField(max_length=255, verbose_name='Output directory')
    created = models.DateTimeField(auto_now_add=True, verbose_name='Created')

    class Meta:
        managed = True
        db_table = 'sweep_run'
        verbose_name_plural = 'Runs'
        verbose_name = 'Run'
        ordering = ('-created', '-id')

    @classmethod
    @transaction.atomic
    def record(cls, manifest, out_dir, rows=(), row_model=None):
        """Store a run and its result rows; `rows` are dicts of `row_model` fields."""
        run = cls.objects.create(
            kind=manifest['subcommand'],
            scenario=manifest['scenario'],
            master_seed=manifest['master_seed'],
            code_version=manifest['code_version'],
            manifest=manifest,
            out_dir=str(out_dir),
        )
        if row_model is not None:
            row_model.objects.bulk_create(row_model(run=run, **row) for row in rows)
        return run

    def result_model(self):
        return RESULT_MODELS[self.kind]

    def results(self):
        return self.result_model().objects.filter(run=self)

    def __str__(self):
        return f'{self.get_kind_display()} #{self.pk}: {self.scenario} (seed {self.master_seed})'


class BlerCell(models.Model):
    id = models.BigAutoField(primary_key=True)
    run = models.ForeignKey(SweepRun, models.CASCADE, verbose_name='Run')
    tx_power_dbm = models.FloatField(verbose_name='Tx power, dBm')
    mcs = models.PositiveSmallIntegerField(validators=[MaxValueValidator(28)], verbose_name='MCS')
    n_samples = models.PositiveIntegerField(verbose_name='Samples')
    bler_mean = models.FloatField(verbose_name='Mean BLER')
    bler_std = models.FloatField(verbose_name='BLER std')
    bler_q99 = models.FloatField(verbose_name='BLER q99')
    low_confidence = models.BooleanField(default=False, verbose_name='Low confidence')

    class Meta:
        managed = True
        db_table = 'bler_cell'
        verbose_name_plural = 'BLER cells'
        verbose_name = 'BLER cell'
        unique_together = ('run', 'tx_power_dbm', 'mcs')
        ordering = ('run', 'tx_power_dbm', 'mcs')

    def __str__(self):
        return f'{self.tx_power_dbm:g} dBm, MCS {self.mcs}: {self.bler_mean:.4g}'


class ThroughputPoint(models.Model):
    id = models.BigAutoField(primary_key=True)
    run = models.ForeignKey(SweepRun, models.CASCADE, verbose_name='Run')
    tx_power_dbm = models.FloatField(verbose_name='Tx power, dBm')
    mcs = models.PositiveSmallIntegerField(validators=[MaxValueValidator(28)], verbose_name='MCS')
    tbs_bits = models.PositiveIntegerField(verbose_name='TBS, bits')
    bler_mean = models.FloatField(verbose_name='Mean BLER')
    throughput_bps = models.FloatField(verbose_name='Throughput, bit/s')

    class Meta:
        managed = True
        db_table = 'throughput_point'
        verbose_name_plural = 'Throughput points'
        verbose_name = 'Throughput point'
        unique_together = ('run', 'tx_power_dbm', 'mcs')
        ordering = ('run', 'mcs')

    def __str__(self):
        return f'MCS {self.mcs}: {self.throughput_bps:.0f} bit/s'


class SpsOutcome(models.Model):
    id = models.BigAutoField(primary_key=True)
    run = models.ForeignKey(SweepRun, models.CASCADE, verbose_name='Run')
    policy = models.CharField(max_length=20, verbose_name='Policy')
    n_vehicles = models.PositiveIntegerField(validators=[MinValueValidator(1)], verbose_name='Vehicles')
    load = models.FloatField(verbose_name='Pool load')
    collision_rate = models.FloatField(verbose_name='Collision rate')
    prr = models.FloatField(verbose_name='PRR')

    class Meta:
        managed = True
        db_table = 'sps_outcome'
        verbose_name_plural = 'SPS outcomes'
        verbose_name = 'SPS outcome'
        unique_together = ('run', 'policy', 'n_vehicles')
        ordering = ('run', 'policy', 'n_vehicles')

    def __str__(self):
        return f'{self.policy} at load {self.load:.2f}: collisions {self.collision_rate:.4f}'


class BackoffPoint(models.Model):
    id = models.BigAutoField(primary_key=True)
    run = models.ForeignKey(SweepRun, models.CASCADE, verbose_name='Run')
    mcs = models.PositiveSmallIntegerField(validators=[MaxValueValidator(28)], verbose_name='MCS')
    target_bler = models.FloatField(verbose_name='Target BLER')
    crossing_mean_dbm = models.FloatField(null=True, blank=True, verbose_name='Mean crossing, dBm')
    crossing_q99_dbm = models.FloatField(null=True, blank=True, verbose_name='q99 crossing, dBm')
    backoff_db = models.FloatField(null=True, blank=True, verbose_name='Back-off, dB')

    class Meta:
        managed = True
        db_table = 'backoff_point'
        verbose_name_plural = 'Back-off points'
        verbose_name = 'Back-off point'
        unique_together = ('run', 'mcs')
        ordering = ('run', 'mcs')

    def __str__(self):
        if self.backoff_db is None:
            return f'MCS {self.mcs}: not crossed'
        return f'MCS {self.mcs}: {self.backoff_db:.2f} dB'


RESULT_MODELS = {
    'bler_sweep': BlerCell,
    'throughput_sweep': ThroughputPoint,
    'sps_sim': SpsOutcome,
    'backoff': BackoffPoint,
}
