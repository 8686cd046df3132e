import math

from django import forms
from django.core.exceptions import ValidationError

from .channel import CHANNEL_MODELS, PROFILES, ChannelConfig
from .coding import MAX_MCS
from .exceptions import SidelinkError
from .grid import GridConfig
from .mac_sps import MODES, POLICIES, SELECTION_PERIODS_MS, PoolConfig
from .phy_rx import EQUALIZERS
from .phy_tx import OfdmConfig


class ListField(forms.Field):
    """Comma-separated values, or an inclusive `start:stop:step` range."""
    item_type = str
    default_error_messages = {'invalid': 'Enter a comma-separated list.'}

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            text = str(value).strip()
            if text.count(':') == 2 and ',' not in text:
                return self._range(text)
            items = [part.strip() for part in text.split(',') if part.strip()]
        try:
            return [self.item_type(item) for item in items]
        except (TypeError, ValueError):
            raise ValidationError(self.error_messages['invalid'], code='invalid')

    def _range(self, text):
        try:
            start, stop, step = (self.item_type(part) for part in text.split(':'))
        except (TypeError, ValueError):
            raise ValidationError(self.error_messages['invalid'], code='invalid')
        if step <= 0 or stop < start:
            raise ValidationError('Range needs start <= stop and a positive step.', code='invalid')
        count = int(round((stop - start) / step))
        return [self.item_type(round(start + i * step, 10)) for i in range(count + 1)]


class IntListField(ListField):
    item_type = int


class FloatListField(ListField):
    item_type = float


def _check(build):
    try:
        return build()
    except SidelinkError as exc:
        raise ValidationError(str(exc), code='invalid')


class ScenarioForm(forms.Form):
    name = forms.CharField(max_length=100)


class GridForm(forms.Form):
    n_symbols = forms.IntegerField(min_value=4)
    sc_per_subchannel = forms.IntegerField(min_value=1)
    n_subchannels = forms.IntegerField(min_value=1, max_value=15)
    dmrs_symbols = IntListField()
    agc_symbol = forms.IntegerField(min_value=0)
    guard_symbol = forms.IntegerField(min_value=0)
    pscch_width_sc = forms.IntegerField(min_value=0)

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            _check(lambda: GridConfig(**cleaned_data))
        return cleaned_data


class OfdmForm(forms.Form):
    fft_size = forms.IntegerField(min_value=16)
    cp_len = forms.IntegerField(min_value=0)
    subcarrier_spacing_hz = forms.FloatField(min_value=1.0)

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            _check(lambda: OfdmConfig(**cleaned_data))
        return cleaned_data


class ChannelForm(forms.Form):
    profile = forms.ChoiceField(choices=[(name, name) for name in PROFILES])
    model = forms.ChoiceField(choices=[(name, name) for name in CHANNEL_MODELS])
    doppler_hz = forms.FloatField(min_value=0.0)
    tap_delays = IntListField()
    tap_powers = FloatListField()
    seed = forms.IntegerField(min_value=0)

    def clean(self):
        cleaned_data = super().clean()
        delays = cleaned_data.get('tap_delays')
        powers = cleaned_data.get('tap_powers')
        if delays is not None and powers is not None:
            if len(delays) != len(powers):
                raise ValidationError('tap_delays and tap_powers must have the same length', code='invalid')
            if not self.errors:
                _check(lambda: ChannelConfig(cleaned_data['model'], cleaned_data['doppler_hz'],
                                             tuple(zip(delays, powers)), cleaned_data['seed']))
        return cleaned_data


class ImpairmentForm(forms.Form):
    cfo_hz = forms.FloatField()
    timing_offset_samples = forms.IntegerField()
    cfo_enabled = forms.BooleanField(required=False)
    timing_enabled = forms.BooleanField(required=False)


class CalibrationForm(forms.Form):
    gain_offset_db = forms.FloatField()


class ReceiverForm(forms.Form):
    cfo_correction = forms.BooleanField(required=False)
    timing_correction = forms.BooleanField(required=False)
    equalizer = forms.ChoiceField(choices=[(name, name) for name in EQUALIZERS])


class PoolForm(forms.Form):
    n_subchannels = forms.IntegerField(min_value=1, max_value=15)
    selection_period_ms = forms.TypedChoiceField(coerce=int, choices=[(p, str(p)) for p in SELECTION_PERIODS_MS])
    sensing_window_ms = forms.IntegerField(min_value=1)
    keep_fraction = forms.FloatField()
    rssi_threshold = forms.CharField()
    reselection_min = forms.IntegerField(min_value=1)
    reselection_max = forms.IntegerField(min_value=1)

    def clean_keep_fraction(self):
        keep_fraction = self.cleaned_data['keep_fraction']
        if not 0 < keep_fraction <= 1:
            raise ValidationError('Must lie in (0, 1].', code='invalid')
        return keep_fraction

    def clean_rssi_threshold(self):
        try:
            threshold = float(self.cleaned_data['rssi_threshold'])
        except ValueError:
            raise ValidationError('Enter a number or -inf.', code='invalid')
        if math.isnan(threshold):
            raise ValidationError('Enter a number or -inf.', code='invalid')
        return threshold

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            _check(lambda: PoolConfig(**cleaned_data))
        return cleaned_data


class SweepForm(forms.Form):
    tx_power_dbm = FloatListField()
    mcs = IntListField()
    trials = forms.IntegerField(min_value=1)
    windows_per_trial = forms.IntegerField(min_value=1)
    window_blocks = forms.IntegerField(min_value=1)
    master_seed = forms.IntegerField(min_value=0)
    start_subchannel = forms.IntegerField(min_value=0)
    n_subchannels = forms.IntegerField(min_value=1)
    vehicle_id = forms.IntegerField(min_value=0)
    blocks_per_second = forms.FloatField(min_value=0.0)
    target_bler = forms.FloatField()
    log_floor = forms.FloatField()
    throughput_power_dbm = forms.FloatField()
    throughput_mcs = IntListField()

    def clean_tx_power_dbm(self):
        powers = self.cleaned_data['tx_power_dbm']
        if sorted(set(powers)) != powers:
            raise ValidationError('Powers must be strictly increasing.', code='invalid')
        return powers

    def _clean_mcs_list(self, name):
        values = self.cleaned_data[name]
        if any(not 0 <= m <= MAX_MCS for m in values):
            raise ValidationError(f'MCS indices must lie in 0..{MAX_MCS}.', code='invalid')
        return values

    def clean_mcs(self):
        return self._clean_mcs_list('mcs')

    def clean_throughput_mcs(self):
        return self._clean_mcs_list('throughput_mcs')

    def clean(self):
        cleaned_data = super().clean()
        target = cleaned_data.get('target_bler')
        floor = cleaned_data.get('log_floor')
        if target is not None and not 0 < target < 1:
            self.add_error('target_bler', 'Must lie in (0, 1).')
        if floor is not None and target is not None and not 0 < floor < target:
            self.add_error('log_floor', 'Must lie between 0 and the target BLER.')
        return cleaned_data


class SpsForm(forms.Form):
    vehicles = IntListField()
    policies = ListField()
    duration_ms = forms.IntegerField(min_value=1)
    width = forms.IntegerField(min_value=1)
    mcs = forms.IntegerField(min_value=0, max_value=MAX_MCS)
    link_snr_db = forms.FloatField()
    mode = forms.ChoiceField(choices=[(name, name) for name in MODES])
    replicas = forms.IntegerField(min_value=1)
    calibration_blocks = forms.IntegerField(min_value=1)
    calibration_snr_db = FloatListField()
    tx_power_dbm = forms.FloatField()

    def clean_policies(self):
        policies = self.cleaned_data['policies']
        unknown = set(policies) - set(POLICIES)
        if unknown:
            raise ValidationError(f'Unknown policies: {", ".join(sorted(unknown))}.', code='invalid')
        return policies

    def clean_vehicles(self):
        vehicles = self.cleaned_data['vehicles']
        if any(n < 1 for n in vehicles):
            raise ValidationError('Vehicle counts must be positive.', code='invalid')
        return vehicles


class TrafficForm(forms.Form):
    mcs = forms.IntegerField(min_value=0, max_value=MAX_MCS)
    start_subchannel = forms.IntegerField(min_value=0)
    n_subchannels = forms.IntegerField(min_value=1)
    tx_power_dbm = forms.FloatField()
    background_vehicles = forms.IntegerField(min_value=0)
    background_policy = forms.ChoiceField(choices=[(name, name) for name in POLICIES])


SECTION_FORMS = {
    'scenario': ScenarioForm,
    'grid': GridForm,
    'ofdm': OfdmForm,
    'channel': ChannelForm,
    'impairments': ImpairmentForm,
    'calibration': CalibrationForm,
    'receiver': ReceiverForm,
    'pool': PoolForm,
    'sweep': SweepForm,
    'sps': SpsForm,
    'traffic': TrafficForm,
}
