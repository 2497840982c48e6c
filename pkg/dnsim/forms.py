from django import forms
from django.core.exceptions import ValidationError

from dnsim.services.protocols import PROTOCOL_STACKS


class NumberListField(forms.Field):
    """A list of numbers given as a TOML/JSON array or a comma separated string."""

    def __init__(self, *, number=float, min_length=1, max_length=None, min_value=None, **kwargs):
        self.number = number
        self.min_length = min_length
        self.max_length = max_length
        self.min_value = min_value
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return ()
        if isinstance(value, str):
            value = [v for v in value.split(',') if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValidationError("Enter a list of numbers.")
        items = []
        for item in value:
            if isinstance(item, bool):
                raise ValidationError("Enter a list of numbers.")
            try:
                number = self.number(item)
            except (TypeError, ValueError):
                raise ValidationError(f"{item!r} is not a number.")
            if self.number is int and number != float(item):
                raise ValidationError(f"{item!r} is not a whole number.")
            items.append(number)
        return tuple(items)

    def validate(self, value):
        super().validate(value)
        if len(value) < self.min_length:
            raise ValidationError(f"Give at least {self.min_length} value(s).")
        if self.max_length is not None and len(value) > self.max_length:
            raise ValidationError(f"Give at most {self.max_length} value(s).")
        if self.min_value is not None and any(v < self.min_value for v in value):
            raise ValidationError(f"Every value must be >= {self.min_value}.")


class SectionForm(forms.Form):
    """One scenario-config section; errors come back as ``section.key: message``."""
    section = ''

    def error_messages_with_paths(self) -> list:
        messages = []
        for name, errors in self.errors.items():
            path = self.section if name == '__all__' else f"{self.section}.{name}"
            messages.extend(f"{path}: {error}" for error in errors)
        return messages


class TopologyForm(SectionForm):
    section = 'topology'
    radio_nodes = forms.IntegerField(min_value=1, max_value=2000)
    routers = forms.IntegerField(min_value=1, max_value=500)
    gateway_routers = forms.IntegerField(min_value=1, max_value=500)
    area_km2 = forms.FloatField(min_value=1e-4, max_value=100.0)
    vusgw_hosts = forms.IntegerField(min_value=0, max_value=100)
    access_capacity_bps = forms.FloatField(min_value=1e3)
    core_capacity_bps = forms.FloatField(min_value=1e3)
    gateway_capacity_bps = forms.FloatField(min_value=1e3)
    link_latency_s = forms.FloatField(min_value=0.0, max_value=1.0)
    seed = forms.IntegerField(min_value=0)

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('gateway_routers', 0) > cleaned_data.get('routers', 0) > 0:
            self.add_error('gateway_routers', "Cannot exceed topology.routers.")
        return cleaned_data


class RadioForm(SectionForm):
    section = 'radio'
    tx_power_dbm = forms.FloatField(min_value=-30.0, max_value=60.0)
    bandwidth_hz = forms.FloatField(min_value=1e3, max_value=1e10)
    pl0_db = forms.FloatField(min_value=0.0, max_value=200.0)
    alpha = forms.FloatField(min_value=1.0, max_value=8.0)
    d_min_m = forms.FloatField(min_value=0.01, max_value=1000.0)
    noise_figure_db = forms.FloatField(min_value=0.0, max_value=30.0)
    se_cap = forms.FloatField(min_value=0.1, max_value=30.0)
    mimo_gain = forms.FloatField(min_value=0.1, max_value=16.0)
    reuse_groups = forms.IntegerField(min_value=1, max_value=64)


class MobilityForm(SectionForm):
    section = 'mobility'
    speed_kmh = forms.FloatField(min_value=0.0, max_value=500.0)
    ues = forms.IntegerField(min_value=0, max_value=5000)
    lane_spacing_m = forms.FloatField(min_value=0.0, max_value=1000.0)
    serving_cells = forms.IntegerField(min_value=0, max_value=16)
    tick_s = forms.FloatField(min_value=1e-3, max_value=10.0)


class TrafficForm(SectionForm):
    section = 'traffic'
    traffic_class = forms.ChoiceField(choices=[('best_effort', 'best effort'), ('video', 'video')])
    intensity = forms.ChoiceField(choices=[('low', 'low'), ('high', 'high')])
    off_time_mean_s = forms.FloatField(min_value=0.0, max_value=3600.0)
    file_size_bits = forms.IntegerField(min_value=8, max_value=10 ** 11)
    symbol_size = forms.IntegerField(min_value=1, max_value=65536)
    max_block_symbols = forms.IntegerField(min_value=1, max_value=10000)
    video_rate_bps = forms.FloatField(min_value=1.0, max_value=1e9)
    fps = forms.IntegerField(min_value=1, max_value=240)
    gop = forms.IntegerField(min_value=1, max_value=1000)
    i_to_p_ratio = forms.FloatField(min_value=1.0, max_value=100.0)
    frame_deadline_s = forms.FloatField(min_value=1e-3, max_value=10.0)
    i_frame_fc_ratio = forms.FloatField(min_value=1.0, max_value=10.0)
    video_session_s = forms.FloatField(min_value=0.1, max_value=3600.0)
    payload_mode = forms.ChoiceField(choices=[('symbolic', 'symbolic'), ('bytes', 'bytes')])


class ProtocolForm(SectionForm):
    section = 'protocol'
    name = forms.ChoiceField(choices=[(name, name) for name in PROTOCOL_STACKS])
    handover_mode = forms.ChoiceField(choices=[('drop', 'drop'), ('forward', 'forward')])
    feedback = forms.BooleanField(required=False)
    scheduler = forms.ChoiceField(choices=[('max_rate', 'max rate'), ('proportional_fair', 'proportional fair')])
    fc_small_block_threshold = forms.IntegerField(min_value=1, max_value=10000)
    be_ceiling_bps = forms.FloatField(min_value=1.0)
    fc_mc_rate_bps = forms.FloatField(min_value=1.0)
    tcp_window = forms.IntegerField(min_value=1, max_value=100000)
    rto_min_s = forms.FloatField(min_value=1e-4, max_value=60.0)
    harq_max = forms.IntegerField(min_value=0, max_value=16)
    harq_margin_db = forms.FloatField(min_value=0.0, max_value=30.0)
    harq_p_high = forms.FloatField(min_value=0.0, max_value=1.0)
    harq_p_low = forms.FloatField(min_value=0.0, max_value=1.0)
    handover_delay_s = forms.FloatField(min_value=0.0, max_value=10.0)
    feedback_beta = forms.FloatField(min_value=0.01, max_value=0.99)
    theta_high_s = forms.FloatField(min_value=0.0, max_value=60.0)
    theta_low_s = forms.FloatField(min_value=0.0, max_value=60.0)
    te_on_handover = forms.BooleanField(required=False)
    high_load_utilization = forms.FloatField(min_value=0.0, max_value=1.0)
    placement_weights = NumberListField(min_length=3, max_length=3, min_value=0.0)

    def clean(self):
        cleaned_data = super().clean()
        low, high = cleaned_data.get('theta_low_s'), cleaned_data.get('theta_high_s')
        if low is not None and high is not None and low > high:
            self.add_error('theta_low_s', "Must not exceed protocol.theta_high_s.")
        return cleaned_data


class RunForm(SectionForm):
    section = 'run'
    duration_s = forms.FloatField(min_value=0.01, max_value=1e6)
    warmup_s = forms.FloatField(min_value=0.0)
    seeds = NumberListField(number=int, min_value=0)
    te_period_s = forms.FloatField(min_value=1e-3, max_value=600.0)
    tti_s = forms.FloatField(min_value=1e-5, max_value=0.1)
    dispatch_interval_s = forms.FloatField(min_value=1e-4, max_value=10.0)
    report_period_s = forms.FloatField(min_value=1e-3, max_value=60.0)
    trace_events = forms.BooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        warmup, duration = cleaned_data.get('warmup_s'), cleaned_data.get('duration_s')
        if warmup is not None and duration is not None and warmup >= duration:
            self.add_error('warmup_s', "Must be shorter than run.duration_s.")
        return cleaned_data


SECTION_FORMS = {form.section: form for form in (TopologyForm, RadioForm, MobilityForm, TrafficForm,
                                                 ProtocolForm, RunForm)}
