"""
Scenario configuration records.

Plain frozen dataclasses; validation and file parsing live in
``config_loader`` and ``dnsim.forms``.
"""
import json
import hashlib
from dataclasses import dataclass, field, asdict, fields, replace


@dataclass(frozen=True)
class TopologyConfig:
    radio_nodes: int = 57
    routers: int = 11
    gateway_routers: int = 3
    area_km2: float = 0.04
    vusgw_hosts: int = 0
    access_capacity_bps: float = 1e9
    core_capacity_bps: float = 1e10
    gateway_capacity_bps: float = 1e10
    link_latency_s: float = 0.001
    seed: int = 1


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 24.0
    bandwidth_hz: float = 1e7
    pl0_db: float = 38.0
    alpha: float = 3.0
    d_min_m: float = 1.0
    noise_figure_db: float = 9.0
    se_cap: float = 6.0
    mimo_gain: float = 1.5
    reuse_groups: int = 1


@dataclass(frozen=True)
class MobilityConfig:
    speed_kmh: float = 30.0
    ues: int = 30
    lane_spacing_m: float = 20.0
    serving_cells: int = 0
    tick_s: float = 0.1


@dataclass(frozen=True)
class TrafficConfig:
    traffic_class: str = 'best_effort'
    intensity: str = 'high'
    off_time_mean_s: float = 0.0
    file_size_bits: int = 20_000_000
    symbol_size: int = 1000
    max_block_symbols: int = 1000
    video_rate_bps: float = 450e3
    fps: int = 30
    gop: int = 30
    i_to_p_ratio: float = 5.0
    frame_deadline_s: float = 0.1
    i_frame_fc_ratio: float = 1.3
    video_session_s: float = 10.0
    payload_mode: str = 'symbolic'

    @property
    def mean_off_time(self) -> float:
        if self.off_time_mean_s > 0:
            return self.off_time_mean_s
        return 10.0 if self.intensity == 'low' else 1.0


@dataclass(frozen=True)
class ProtocolConfig:
    name: str = 'fc_mp'
    handover_mode: str = 'drop'
    feedback: bool = False
    scheduler: str = 'max_rate'
    fc_small_block_threshold: int = 8
    be_ceiling_bps: float = 2e7
    fc_mc_rate_bps: float = 2e7
    tcp_window: int = 64
    rto_min_s: float = 0.05
    harq_max: int = 3
    harq_margin_db: float = 1.0
    harq_p_high: float = 0.1
    harq_p_low: float = 0.01
    handover_delay_s: float = 0.02
    feedback_beta: float = 0.5
    theta_high_s: float = 0.3
    theta_low_s: float = 0.1
    te_on_handover: bool = True
    high_load_utilization: float = 0.8
    placement_weights: tuple = (1.0, 10.0, 5.0)


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 120.0
    warmup_s: float = 5.0
    seeds: tuple = (1, 2, 3, 4, 5)
    te_period_s: float = 0.5
    tti_s: float = 0.001
    dispatch_interval_s: float = 0.01
    report_period_s: float = 0.1
    trace_events: bool = False


SECTIONS = {
    'topology': TopologyConfig,
    'radio': RadioConfig,
    'mobility': MobilityConfig,
    'traffic': TrafficConfig,
    'protocol': ProtocolConfig,
    'run': RunConfig,
}


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        data = asdict(self)
        for section in data.values():
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
        return data

    def to_json(self) -> str:
        """Canonical JSON echo of the effective configuration."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def content_key(self, seed: int) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':')) + f"|seed={seed}"
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]

    def with_value(self, path: str, value) -> 'ScenarioConfig':
        """Copy with ``section.key`` replaced (value already typed)."""
        section_name, key = path.split('.', 1)
        section = getattr(self, section_name)
        return replace(self, **{section_name: replace(section, **{key: value})})


def section_field_names(section: str) -> list:
    return [f.name for f in fields(SECTIONS[section])]
