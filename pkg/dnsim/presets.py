"""
Built-in scenarios, one per reproduced experiment, with their default sweep axes.
"""
from dataclasses import dataclass, field

BASELINE_PROTOCOL = 'tcp_d_1path'


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    sections: dict = field(default_factory=dict, hash=False)
    axes: tuple = ()
    measure: str = 'sessions'
    baseline: str = BASELINE_PROTOCOL

    def axis_strings(self) -> list:
        return [f"{path}={','.join(str(v) for v in values)}" for path, values in self.axes]


_BE_PROTOCOLS = ('tcp_d_1path', 'tcp_d_multipath', 'fc_mp', 'fc_mc')

PRESETS = {p.name: p for p in (
    Preset(
        'paper_fig4_low',
        "Completed sessions per protocol, 30 UEs at 30 km/h, mean off time 10 s",
        {'traffic': {'traffic_class': 'best_effort', 'intensity': 'low'},
         'protocol': {'name': 'fc_mp'}},
        axes=(('protocol.name', _BE_PROTOCOLS),),
    ),
    Preset(
        'paper_fig4_high',
        "Completed sessions per protocol, 30 UEs at 30 km/h, mean off time 1 s",
        {'traffic': {'traffic_class': 'best_effort', 'intensity': 'high'},
         'protocol': {'name': 'fc_mp'}},
        axes=(('protocol.name', _BE_PROTOCOLS),),
    ),
    Preset(
        'paper_fig5',
        "Dropping versus forwarding queued packets at handover",
        {'traffic': {'traffic_class': 'best_effort', 'intensity': 'high'},
         'protocol': {'name': 'fc_mp'}},
        axes=(('protocol.handover_mode', ('drop', 'forward')),
              ('protocol.name', ('tcp_d_1path', 'fc_mp'))),
    ),
    Preset(
        'paper_fig6',
        "Dense (0.04 km2) versus macro (1 km2) deployment across speeds and user densities",
        {'traffic': {'traffic_class': 'best_effort', 'intensity': 'high'},
         'protocol': {'name': 'fc_mp'}},
        axes=(('topology.area_km2', (0.04, 1.0)),
              ('mobility.speed_kmh', (3, 30, 120)),
              ('mobility.ues', (10, 30, 60))),
        baseline='fc_mp',
    ),
    Preset(
        'paper_table1',
        "Highest video rate with 99% of sessions under 5% outage",
        {'traffic': {'traffic_class': 'video'},
         'protocol': {'name': 'udp_1path'}},
        axes=(('mobility.speed_kmh', (0, 30, 100)),
              ('protocol.name', ('udp_1path', 'fc_mp_video'))),
        measure='supported_rate',
        baseline='udp_1path',
    ),
    Preset(
        'feedback_redundancy',
        "Repair redundancy with and without buffer feedback, two serving cells, low intensity",
        {'traffic': {'traffic_class': 'best_effort', 'intensity': 'low'},
         'mobility': {'serving_cells': 2, 'speed_kmh': 30},
         'protocol': {'name': 'fc_mp'}},
        axes=(('protocol.feedback', (False, True)),),
        baseline='fc_mp',
    ),
)}
