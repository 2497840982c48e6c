"""
Physical world of the simulator: topology, propagation, link rates, mobility.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
import networkx as nx

from .logs import get_logger
from .scenario import TopologyConfig, RadioConfig, MobilityConfig

logger = get_logger('netmodel')

GATEWAY = 'gw'
THERMAL_NOISE_DBM_HZ = -174.0
NODE_KINDS = ('gateway', 'router', 'radio_node', 'vusgw_host')


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class RadioNode:
    id: str
    position: tuple
    tx_power: float
    bandwidth: float
    reuse_group: int = 0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise TopologyError(f"radio node {self.id}: bandwidth must be > 0")


@dataclass(frozen=True)
class UserEquipment:
    id: str
    position: tuple
    velocity: tuple
    lane: int
    serving_set: tuple = ()
    noise_figure: float = 9.0


@dataclass(frozen=True)
class ChannelSample:
    ue_id: str
    node_id: str
    path_loss: float
    sinr: float
    peak_rate: float


@dataclass(frozen=True)
class PropagationModel:
    pl0: float = 38.0
    alpha: float = 3.0
    d_min: float = 1.0
    se_cap: float = 6.0
    mimo_gain: float = 1.5

    @classmethod
    def from_config(cls, radio: RadioConfig) -> 'PropagationModel':
        return cls(radio.pl0_db, radio.alpha, radio.d_min_m, radio.se_cap, radio.mimo_gain)

    def path_loss(self, distance):
        return path_loss(distance, self.pl0, self.alpha, self.d_min)

    def rate(self, sinr_db, bandwidth, resource_fraction=1.0):
        return rate_from_sinr(sinr_db, bandwidth, resource_fraction, self.se_cap, self.mimo_gain)


DEFAULT_MODEL = PropagationModel()


# ============== PROPAGATION / LINK RATE ==============

def path_loss(distance, pl0: float = 38.0, alpha: float = 3.0, d_min: float = 1.0):
    """Log-distance path loss in dB: PL0 + 10 alpha log10(max(d, d_min) / 1 m)."""
    d = np.maximum(np.asarray(distance, dtype=float), d_min)
    loss = pl0 + 10.0 * alpha * np.log10(d)
    return float(loss) if np.ndim(loss) == 0 else loss


def noise_power_dbm(bandwidth: float, noise_figure: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth) + noise_figure


def _distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def sinr(ue: UserEquipment, node: RadioNode, active_interferers: Iterable[RadioNode],
         model: PropagationModel = DEFAULT_MODEL) -> float:
    """SINR in dB of ``node`` at ``ue``.

    Only interferers in the node's reuse group that are actively transmitting
    (i.e. present in ``active_interferers``) contribute.
    """
    signal_mw = 10 ** ((node.tx_power - model.path_loss(_distance(ue.position, node.position))) / 10)
    noise_mw = 10 ** (noise_power_dbm(node.bandwidth, ue.noise_figure) / 10)
    interference_mw = sum(
        10 ** ((other.tx_power - model.path_loss(_distance(ue.position, other.position))) / 10)
        for other in active_interferers
        if other.id != node.id and other.reuse_group == node.reuse_group
    )
    return 10 * math.log10(signal_mw / (noise_mw + interference_mw))


def rate_from_sinr(sinr_db, bandwidth: float, resource_fraction: float = 1.0,
                   se_cap: float = 6.0, mimo_gain: float = 1.5):
    """Shannon rate capped at ``se_cap`` bit/s/Hz, scaled by the MIMO gain."""
    if not 0.0 <= resource_fraction <= 1.0:
        raise ValueError(f"resource_fraction must lie in [0, 1], got {resource_fraction}")
    efficiency = np.minimum(np.log2(1.0 + 10 ** (np.asarray(sinr_db, dtype=float) / 10)), se_cap)
    rate = resource_fraction * bandwidth * efficiency * mimo_gain
    return float(rate) if np.ndim(rate) == 0 else rate


# ============== TOPOLOGY ==============

@dataclass
class NetworkGraph:
    graph: nx.Graph
    radio_nodes: dict
    width: float
    height: float
    gateway: str = GATEWAY

    def kind(self, node_id: str) -> str:
        return self.graph.nodes[node_id]['kind']

    def nodes_of_kind(self, kind: str) -> list:
        return sorted(n for n, data in self.graph.nodes(data=True) if data['kind'] == kind)

    @property
    def hosts(self) -> list:
        """Nodes able to host a v-u-SGW: the gateway plus dedicated hosts."""
        return [self.gateway] + self.nodes_of_kind('vusgw_host')

    def capacity(self, a: str, b: str) -> float:
        return self.graph.edges[a, b]['capacity']

    def latency(self, a: str, b: str) -> float:
        return self.graph.edges[a, b]['latency']

    def route_latency(self, nodes) -> float:
        return sum(self.latency(a, b) for a, b in zip(nodes, nodes[1:]))

    def wired_links(self) -> list:
        return sorted((min(a, b), max(a, b), d['capacity'], d['latency'])
                      for a, b, d in self.graph.edges(data=True))

    def validate(self):
        if self.graph.number_of_nodes() == 0 or not nx.is_connected(self.graph):
            raise TopologyError("network graph must be connected")
        for a, b, cap, _ in self.wired_links():
            if cap <= 0:
                raise TopologyError(f"link {a}-{b}: capacity must be > 0")
        return self

    def to_text(self) -> str:
        """One record per line: ``node ...`` then ``link a b capacity latency``."""
        lines = [f"area {self.width!r} {self.height!r}"]
        for node_id in sorted(self.graph.nodes):
            kind = self.kind(node_id)
            if kind == 'radio_node':
                rn = self.radio_nodes[node_id]
                lines.append(
                    f"node {node_id} {kind} {rn.position[0]!r} {rn.position[1]!r} "
                    f"{rn.tx_power!r} {rn.bandwidth!r} {rn.reuse_group}"
                )
            else:
                lines.append(f"node {node_id} {kind}")
        for a, b, cap, lat in self.wired_links():
            lines.append(f"link {a} {b} {cap!r} {lat!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> 'NetworkGraph':
        graph = nx.Graph()
        radio_nodes = {}
        width = height = 0.0
        gateway = GATEWAY
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts or parts[0].startswith('#'):
                continue
            try:
                if parts[0] == 'area':
                    width, height = float(parts[1]), float(parts[2])
                elif parts[0] == 'node':
                    node_id, kind = parts[1], parts[2]
                    if kind not in NODE_KINDS:
                        raise TopologyError(f"unknown node kind {kind!r}")
                    graph.add_node(node_id, kind=kind)
                    if kind == 'gateway':
                        gateway = node_id
                    if kind == 'radio_node':
                        x, y, tx, bw, group = parts[3:8]
                        radio_nodes[node_id] = RadioNode(node_id, (float(x), float(y)),
                                                         float(tx), float(bw), int(group))
                elif parts[0] == 'link':
                    graph.add_edge(parts[1], parts[2], capacity=float(parts[3]), latency=float(parts[4]))
                else:
                    raise TopologyError(f"unknown record {parts[0]!r}")
            except (IndexError, ValueError) as e:
                raise TopologyError(f"line {lineno}: {e}") from e
        return cls(graph, radio_nodes, width, height, gateway).validate()


def _spread(count: int, among: int) -> list:
    """``count`` indices spread evenly over ``range(among)``."""
    return sorted({int(round(i * among / count)) % among for i in range(count)})


def build_topology(topology: TopologyConfig, radio: RadioConfig) -> NetworkGraph:
    """Random dense deployment with a two-tier backhaul.

    Radio nodes and routers are placed uniformly in a square of the configured
    area; each radio node hangs off its nearest router, routers form a ring,
    and ``gateway_routers`` routers evenly spread around the ring connect to the
    gateway. Dedicated v-u-SGW hosts hang off routers the same way.
    """
    if topology.area_km2 <= 0:
        raise TopologyError("topology.area_km2 must be > 0")
    if topology.radio_nodes < 1 or topology.routers < 1 or topology.gateway_routers < 1:
        raise TopologyError("topology node counts must be >= 1")
    if topology.gateway_routers > topology.routers:
        raise TopologyError("topology.gateway_routers cannot exceed topology.routers")

    rng = np.random.default_rng(topology.seed)
    side = math.sqrt(topology.area_km2) * 1000.0
    lat = topology.link_latency_s

    graph = nx.Graph()
    graph.add_node(GATEWAY, kind='gateway')

    router_ids = [f"rt{i:02d}" for i in range(topology.routers)]
    router_pos = rng.uniform(0.0, side, size=(topology.routers, 2))
    for rid in router_ids:
        graph.add_node(rid, kind='router')
    if topology.routers == 2:
        graph.add_edge(router_ids[0], router_ids[1], capacity=topology.core_capacity_bps, latency=lat)
    elif topology.routers > 2:
        for i, rid in enumerate(router_ids):
            graph.add_edge(rid, router_ids[(i + 1) % topology.routers],
                           capacity=topology.core_capacity_bps, latency=lat)
    for i in _spread(topology.gateway_routers, topology.routers):
        graph.add_edge(GATEWAY, router_ids[i], capacity=topology.gateway_capacity_bps, latency=lat)

    for j, i in enumerate(_spread(topology.vusgw_hosts, topology.routers) if topology.vusgw_hosts else []):
        host = f"vh{j}"
        graph.add_node(host, kind='vusgw_host')
        graph.add_edge(host, router_ids[i], capacity=topology.core_capacity_bps, latency=lat)

    radio_nodes = {}
    node_pos = rng.uniform(0.0, side, size=(topology.radio_nodes, 2))
    for i, pos in enumerate(node_pos):
        node_id = f"rn{i:03d}"
        nearest = int(np.argmin(np.hypot(*(router_pos - pos).T)))
        graph.add_node(node_id, kind='radio_node')
        graph.add_edge(node_id, router_ids[nearest], capacity=topology.access_capacity_bps, latency=lat)
        radio_nodes[node_id] = RadioNode(
            node_id, (float(pos[0]), float(pos[1])), radio.tx_power_dbm, radio.bandwidth_hz,
            i % max(1, radio.reuse_groups),
        )

    logger.debug("built topology: %d radio nodes, %d routers, side %.1f m",
                 topology.radio_nodes, topology.routers, side)
    return NetworkGraph(graph, radio_nodes, side, side).validate()


# ============== MOBILITY ==============

def place_users(mobility: MobilityConfig, width: float, height: float,
                rng: np.random.Generator, noise_figure: float = 9.0) -> list:
    """Users on two parallel lanes through the middle of the area, opposite directions."""
    speed = mobility.speed_kmh / 3.6
    lanes_y = (height / 2 - mobility.lane_spacing_m / 2, height / 2 + mobility.lane_spacing_m / 2)
    ues = []
    for i in range(mobility.ues):
        lane = i % 2
        x = float(rng.uniform(0.0, width))
        direction = 1.0 if lane == 0 else -1.0
        ues.append(UserEquipment(f"ue{i:03d}", (x, lanes_y[lane]), (direction * speed, 0.0),
                                 lane, (), noise_figure))
    return ues


def step_mobility(ues, dt: float, width: float) -> list:
    """Advance every UE by ``velocity * dt``; leaving the strip wraps to its entry edge."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    moved = []
    for ue in ues:
        x = ue.position[0] + ue.velocity[0] * dt
        y = ue.position[1] + ue.velocity[1] * dt
        if width > 0 and not 0.0 <= x < width:
            x = x % width
        moved.append(replace(ue, position=(x, y)))
    return moved


def best_n_cells(ue: UserEquipment, nodes, n: int, model: PropagationModel = DEFAULT_MODEL) -> tuple:
    """The ``n`` radio nodes with the smallest path loss, ties by node id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = sorted(nodes, key=lambda node: (model.path_loss(_distance(ue.position, node.position)), node.id))
    return tuple(node.id for node in ranked[:n])


class ChannelMap:
    """Vectorized channel evaluation over every radio node of a topology.

    Same formulas as ``path_loss``/``sinr``/``rate_from_sinr``; the simulation
    uses it to sample all users at once each mobility tick.
    """

    def __init__(self, radio_nodes: dict, model: PropagationModel):
        self.model = model
        self.node_ids = sorted(radio_nodes)
        self.index = {node_id: i for i, node_id in enumerate(self.node_ids)}
        nodes = [radio_nodes[i] for i in self.node_ids]
        self.positions = np.array([n.position for n in nodes], dtype=float)
        self.tx_power = np.array([n.tx_power for n in nodes], dtype=float)
        self.bandwidth = np.array([n.bandwidth for n in nodes], dtype=float)
        self.group = np.array([n.reuse_group for n in nodes], dtype=int)

    def path_losses(self, ue: UserEquipment) -> np.ndarray:
        d = np.hypot(self.positions[:, 0] - ue.position[0], self.positions[:, 1] - ue.position[1])
        return path_loss(d, self.model.pl0, self.model.alpha, self.model.d_min)

    def best_n(self, ue: UserEquipment, n: int, losses: Optional[np.ndarray] = None) -> tuple:
        losses = self.path_losses(ue) if losses is None else losses
        order = sorted(range(len(self.node_ids)), key=lambda i: (losses[i], self.node_ids[i]))
        return tuple(self.node_ids[i] for i in order[:n])

    def sample(self, ue: UserEquipment, node_ids, active: np.ndarray,
               losses: Optional[np.ndarray] = None, muted: Optional[dict] = None) -> dict:
        """ChannelSample per node in ``node_ids`` given the active-transmitter mask.

        ``muted`` optionally maps a node id to a mask of interferers that are
        coordinated away for that node's users.
        """
        losses = self.path_losses(ue) if losses is None else losses
        rx_mw = 10 ** ((self.tx_power - losses) / 10)
        samples = {}
        for node_id in node_ids:
            i = self.index[node_id]
            mask = active & (self.group == self.group[i])
            mask[i] = False
            if muted and node_id in muted:
                mask &= ~muted[node_id]
            noise_mw = 10 ** (noise_power_dbm(self.bandwidth[i], ue.noise_figure) / 10)
            value = 10 * math.log10(rx_mw[i] / (noise_mw + float(rx_mw[mask].sum())))
            samples[node_id] = ChannelSample(ue.id, node_id, float(losses[i]), value,
                                             self.model.rate(value, float(self.bandwidth[i])))
        return samples

    def trajectory(self, ue: UserEquipment, horizon: float, step: float, width: float) -> list:
        """Serving (best) node along the UE's linearly extrapolated path."""
        serving = []
        current = ue
        for _ in range(max(1, int(round(horizon / step))) + 1):
            serving.append(self.best_n(current, 1)[0])
            current = step_mobility([current], step, width)[0]
        return serving
