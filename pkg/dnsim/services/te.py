"""
Path-based multipath traffic engineering: candidate paths, rate allocation
(max-sum and max-min over backhaul and wireless rate-region constraints),
and v-u-SGW placement.

Rates are handed to the LP in Mbit/s so the tableau stays well conditioned.
"""
import io
import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import networkx as nx

from .logs import get_logger
from .netmodel import NetworkGraph
from .simplex import solve_lp, LPError

logger = get_logger('te')

SCALE = 1e6
SATURATION_TOL = 1e-6
VERIFY_TOL = 1e-6
TRAFFIC_CLASSES = ('best_effort', 'video')


class TEError(ValueError):
    pass


class RoutingError(TEError):
    pass


class PlacementError(TEError):
    pass


@dataclass(frozen=True)
class Commodity:
    flow_id: str
    source: str
    ue_id: str
    demand: Optional[float]
    traffic_class: str
    serving_set: tuple = ()
    peak_rates: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.traffic_class not in TRAFFIC_CLASSES:
            raise TEError(f"flow {self.flow_id}: unknown class {self.traffic_class!r}")
        if self.traffic_class == 'video' and not (self.demand and self.demand > 0):
            raise TEError(f"flow {self.flow_id}: video demand must be > 0")

    def peak_rate(self, node_id: str) -> float:
        return float(self.peak_rates.get(node_id, 0.0))


@dataclass(frozen=True)
class Path:
    path_id: int
    flow_id: str
    nodes: tuple
    ue_id: str

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise RoutingError(f"path {self.flow_id}/{self.path_id} has a loop")

    @property
    def radio_node(self) -> str:
        return self.nodes[-1]

    @property
    def links(self) -> tuple:
        return tuple((min(a, b), max(a, b)) for a, b in zip(self.nodes, self.nodes[1:]))

    @property
    def hop_count(self) -> int:
        # wired hops plus the wireless hop to the UE
        return len(self.nodes)


@dataclass(frozen=True)
class RateRegionConstraint:
    node_id: str
    terms: tuple


@dataclass
class TESolution:
    rates: dict
    objective: float
    timestamp: float = 0.0
    video_demands_met: bool = True

    def flow_rate(self, flow_id: str) -> float:
        return sum(rate for (fid, _), rate in self.rates.items() if fid == flow_id)

    def path_rate(self, flow_id: str, path_id: int) -> float:
        return self.rates.get((flow_id, path_id), 0.0)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['flow_id', 'path_id', 'rate_bps'])
        for (flow_id, path_id), rate in sorted(self.rates.items()):
            writer.writerow([flow_id, path_id, repr(float(rate))])
        return buffer.getvalue()


# ============== PATHS ==============

def shortest_route(graph: nx.Graph, source: str, target: str) -> Optional[list]:
    """Hop-shortest route, ties broken by the lexicographically smallest node list."""
    try:
        return min(nx.all_shortest_paths(graph, source, target))
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


def candidate_paths(graph: NetworkGraph, commodity: Commodity, k: int) -> list:
    if k < 1:
        raise TEError("k must be >= 1")
    paths = []
    for node_id in commodity.serving_set:
        if len(paths) == k:
            break
        route = shortest_route(graph.graph, commodity.source, node_id)
        if route is None:
            logger.debug("flow %s: radio node %s unreachable from %s", commodity.flow_id, node_id, commodity.source)
            continue
        paths.append(Path(len(paths), commodity.flow_id, tuple(route), commodity.ue_id))
    if not paths:
        raise RoutingError(f"flow {commodity.flow_id} is unroutable")
    return paths


def rate_region_constraints(commodities, paths: dict) -> list:
    terms = defaultdict(list)
    for commodity in commodities:
        for path in paths.get(commodity.flow_id, []):
            terms[path.radio_node].append((commodity.flow_id, path.path_id, commodity.peak_rate(path.radio_node)))
    return [RateRegionConstraint(node_id, tuple(terms[node_id])) for node_id in sorted(terms)]


# ============== LP ASSEMBLY ==============

class _Program:
    """Variables x[(flow, path)] and the constraints every allocation shares."""

    def __init__(self, commodities, paths: dict, graph: NetworkGraph, be_ceiling_bps: Optional[float]):
        self.commodities = list(commodities)
        self.variables = []
        for commodity in self.commodities:
            flow_paths = paths.get(commodity.flow_id) or []
            if not flow_paths:
                raise TEError(f"flow {commodity.flow_id} has no candidate paths")
            self.variables.extend((commodity.flow_id, path) for path in flow_paths)
        self.index = {(fid, path.path_id): i for i, (fid, path) in enumerate(self.variables)}
        n = len(self.variables)

        self.flows = np.zeros((len(self.commodities), n))
        for i, commodity in enumerate(self.commodities):
            for j, (fid, _) in enumerate(self.variables):
                if fid == commodity.flow_id:
                    self.flows[i, j] = 1.0

        rows, rhs = [], []
        link_vars = defaultdict(list)
        for j, (_, path) in enumerate(self.variables):
            for link in path.links:
                link_vars[link].append(j)
        for link in sorted(link_vars):
            row = np.zeros(n)
            row[link_vars[link]] = 1.0
            rows.append(row)
            rhs.append(graph.capacity(*link) / SCALE)

        by_flow = {c.flow_id: c for c in self.commodities}
        for constraint in rate_region_constraints(self.commodities, paths):
            row = np.zeros(n)
            for fid, path_id, peak in constraint.terms:
                j = self.index[(fid, path_id)]
                if peak > 0:
                    row[j] = SCALE / peak
                else:
                    blocked = np.zeros(n)
                    blocked[j] = 1.0
                    rows.append(blocked)
                    rhs.append(0.0)
            if row.any():
                rows.append(row)
                rhs.append(1.0)

        self.ceilings = {}
        for i, commodity in enumerate(self.commodities):
            ceiling = commodity.demand if commodity.traffic_class == 'video' else be_ceiling_bps
            if ceiling is not None:
                self.ceilings[commodity.flow_id] = ceiling
                rows.append(self.flows[i].copy())
                rhs.append(ceiling / SCALE)

        self.A_ub = np.array(rows).reshape(-1, n)
        self.b_ub = np.array(rhs, dtype=float)
        self.by_flow = by_flow

    @property
    def size(self) -> int:
        return len(self.variables)

    def video_rows(self):
        idx = [i for i, c in enumerate(self.commodities) if c.traffic_class == 'video']
        return self.flows[idx], np.array([self.commodities[i].demand / SCALE for i in idx])

    def solution(self, x: np.ndarray, objective: float, timestamp: float, demands_met: bool) -> TESolution:
        rates = {(fid, path.path_id): float(value) * SCALE for (fid, path), value in zip(self.variables, x)}
        return TESolution(rates, objective * SCALE, timestamp, demands_met)


def _lp(*args, **kwargs):
    try:
        return solve_lp(*args, **kwargs)
    except LPError as e:
        raise TEError(f"rate allocation failed: {e}") from e


def _with_column(matrix: np.ndarray, column) -> np.ndarray:
    return np.hstack([matrix, np.asarray(column, dtype=float).reshape(matrix.shape[0], -1)])


# ============== ALLOCATION ==============

def solve_max_sum(commodities, paths: dict, graph: NetworkGraph, be_ceiling_bps: Optional[float] = 2e7,
                  timestamp: float = 0.0) -> TESolution:
    """Maximize the total allocated rate.

    Video flows are capped at their demand and asked to meet it; if the demand
    floors cannot all be met together they are dropped and the solution is
    flagged ``video_demands_met=False``.
    """
    program = _Program(commodities, paths, graph, be_ceiling_bps)
    if program.size == 0:
        return TESolution({}, 0.0, timestamp)

    c = np.ones(program.size)
    A_lb, b_lb = program.video_rows()
    demands_met = True
    try:
        result = solve_lp(c, program.A_ub, program.b_ub, A_lb, b_lb, maximize=True)
    except LPError:
        demands_met = False
        result = _lp(c, program.A_ub, program.b_ub, maximize=True)

    solution = program.solution(result.x, result.objective, timestamp, demands_met)
    verify_solution(solution, commodities, paths, graph, be_ceiling_bps)
    return solution


def solve_max_min(commodities, paths: dict, graph: NetworkGraph, be_ceiling_bps: Optional[float] = 2e7,
                  timestamp: float = 0.0) -> TESolution:
    """Lexicographic max-min fair allocation by progressive filling.

    Each round maximizes the common rate ``t`` of the unfrozen flows, then
    freezes the flows that cannot individually rise above ``t`` while every
    other flow keeps its level. A final LP returns the cheapest allocation
    meeting the frozen levels.
    """
    program = _Program(commodities, paths, graph, be_ceiling_bps)
    if program.size == 0:
        return TESolution({}, 0.0, timestamp)

    n = program.size
    n_flows = len(program.commodities)
    A_base = _with_column(program.A_ub, np.zeros(program.A_ub.shape[0]))
    frozen = {}
    unfrozen = list(range(n_flows))

    def floors(levels: dict, extra_cols: int = 1):
        """Rows  flow_i . x >= level_i  for the given flow levels."""
        if not levels:
            return np.zeros((0, n + extra_cols)), np.zeros(0)
        order = sorted(levels)
        A = np.hstack([program.flows[order], np.zeros((len(order), extra_cols))])
        b = np.array([max(0.0, levels[i] - 1e-9 * max(1.0, levels[i])) for i in order])
        return A, b

    rounds = 0
    while unfrozen:
        rounds += 1
        # maximize t subject to flow_u . x >= t for every unfrozen u
        level_rows = np.hstack([-program.flows[unfrozen], np.ones((len(unfrozen), 1))])
        A_lb, b_lb = floors(frozen)
        objective = np.zeros(n + 1)
        objective[-1] = 1.0
        t_star = _lp(objective, np.vstack([A_base, level_rows]),
                     np.concatenate([program.b_ub, np.zeros(len(unfrozen))]),
                     A_lb, b_lb, maximize=True).objective

        # joint perturbation: slack s_u in [0, 1] per unfrozen flow
        held = dict(frozen)
        held.update({u: t_star for u in unfrozen})
        k = len(unfrozen)
        A_ub = np.hstack([program.A_ub, np.zeros((program.A_ub.shape[0], k))])
        A_ub = np.vstack([A_ub, np.hstack([np.zeros((k, n)), np.eye(k)])])
        b_ub = np.concatenate([program.b_ub, np.ones(k)])
        A_lb, b_lb = floors(held, extra_cols=k)
        for row_idx, flow in enumerate(sorted(held)):
            if flow in unfrozen:
                A_lb[row_idx, n + unfrozen.index(flow)] = -1.0
        objective = np.concatenate([np.zeros(n), np.ones(k)])
        slack = _lp(objective, A_ub, b_ub, A_lb, b_lb, maximize=True).x
        candidates = [u for i, u in enumerate(unfrozen) if slack[n + i] <= SATURATION_TOL]

        saturated = []
        for u in candidates:
            A_lb, b_lb = floors({f: v for f, v in held.items() if f != u}, extra_cols=0)
            best = _lp(program.flows[u], program.A_ub, program.b_ub, A_lb, b_lb, maximize=True).objective
            if best <= t_star + SATURATION_TOL * max(1.0, t_star):
                saturated.append(u)
        if not saturated:
            saturated = candidates or list(unfrozen)
        for u in saturated:
            frozen[u] = t_star
            unfrozen.remove(u)

    A_lb, b_lb = floors(frozen, extra_cols=0)
    result = _lp(np.ones(n), program.A_ub, program.b_ub, A_lb, b_lb, maximize=False)
    logger.debug("max-min allocation: %d flows in %d rounds", n_flows, rounds)

    demands_met = all(
        frozen[i] * SCALE >= c.demand * (1 - VERIFY_TOL)
        for i, c in enumerate(program.commodities) if c.traffic_class == 'video'
    )
    solution = program.solution(result.x, result.objective, timestamp, demands_met)
    verify_solution(solution, commodities, paths, graph, be_ceiling_bps)
    return solution


def verify_solution(solution: TESolution, commodities, paths: dict, graph: NetworkGraph,
                    be_ceiling_bps: Optional[float] = 2e7, tol: float = VERIFY_TOL):
    """Raise TEError if the solution breaks any constraint by more than ``tol`` (relative)."""
    problems = []
    link_load = defaultdict(float)
    node_share = defaultdict(float)
    for commodity in commodities:
        total = 0.0
        for path in paths.get(commodity.flow_id, []):
            rate = solution.path_rate(commodity.flow_id, path.path_id)
            total += rate
            if rate < -tol * SCALE:
                problems.append(f"{commodity.flow_id}/{path.path_id}: negative rate {rate}")
            for link in path.links:
                link_load[link] += rate
            peak = commodity.peak_rate(path.radio_node)
            if peak > 0:
                node_share[path.radio_node] += rate / peak
            elif rate > tol * SCALE:
                problems.append(f"{commodity.flow_id}/{path.path_id}: rate on a zero-peak link")
        ceiling = commodity.demand if commodity.traffic_class == 'video' else be_ceiling_bps
        if ceiling is not None and total > ceiling * (1 + tol) + tol:
            problems.append(f"{commodity.flow_id}: {total} above ceiling {ceiling}")
        if commodity.traffic_class == 'video' and solution.video_demands_met \
                and total < commodity.demand * (1 - tol) - tol * SCALE:
            problems.append(f"{commodity.flow_id}: {total} below demand {commodity.demand}")
    for link, load in link_load.items():
        capacity = graph.capacity(*link)
        if load > capacity * (1 + tol) + tol:
            problems.append(f"link {link[0]}-{link[1]}: load {load} above capacity {capacity}")
    for node_id, share in node_share.items():
        if share > 1 + tol:
            problems.append(f"radio node {node_id}: time share {share}")
    if problems:
        raise TEError("; ".join(problems))


# ============== PLACEMENT / SCHEDULE ==============

def _divergence_at_anchor(route_a: list, route_b: list) -> bool:
    """True when two routes from the same anchor already differ at their first hop."""
    if len(route_a) < 2 or len(route_b) < 2:
        return True
    return route_a[1] != route_b[1]


def placement_cost(graph: NetworkGraph, host: str, trajectory, weights, opened: set) -> Optional[float]:
    routes = {}
    for node_id in dict.fromkeys(trajectory):
        route = shortest_route(graph.graph, host, node_id)
        if route is None:
            return None
        routes[node_id] = route
    expected_hops = float(np.mean([len(routes[n]) - 1 for n in trajectory]))
    changes = [(a, b) for a, b in zip(trajectory, trajectory[1:]) if a != b]
    reaches = (sum(_divergence_at_anchor(routes[a], routes[b]) for a, b in changes) / len(changes)
               if changes else 0.0)
    w_hops, w_change, w_open = weights
    return w_hops * expected_hops + w_change * reaches + w_open * (0.0 if host in opened else 1.0)


def place_vusgw(graph: NetworkGraph, hosts, trajectories: dict, weights=(1.0, 10.0, 5.0),
                open_hosts=()) -> dict:
    """Host per UE minimizing the weighted hop / path-change / new-host cost.

    UEs are placed in id order; a host chosen for one UE counts as open for
    the next ones. Ties go to the host listed first.
    """
    hosts = list(hosts)
    if not hosts:
        raise PlacementError("no v-u-SGW hosts configured")
    opened = set(open_hosts)
    assignment = {}
    for ue_id in sorted(trajectories):
        trajectory = list(trajectories[ue_id])
        if not trajectory:
            raise PlacementError(f"{ue_id}: empty trajectory")
        best = None
        for host in hosts:
            cost = placement_cost(graph, host, trajectory, weights, opened)
            if cost is not None and (best is None or cost < best[0] - 1e-12):
                best = (cost, host)
        if best is None:
            raise PlacementError(f"{ue_id}: no reachable v-u-SGW host")
        assignment[ue_id] = best[1]
        opened.add(best[1])
    return assignment


def rerun_schedule(now: float, last_run: Optional[float], period: float = 0.5,
                   handover: bool = False, on_handover: bool = True) -> bool:
    if last_run is None:
        return True
    if now - last_run >= period - 1e-9:
        return True
    return handover and on_handover
