"""
Discrete-event simulation of a dense radio access network.

One ``Simulation`` wires the world model (``netmodel``), traffic
engineering (``te``), the per-UE virtual gateways (``vusgw``) and the
protocol machinery (``protocols``/``scheduler``) into simpy processes:

    tti        radio scheduling and HARQ at every backlogged node
    mobility   UE movement, channel sampling, handovers
    report     node utilization, buffer status and on-demand loss reports
    te         periodic rate allocation
    dispatch   gateway pacing onto the wired paths
    sources    one best-effort or video process per UE

Everything random is drawn from generators seeded by ``(seed, topology.seed)``,
and simultaneous events are ordered by simpy's insertion order, so a run is
a pure function of its configuration and seed.
"""
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import simpy

from . import fountain_codec as fc
from . import netmodel, te
from .logs import get_logger
from .metrics import Metrics, SessionRecord
from .protocols import (PROTOCOL_STACKS, HarqModel, HarqOutcome, HarqProcess, TcpDReceiver, handover_execute,
                        harq_transmit, sdp_select)
from .scenario import ScenarioConfig
from .scheduler import Candidate, ProportionalFair, tti_schedule
from .traffic import VideoSession, be_generator, frame_sizes, video_generator
from .vusgw import BufferStatusReport, VirtualGateway

EPS = 1e-9
SDP_TRANSPORTS = ('fc', 'fc_mc', 'od_fc', 'fixed_rate')
EVENT_KINDS = ('tti', 'mobility_tick', 'te_run', 'buffer_report', 'dispatch', 'packet_arrival', 'decode_ack',
               'purge', 'handover', 'session_start', 'session_end', 'frame_deadline')
IDLE_UTILIZATION = 0.2
UTILIZATION_WINDOW_S = 1.0
PLACEMENT_HORIZON_S = 5.0
PLACEMENT_STEP_S = 0.5


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: str
    detail: str = ''


@dataclass
class Delivery:
    duplicate: bool = False
    stale: bool = False
    corrupted: bool = False
    block_done: Optional[int] = None
    group_done: Optional[tuple] = None


class FlowReceiver:
    """UE side of one coded or plain flow: per-block decoders grouped by application object."""

    def __init__(self, symbol_size: int):
        self.symbol_size = symbol_size
        self.blocks = {}
        self.decoders = {}
        self.plain = {}
        self.group_of = {}
        self.pending = defaultdict(set)
        self.closed = set()

    def expect(self, group: tuple, jobs):
        for job in jobs:
            self.blocks[job.block_id] = (job.K, job.mode, job.source)
            self.group_of[job.block_id] = group
            self.pending[group].add(job.block_id)

    def abandon(self, block_id: int):
        self.closed.add(block_id)
        self.decoders.pop(block_id, None)
        self.plain.pop(block_id, None)
        group = self.group_of.pop(block_id, None)
        if group is not None:
            self.pending.pop(group, None)

    def received_systematic(self, block_id: int) -> list:
        decoder = self.decoders.get(block_id)
        if decoder is None:
            return []
        return sorted(e for e in decoder.received if isinstance(e, int) and e < decoder.K)

    def rank(self, block_id: int) -> int:
        decoder = self.decoders.get(block_id)
        return decoder.rank if decoder is not None else 0

    def on_packet(self, packet) -> Delivery:
        block_id = packet.block_id
        if block_id in self.closed or block_id not in self.blocks:
            return Delivery(stale=True)
        k, mode, source = self.blocks[block_id]
        corrupted = False
        if mode == 'plain':
            got = self.plain.setdefault(block_id, set())
            if packet.esi in got:
                return Delivery(duplicate=True)
            got.add(packet.esi)
            done = len(got) >= k
        else:
            decoder = self.decoders.get(block_id)
            if decoder is None:
                decoder = fc.DecoderState(block_id, k, self.symbol_size,
                                          track_payload=source is not None and packet.symbol.payload is not None,
                                          length=source.length if source is not None else None)
                self.decoders[block_id] = decoder
            symbol = packet.symbol
            key = symbol.esi if symbol.support is None else (symbol.esi, symbol.support)
            if key in decoder.received:
                return Delivery(duplicate=True)
            decoder.push(symbol)
            done = decoder.decodable
            if done and decoder.track_payload:
                corrupted = decoder.recovered_block().data() != source.data()

        if not done:
            return Delivery()
        group = self.group_of.pop(block_id, None)
        self.closed.add(block_id)
        self.decoders.pop(block_id, None)
        self.plain.pop(block_id, None)
        self.blocks.pop(block_id, None)
        group_done = None
        if group is not None:
            self.pending[group].discard(block_id)
            if not self.pending[group]:
                del self.pending[group]
                group_done = group
        return Delivery(corrupted=corrupted, block_done=block_id, group_done=group_done)


@dataclass
class UeState:
    ue: netmodel.UserEquipment
    rng: np.random.Generator
    gateway: VirtualGateway
    flow_id: str
    receiver: FlowReceiver
    serving: tuple = ()
    sinr: dict = field(default_factory=dict)
    rate_est: dict = field(default_factory=dict)
    join_ready: dict = field(default_factory=dict)
    tcp_rx: dict = field(default_factory=dict)
    session: object = None
    group: Optional[tuple] = None
    done: Optional[simpy.Event] = None
    video_active: bool = False
    frames: dict = field(default_factory=dict)
    block_harq: dict = field(default_factory=dict)
    block_forward: dict = field(default_factory=dict)


def video_wire_rate(config: ScenarioConfig, transport: str) -> float:
    """Bits/s a video flow puts on the wire, symbol overhead and fixed-rate repair included."""
    traffic = config.traffic
    i_bits, p_bits = frame_sizes(traffic.video_rate_bps, traffic.fps, traffic.gop, traffic.i_to_p_ratio)
    payload_bits = traffic.symbol_size * 8
    k_i, k_p = math.ceil(i_bits / payload_bits), math.ceil(p_bits / payload_bits)
    n_i, n_p = k_i, k_p
    if transport == 'fixed_rate':
        n_i = fc.fixed_rate_symbol_count(k_i, traffic.i_frame_fc_ratio)
        if k_p >= config.protocol.fc_small_block_threshold:
            n_p = fc.fixed_rate_symbol_count(k_p, traffic.i_frame_fc_ratio)
    wire_bits = fc.CodedSymbol.wire_size(traffic.symbol_size) * 8
    return (n_i + (traffic.gop - 1) * n_p) * wire_bits * traffic.fps / traffic.gop


class Simulation:

    def __init__(self, config: ScenarioConfig, seed: int):
        if config.protocol.name not in PROTOCOL_STACKS:
            raise SimulationError(f"unknown protocol {config.protocol.name!r}")
        self.config = config
        self.seed = seed
        self.stack = PROTOCOL_STACKS[config.protocol.name]
        video = config.traffic.traffic_class == 'video'
        if video != (self.stack.traffic_class == 'video'):
            raise SimulationError(
                f"protocol {self.stack.name} does not carry {config.traffic.traffic_class} traffic"
            )
        self.logger = get_logger('sim')
        self.env = simpy.Environment()
        self.metrics = Metrics()
        self._seq = 0

        self.graph = netmodel.build_topology(config.topology, config.radio)
        self.model = netmodel.PropagationModel.from_config(config.radio)
        self.cmap = netmodel.ChannelMap(self.graph.radio_nodes, self.model)
        self.harq_model = HarqModel.from_config(config.protocol)
        self.n_serving = config.mobility.serving_cells or self.stack.paths
        self.video_demand = video_wire_rate(config, self.stack.transport) if video else None

        streams = np.random.SeedSequence([seed, config.topology.seed]).spawn(2 + config.mobility.ues)
        placement_rng = np.random.default_rng(streams[0])
        self.radio_rng = np.random.default_rng(streams[1])
        users = netmodel.place_users(config.mobility, self.graph.width, self.graph.height, placement_rng,
                                     config.radio.noise_figure_db)

        self.queues = {n: {} for n in self.cmap.node_ids}
        self.harq_q = {n: {} for n in self.cmap.node_ids}
        self.credit = {n: {} for n in self.cmap.node_ids}
        self.pf = {n: ProportionalFair() for n in self.cmap.node_ids}
        self.busy = dict.fromkeys(self.cmap.node_ids, 0)
        window = max(1, int(round(UTILIZATION_WINDOW_S / config.run.report_period_s)))
        self.util_hist = {n: deque(maxlen=window) for n in self.cmap.node_ids}
        self.backlogged = set()
        self._routes = {}
        self.last_te = None
        self.te_pending = False
        self.solution = None

        self.ues = {}
        for ue, stream in zip(users, streams[2:]):
            self.ues[ue.id] = self._new_ue(ue, np.random.default_rng(stream))
        self.metrics.ue_ids = list(self.ues)
        self._place_gateways()

    # ---------- setup ----------

    def _new_ue(self, ue, rng) -> UeState:
        protocol, traffic = self.config.protocol, self.config.traffic
        gateway = VirtualGateway(ue.id, netmodel.GATEWAY, protocol.fc_mc_rate_bps, protocol.feedback_beta,
                                 protocol.theta_high_s, protocol.theta_low_s,
                                 with_payload=traffic.payload_mode == 'bytes', tcp_window=protocol.tcp_window,
                                 rto_min=protocol.rto_min_s)
        kind = 'video' if traffic.traffic_class == 'video' else 'be'
        flow_id = f"{ue.id}/{kind}"
        gateway.register(flow_id, traffic.traffic_class, self.stack.transport, traffic.symbol_size,
                         traffic.max_block_symbols)
        return UeState(ue, rng, gateway, flow_id, FlowReceiver(traffic.symbol_size))

    def _trajectory(self, st: UeState) -> list:
        return self.cmap.trajectory(st.ue, PLACEMENT_HORIZON_S, PLACEMENT_STEP_S, self.graph.width)

    def _place_gateways(self):
        hosts = self.graph.hosts
        if len(hosts) == 1:
            return
        assignment = te.place_vusgw(self.graph, hosts, {u: self._trajectory(st) for u, st in self.ues.items()},
                                    self.config.protocol.placement_weights)
        for ue_id, host in assignment.items():
            self.ues[ue_id].gateway.host = host

    def _replace_gateway(self, st: UeState):
        """Re-evaluate the host of an idle gateway before its next session."""
        hosts = self.graph.hosts
        if len(hosts) == 1 or st.gateway.backlog(st.flow_id):
            return
        opened = {other.gateway.host for other in self.ues.values() if other is not st}
        host = te.place_vusgw(self.graph, hosts, {st.ue.id: self._trajectory(st)},
                              self.config.protocol.placement_weights, opened)[st.ue.id]
        if host != st.gateway.host:
            self.logger.debug("%s: v-u-SGW moves %s -> %s", st.ue.id, st.gateway.host, host)
            st.gateway.host = host

    # ---------- helpers ----------

    def _trace(self, kind: str, detail: str = ''):
        if self.config.run.trace_events:
            self.metrics.events.append(Event(self.env.now, self._seq, kind, detail))
        self._seq += 1

    def _after(self, delay: float, fn, *args):
        event = self.env.timeout(max(0.0, delay))
        event.callbacks.append(lambda _event: fn(*args))

    def _route(self, a: str, b: str) -> tuple:
        """(latency, wired hops) of the shortest route between two nodes."""
        key = (a, b) if a <= b else (b, a)
        if key not in self._routes:
            nodes = te.shortest_route(self.graph.graph, *key)
            if nodes is None:
                raise te.RoutingError(f"{a} and {b} are not connected")
            self._routes[key] = (self.graph.route_latency(nodes), len(nodes) - 1)
        return self._routes[key]

    def _uplink_latency(self, st: UeState) -> float:
        if not st.serving:
            return 0.0
        return self._route(st.serving[0], st.gateway.host)[0]

    def _warm(self, start: float) -> bool:
        return start >= self.config.run.warmup_s - EPS

    def _harq_enabled(self, st: UeState, packet) -> bool:
        return st.block_harq.get(packet.block_id, self.stack.harq)

    # ---------- radio: TTI ----------

    def _tti_loop(self):
        tti = self.config.run.tti_s
        while True:
            now = self.env.now
            if self.backlogged:
                self._trace('tti')
                for node_id in sorted(self.backlogged):
                    self._serve(node_id, now, tti)
            yield self.env.timeout(tti)

    def _head(self, node_id: str, ue_id: str, now: float):
        """Next packet this UE can get from the node: due HARQ retries first."""
        harq = self.harq_q[node_id].get(ue_id)
        if harq and harq[0][0] <= now + EPS:
            return harq, harq[0][1]
        queue = self.queues[node_id].get(ue_id)
        if queue and queue[0].ready <= now + EPS:
            return queue, queue[0]
        return None, None

    def _serve(self, node_id: str, now: float, tti: float):
        queues, harq = self.queues[node_id], self.harq_q[node_id]
        if not any(queues.values()) and not any(harq.values()):
            self.backlogged.discard(node_id)
            return
        candidates = []
        for ue_id in sorted(set(queues) | set(harq)):
            if self._head(node_id, ue_id, now)[1] is None:
                continue
            st = self.ues[ue_id]
            if st.join_ready.get(node_id, 0.0) > now + EPS:
                continue
            rate = st.rate_est.get(node_id, 0.0)
            if rate > 0:
                candidates.append(Candidate(ue_id, rate))
        chosen, bits = tti_schedule(candidates, self.config.protocol.scheduler, self.pf[node_id], tti)
        if chosen is None:
            return
        self.busy[node_id] += 1
        st = self.ues[chosen]
        credit = self.credit[node_id].get(chosen, 0.0) + bits
        while True:
            source, packet = self._head(node_id, chosen, now)
            if packet is None:
                credit = 0.0
                break
            if packet.bits > credit:
                break
            credit -= packet.bits
            source.popleft()
            self._transmit(node_id, st, packet, now + tti)
        self.credit[node_id][chosen] = credit

    def _transmit(self, node_id: str, st: UeState, packet, now: float):
        est, true = st.sinr.get(node_id, (0.0, 0.0))
        process = HarqProcess(node_id, st.ue.id, packet, retries=packet.harq_retries)
        outcome = harq_transmit(process, est, true, now, self.radio_rng, self.harq_model,
                                self._harq_enabled(st, packet))
        if outcome is HarqOutcome.DELIVERED:
            self._deliver(st, packet, now)
        elif outcome is HarqOutcome.RETRY:
            packet.harq_retries = process.retries
            self.harq_q[node_id].setdefault(st.ue.id, deque()).append((process.next_time, packet))
        else:
            self.metrics.symbols_lost += 1

    # ---------- UE side ----------

    def _deliver(self, st: UeState, packet, now: float):
        self.metrics.symbols_delivered += 1
        self._trace('packet_arrival', f"{packet.flow_id} {packet.block_id}:{packet.esi}")
        if self.stack.transport == 'tcp_d':
            self._deliver_tcp(st, packet, now)
            return
        delivery = st.receiver.on_packet(packet)
        if delivery.duplicate:
            self.metrics.duplicates += 1
            self.metrics.decode_duplicates += 1
        elif delivery.stale and packet.forwarded:
            self.metrics.duplicates += 1
        if delivery.corrupted:
            self.metrics.corrupted_blocks += 1
            self.logger.error("%s: block %d decoded to the wrong bytes", packet.flow_id, delivery.block_done)
        if delivery.block_done is not None:
            self._after(self._uplink_latency(st), self._decode_ack, st, delivery.block_done)
        if delivery.group_done is not None:
            self._group_done(st, delivery.group_done, now)

    def _deliver_tcp(self, st: UeState, packet, now: float):
        receiver = st.tcp_rx.get(packet.block_id)
        if receiver is None or not receiver.on_packet(packet.esi):
            self.metrics.duplicates += 1
            self.metrics.decode_duplicates += 1
        self._after(self._uplink_latency(st), self._tcp_ack, st, packet.block_id, packet.esi)
        if receiver is not None and receiver.complete:
            del st.tcp_rx[packet.block_id]
            self._group_done(st, ('tcp', packet.block_id), now)

    def _tcp_ack(self, st: UeState, session: int, seq: int):
        st.gateway.tcp_ack(st.flow_id, session, seq, self.env.now)

    def _decode_ack(self, st: UeState, block_id: int):
        self._trace('decode_ack', f"{st.flow_id} {block_id}")
        order = st.gateway.on_decode_ack(st.flow_id, block_id)
        if order is None:
            return
        self.metrics.symbols_purged += order.purged_at_gateway
        for node_id in sorted(set(order.nodes) | set(st.serving)):
            latency = self._route(st.gateway.host, node_id)[0]
            self._after(latency, self._purge_node, node_id, st, block_id, 'purged')

    def _purge_node(self, node_id: str, st: UeState, block_id: int, reason: str):
        removed = 0
        queue = self.queues[node_id].get(st.ue.id)
        if queue:
            kept = deque(p for p in queue if p.block_id != block_id)
            removed += len(queue) - len(kept)
            self.queues[node_id][st.ue.id] = kept
        harq = self.harq_q[node_id].get(st.ue.id)
        if harq:
            kept = deque(entry for entry in harq if entry[1].block_id != block_id)
            removed += len(harq) - len(kept)
            self.harq_q[node_id][st.ue.id] = kept
        if reason == 'expired':
            self.metrics.symbols_expired += removed
        else:
            self.metrics.symbols_purged += removed
        if removed:
            self._trace('purge', f"{node_id} {st.flow_id} {block_id} {removed}")

    def _group_done(self, st: UeState, group: tuple, now: float):
        if group[0] == 'frame':
            entry = st.frames.get(group)
            if entry is not None:
                entry[2] = True
            return
        if group != st.group or st.session is None:
            return
        session = st.session
        session.completion = now
        self._trace('session_end', f"{st.ue.id} {session.index}")
        if self._warm(session.start):
            self.metrics.completed_sessions[st.ue.id] += 1
            self.metrics.sessions.append(SessionRecord(st.ue.id, 'best_effort', session.index, session.start,
                                                       now, True, bits=session.file_size))
        st.session = st.group = None
        st.done.succeed()

    # ---------- traffic sources ----------

    def _be_source(self, st: UeState):
        traffic = self.config.traffic
        generator = be_generator(st.ue.id, st.rng, traffic.mean_off_time, traffic.file_size_bits)
        session = next(generator)
        while True:
            if session.start > self.env.now:
                yield self.env.timeout(session.start - self.env.now)
            self._replace_gateway(st)
            self._trace('session_start', f"{st.ue.id} {session.index}")
            st.session, st.done = session, self.env.event()
            if traffic.payload_mode == 'bytes':
                jobs = st.gateway.ingest(st.flow_id, data=st.rng.bytes(session.file_size // 8))
            else:
                jobs = st.gateway.ingest(st.flow_id, size_bits=session.file_size)
            if self.stack.transport == 'tcp_d':
                job = jobs[0]
                st.tcp_rx[job.block_id] = TcpDReceiver(job.K)
                st.group = ('tcp', job.block_id)
            else:
                st.group = ('session', session.index)
                st.receiver.expect(st.group, jobs)
            self.te_pending = True
            yield st.done
            session = generator.send(self.env.now)

    def _video_source(self, st: UeState):
        traffic = self.config.traffic
        start = float(st.rng.uniform(0.0, 1.0))
        yield self.env.timeout(start)
        st.video_active = True
        self.te_pending = True
        index = 0
        while True:
            session = VideoSession(st.ue.id, index, traffic.video_rate_bps, start, traffic.video_session_s,
                                   frame_interval=1.0 / traffic.fps)
            self._trace('session_start', f"{st.ue.id} {index}")
            for frame in video_generator(st.ue.id, traffic.video_rate_bps, traffic.fps, traffic.gop,
                                         traffic.i_to_p_ratio, traffic.frame_deadline_s, start,
                                         traffic.video_session_s):
                if frame.release > self.env.now:
                    yield self.env.timeout(frame.release - self.env.now)
                self._send_frame(st, session, frame)
            end = start + traffic.video_session_s
            self._after(end + traffic.frame_deadline_s + EPS - self.env.now, self._record_video, st, session)
            if end > self.env.now:
                yield self.env.timeout(end - self.env.now)
            start, index = end, index + 1

    def _send_frame(self, st: UeState, session: VideoSession, frame):
        traffic, protocol = self.config.traffic, self.config.protocol
        session.frames += 1
        if self.stack.transport == 'fixed_rate':
            k = math.ceil(frame.bits / 8 / traffic.symbol_size)
            kind = 'video_I' if frame.kind == 'I' else 'video_P'
            profile = sdp_select(kind, frame_symbols=k, threshold=protocol.fc_small_block_threshold,
                                 scheduler=protocol.scheduler)
            if profile.fc:
                jobs = st.gateway.ingest(st.flow_id, size_bits=frame.bits, release=frame.release,
                                         deadline=frame.deadline, fixed_ratio=traffic.i_frame_fc_ratio,
                                         single_path=not profile.multipath)
            else:
                jobs = st.gateway.ingest(st.flow_id, size_bits=frame.bits, release=frame.release,
                                         deadline=frame.deadline, single_path=True, plain=True)
            for job in jobs:
                st.block_harq[job.block_id] = profile.harq
                st.block_forward[job.block_id] = profile.handover_forwarding
        else:
            jobs = st.gateway.ingest(st.flow_id, size_bits=frame.bits, release=frame.release,
                                     deadline=frame.deadline, single_path=True, plain=True)
        group = ('frame', session.index, frame.index)
        st.receiver.expect(group, jobs)
        st.frames[group] = [session, jobs, False]
        self._after(frame.deadline - self.env.now, self._frame_deadline, st, group)

    def _frame_deadline(self, st: UeState, group: tuple):
        self._trace('frame_deadline', f"{st.ue.id} {group[1]}:{group[2]}")
        session, jobs, done = st.frames.pop(group)
        if done:
            return
        session.missed += 1
        for job in jobs:
            st.receiver.abandon(job.block_id)
            st.block_harq.pop(job.block_id, None)
            st.block_forward.pop(job.block_id, None)
            order = st.gateway.expire(st.flow_id, job.block_id)
            if order is None:
                continue
            self.metrics.symbols_expired += order.purged_at_gateway
            for node_id in sorted(set(order.nodes) | set(st.serving)):
                latency = self._route(st.gateway.host, node_id)[0]
                self._after(latency, self._purge_node, node_id, st, job.block_id, 'expired')

    def _record_video(self, st: UeState, session: VideoSession):
        if self._warm(session.start):
            self.metrics.sessions.append(SessionRecord(
                st.ue.id, 'video', session.index, session.start, session.start + session.duration, True,
                session.outage_fraction, int(session.rate * session.duration),
            ))

    # ---------- gateway dispatch ----------

    def _dispatch_loop(self):
        dt = self.config.run.dispatch_interval_s
        while True:
            now = self.env.now
            for st in self.ues.values():
                gateway = st.gateway
                if self.stack.transport == 'tcp_d':
                    self.metrics.retransmissions += len(gateway.tcp_timeouts(st.flow_id, now))
                if not gateway.backlog(st.flow_id):
                    continue
                packets = gateway.dispatch_tick(st.flow_id, dt, now)
                if packets:
                    self._trace('dispatch', f"{st.flow_id} {len(packets)}")
                for _, packet in packets:
                    self._admit(st, packet)
            yield self.env.timeout(dt)

    def _admit(self, st: UeState, packet):
        if packet.forwarded:
            packet.harq_retries = 0
        else:
            self.metrics.symbols_emitted += 1
        self.metrics.backhaul_bytes += packet.bits // 8 * self._route(st.gateway.host, packet.node_id)[1]
        queue = self.queues[packet.node_id].setdefault(st.ue.id, deque())
        if packet.forwarded:
            # forwarded symbols jump the queue, in the order they come back
            position = 0
            while position < len(queue) and queue[position].forwarded:
                position += 1
            queue.insert(position, packet)
        else:
            queue.append(packet)
        self.backlogged.add(packet.node_id)

    # ---------- mobility / channel ----------

    def _mobility_loop(self):
        mobility = self.config.mobility
        while True:
            yield self.env.timeout(mobility.tick_s)
            now = self.env.now
            self._trace('mobility_tick')
            if mobility.speed_kmh > 0:
                moved = netmodel.step_mobility([st.ue for st in self.ues.values()], mobility.tick_s,
                                               self.graph.width)
                for st, ue in zip(self.ues.values(), moved):
                    st.ue = ue
            handover = self._sample_channels(now)
            self._maybe_te(now, handover)

    def _muted(self) -> Optional[dict]:
        """Idle interferers coordinated away per loaded node, when the stack coordinates radios."""
        if self.stack.transport not in SDP_TRANSPORTS:
            return None
        threshold = 0.0 if self.stack.traffic_class == 'video' else self.config.protocol.high_load_utilization
        load = np.array([np.mean(self.util_hist[n]) if self.util_hist[n] else 0.0 for n in self.cmap.node_ids])
        idle = load < IDLE_UTILIZATION
        return {n: idle for n, value in zip(self.cmap.node_ids, load) if value > threshold}

    def _sample_channels(self, now: float, initial: bool = False) -> bool:
        active = np.array([n in self.backlogged for n in self.cmap.node_ids], dtype=bool)
        muted = self._muted()
        handover = False
        for st in self.ues.values():
            losses = self.cmap.path_losses(st.ue)
            best = self.cmap.best_n(st.ue, self.n_serving, losses)
            if initial:
                st.serving = best
            elif best != st.serving:
                self._handover(st, best, now)
                handover = True
            for node_id, sample in self.cmap.sample(st.ue, st.serving, active, losses, muted).items():
                previous = st.sinr.get(node_id)
                # the scheduler works with the report of the previous tick
                estimate = sample.sinr if previous is None else previous[1]
                st.sinr[node_id] = (estimate, sample.sinr)
                st.rate_est[node_id] = self.model.rate(estimate, self.graph.radio_nodes[node_id].bandwidth)
        return handover

    def _handover(self, st: UeState, new_set: tuple, now: float):
        protocol = self.config.protocol
        queues = {}
        for node_id in st.serving:
            harq = self.harq_q[node_id].pop(st.ue.id, None) or ()
            queue = self.queues[node_id].pop(st.ue.id, None) or ()
            queues[node_id] = deque([p for _, p in harq] + list(queue))
        mode = 'forward' if self.stack.transport == 'fixed_rate' else protocol.handover_mode
        result = handover_execute(st.ue.id, st.serving, new_set, mode, queues, now, protocol.handover_delay_s)
        self.metrics.handovers += 1
        self._trace('handover', f"{st.ue.id} {','.join(st.serving)} -> {','.join(new_set)}")

        self.metrics.symbols_dropped += len(result.dropped)
        for node_id, packets in result.forwarded.items():
            keep = [p for p in packets if st.block_forward.get(p.block_id, True)]
            self.metrics.symbols_dropped += len(packets) - len(keep)
            latency, hops = self._route(node_id, st.gateway.host)
            self.metrics.backhaul_bytes += sum(p.bits // 8 for p in keep) * hops
            _, purged = st.gateway.on_handover_forward(st.flow_id, node_id, keep, now, latency)
            self.metrics.symbols_purged += purged
        # nodes kept in the new set hand their queues back untouched
        for node_id in new_set:
            remaining = queues.get(node_id)
            if remaining:
                self.queues[node_id][st.ue.id] = deque(p for p in remaining)
                self.backlogged.add(node_id)

        leaving = [n for n in st.serving if n not in new_set]
        for node_id in leaving:
            st.sinr.pop(node_id, None)
            st.rate_est.pop(node_id, None)
            st.join_ready.pop(node_id, None)
            self.credit[node_id].pop(st.ue.id, None)
        st.gateway.drop_paths(st.flow_id, leaving)
        st.join_ready.update(result.joining)
        st.serving = new_set

    # ---------- reports ----------

    def _report_loop(self):
        run, protocol = self.config.run, self.config.protocol
        slots = max(1, int(round(run.report_period_s / run.tti_s)))
        while True:
            yield self.env.timeout(run.report_period_s)
            now = self.env.now
            for node_id in self.cmap.node_ids:
                self.util_hist[node_id].append(min(1.0, self.busy[node_id] / slots))
                self.busy[node_id] = 0
            self._trace('buffer_report')
            for st in self.ues.values():
                if protocol.feedback and self.stack.transport in SDP_TRANSPORTS:
                    self._buffer_reports(st, now)
                if self.stack.transport == 'od_fc':
                    self._od_reports(st)

    def _buffer_reports(self, st: UeState, now: float):
        ctx = st.gateway.context(st.flow_id)
        for node_id in sorted(set(ctx.path_nodes.values())):
            queued = sum(p.bits for p in self.queues[node_id].get(st.ue.id, ())) // 8
            report = BufferStatusReport(node_id, st.flow_id, queued, now)
            self._after(self._route(node_id, st.gateway.host)[0], self._feedback, st, report)

    def _feedback(self, st: UeState, report: BufferStatusReport):
        st.gateway.on_buffer_report(st.flow_id, report, self.env.now, self.config.run.report_period_s)

    def _od_reports(self, st: UeState):
        ctx = st.gateway.context(st.flow_id)
        for job in list(ctx.jobs):
            if job.mode != 'od' or job.next_esi < job.K:
                continue
            queued_systematic, outstanding = set(), 0
            for node_id in st.serving:
                waiting = list(self.queues[node_id].get(st.ue.id, ()))
                waiting += [p for _, p in self.harq_q[node_id].get(st.ue.id, ())]
                for packet in waiting:
                    if packet.block_id != job.block_id:
                        continue
                    if packet.is_systematic:
                        queued_systematic.add(packet.esi)
                    else:
                        outstanding += 1
            queued_systematic |= {p.esi for p in ctx.forwarded if p.block_id == job.block_id and p.is_systematic}
            received = st.receiver.received_systematic(job.block_id)
            seen = set(received) | queued_systematic
            missing = [esi for esi in range(job.K) if esi not in seen]
            deficit = job.K - st.receiver.rank(job.block_id) - len(queued_systematic - set(received))
            if missing and deficit > 0:
                # repairs already delivered cover part of the missing columns
                outstanding += len(missing) - deficit
                self._after(self._uplink_latency(st), st.gateway.od_report, st.flow_id, job.block_id, missing,
                            received, max(0, outstanding))

    # ---------- traffic engineering ----------

    def _te_loop(self):
        while True:
            self._maybe_te(self.env.now, False)
            yield self.env.timeout(self.config.run.te_period_s)

    def _flow_active(self, st: UeState) -> bool:
        if self.stack.traffic_class == 'video':
            return st.video_active
        return st.session is not None or st.gateway.backlog(st.flow_id)

    def _maybe_te(self, now: float, handover: bool):
        due = te.rerun_schedule(now, self.last_te, self.config.run.te_period_s, handover,
                                self.config.protocol.te_on_handover)
        if due or self.te_pending:
            self._run_te(now)

    def _run_te(self, now: float):
        protocol = self.config.protocol
        self.te_pending = False
        self.last_te = now
        commodities, paths = [], {}
        for st in self.ues.values():
            if not self._flow_active(st) or not st.serving:
                continue
            commodity = te.Commodity(st.flow_id, st.gateway.host, st.ue.id, self.video_demand,
                                     self.stack.traffic_class, st.serving,
                                     {n: st.rate_est.get(n, 0.0) for n in st.serving})
            try:
                paths[st.flow_id] = te.candidate_paths(self.graph, commodity, self.stack.paths)
            except te.RoutingError as exc:
                self.logger.warning("TE skips %s: %s", st.flow_id, exc)
                continue
            commodities.append(commodity)
        self.metrics.te_runs += 1
        self._trace('te_run', str(len(commodities)))
        if not commodities:
            return
        solver = te.solve_max_min if self.stack.rate_objective == 'max_min' else te.solve_max_sum
        try:
            self.solution = solver(commodities, paths, self.graph, protocol.be_ceiling_bps, timestamp=now)
        except te.TEError as exc:
            self.logger.warning("TE run at %.3f s kept the previous allocation: %s", now, exc)
            return
        if not self.solution.video_demands_met:
            self.logger.debug("TE at %.3f s: video demands cannot all be met", now)
        for commodity in commodities:
            st = self.ues[commodity.ue_id]
            routes = {p.path_id: (p.radio_node, self.graph.route_latency(p.nodes)) for p in paths[st.flow_id]}
            rates = {p: self.solution.path_rate(st.flow_id, p) for p in routes}
            st.gateway.apply_allocation(st.flow_id, routes, rates)

    # ---------- run ----------

    def _finish(self):
        metrics = self.metrics
        in_flight = sum(len(q) for per_ue in self.queues.values() for q in per_ue.values())
        in_flight += sum(len(h) for per_ue in self.harq_q.values() for h in per_ue.values())
        for st in self.ues.values():
            ctx = st.gateway.context(st.flow_id)
            in_flight += len(ctx.forwarded)
            metrics.stale_reports += ctx.stale_reports
            for block_id, k, sent, redundancy in ctx.redundancy:
                metrics.redundancy.append(redundancy)
                metrics.redundancy_rows.append({'flow_id': st.flow_id, 'block_id': block_id, 'K': k,
                                                'symbols_sent': sent, 'redundancy': f"{redundancy:.6f}"})
            for time, flow_id, path_id, node_id, queued, action, rate in ctx.feedback_events:
                metrics.feedback_rows.append({'time': f"{time:.6f}", 'flow_id': flow_id, 'path_id': path_id,
                                              'node_id': node_id, 'queued_bytes': queued, 'action': action,
                                              'adjusted_rate_bps': f"{rate:.6f}"})
            session = st.session
            if session is not None and self._warm(session.start):
                metrics.sessions.append(SessionRecord(st.ue.id, 'best_effort', session.index, session.start,
                                                      None, False, bits=session.file_size))
        metrics.symbols_in_flight = in_flight
        metrics.sessions.sort(key=lambda s: (s.ue_id, s.kind, s.index))

    def run(self) -> Metrics:
        run = self.config.run
        self.logger.info("run %s seed %d: %d UEs, %d radio nodes, %.1f s", self.stack.name, self.seed,
                         len(self.ues), len(self.graph.radio_nodes), run.duration_s)
        self._sample_channels(0.0, initial=True)
        env = self.env
        env.process(self._tti_loop())
        env.process(self._mobility_loop())
        env.process(self._report_loop())
        env.process(self._te_loop())
        env.process(self._dispatch_loop())
        source = self._video_source if self.stack.traffic_class == 'video' else self._be_source
        for st in self.ues.values():
            env.process(source(st))
        env.run(until=run.duration_s)
        self._finish()
        if not self.metrics.conserved():
            self.logger.error("symbol accounting is off: %s", self.metrics.counters())
        self.logger.info("run %s seed %d done: %d sessions, %d handovers, %d TE runs", self.stack.name, self.seed,
                         self.metrics.total_completed, self.metrics.handovers, self.metrics.te_runs)
        return self.metrics


def run(config: ScenarioConfig, seed: int) -> Metrics:
    return Simulation(config, seed).run()


@dataclass
class SupportedRate:
    rate_bps: float
    percentiles: dict


def supported_video_rate(config: ScenarioConfig, seeds=None, ceiling_bps: float = 2e6,
                         resolution_bps: float = 50e3, outage_limit: float = 0.05) -> SupportedRate:
    """Highest video rate on the ``resolution_bps`` grid whose pooled 99th-percentile outage stays below the limit.

    Outage grows with the rate, so the grid is bisected. ``percentiles`` maps each
    rate tried to its pooled percentile.
    """
    if resolution_bps <= 0 or ceiling_bps < resolution_bps:
        raise SimulationError("need 0 < resolution_bps <= ceiling_bps")
    seeds = tuple(seeds or config.run.seeds)
    percentiles = {}

    def acceptable(step: int) -> bool:
        rate = step * resolution_bps
        trial = config.with_value('traffic.video_rate_bps', rate)
        outages = [o for seed in seeds for o in run(trial, seed).outage_fractions]
        if not outages:
            raise SimulationError("no video session finished inside the run; raise run.duration_s")
        percentiles[rate] = float(np.percentile(outages, 99))
        return percentiles[rate] < outage_limit

    lo, hi = 0, int(math.floor(ceiling_bps / resolution_bps + EPS)) + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if acceptable(mid):
            lo = mid
        else:
            hi = mid
    return SupportedRate(lo * resolution_bps, percentiles)
