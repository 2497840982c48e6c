"""
Data plane of the virtual user-specific serving gateway (v-u-SGW).

One ``VirtualGateway`` anchors the flows of one UE: it caches source blocks,
encodes them, paces coded symbols onto the TE paths, reacts to radio-node
buffer reports and purges decoded blocks.

Transports:
    fc          systematic symbols then unbounded repair until the block is acked
    fc_mc       as ``fc``, every path at the fixed reference rate
    fixed_rate  ceil(ratio * K) symbols per block, no more
    od_fc       systematic symbols, then repairs over the reported missing ones only
    udp         source symbols once
    tcp_d       numbered packets under a fixed-window retransmission sender
"""
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import fountain_codec as fc
from .logs import get_logger
from .protocols import ArqState, tcp_d_send, tcp_d_on_ack, tcp_d_on_timeout

TRANSPORTS = ('fc', 'fc_mc', 'fixed_rate', 'od_fc', 'udp', 'tcp_d')


class GatewayError(ValueError):
    pass


@dataclass(slots=True)
class Packet:
    flow_id: str
    ue_id: str
    block_id: int
    esi: int
    bits: int
    is_systematic: bool = True
    symbol: Optional[fc.CodedSymbol] = None
    path_id: int = 0
    node_id: str = ''
    ready: float = 0.0
    deadline: Optional[float] = None
    forwarded: bool = False
    harq_retries: int = 0


@dataclass(frozen=True)
class BufferStatusReport:
    node_id: str
    flow_id: str
    queued_bytes: int
    timestamp: float

    def __post_init__(self):
        if self.queued_bytes < 0:
            raise GatewayError("queued_bytes must be >= 0")


@dataclass
class PurgeOrder:
    flow_id: str
    block_id: int
    nodes: tuple
    purged_at_gateway: int = 0


@dataclass
class BlockJob:
    block_id: int
    K: int
    mode: str
    n_total: Optional[int] = None
    source: Optional[fc.SourceBlock] = None
    single_path: bool = False
    release: float = 0.0
    deadline: Optional[float] = None
    next_esi: int = 0
    sent: int = 0
    od_pending: int = 0
    od_support: tuple = ()
    od_next_esi: int = 0
    arq: Optional[ArqState] = None

    @property
    def exhausted(self) -> bool:
        if self.mode == 'tcp':
            return self.arq.finished
        if self.mode == 'rateless':
            return False
        if self.mode == 'od':
            return self.next_esi >= self.K and self.od_pending == 0
        return self.next_esi >= self.n_total


@dataclass
class FlowContext:
    flow_id: str
    ue_id: str
    traffic_class: str
    transport: str
    symbol_size: int
    max_block_symbols: int
    jobs: deque = field(default_factory=deque)
    allocated: dict = field(default_factory=dict)
    adjusted: dict = field(default_factory=dict)
    carry: dict = field(default_factory=dict)
    path_nodes: dict = field(default_factory=dict)
    path_latency: dict = field(default_factory=dict)
    forwarded: deque = field(default_factory=deque)
    session: int = 0
    next_block_id: int = 0
    acked_blocks: set = field(default_factory=set)
    redundancy: list = field(default_factory=list)
    feedback_events: list = field(default_factory=list)
    stale_reports: int = 0

    @property
    def symbol_bits(self) -> int:
        return fc.CodedSymbol.wire_size(self.symbol_size) * 8

    def rate(self, path_id: int) -> float:
        return self.adjusted.get(path_id, 0.0)


class VirtualGateway:
    """v-u-SGW of one UE, hosted at ``host`` (the gateway or a dedicated host)."""

    def __init__(self, ue_id: str, host: str, fc_mc_rate_bps: float = 2e7, feedback_beta: float = 0.5,
                 theta_high_s: float = 0.3, theta_low_s: float = 0.1, with_payload: bool = False,
                 tcp_window: int = 64, rto_min: float = 0.05, min_virtual_k: int = 8):
        if not 0.0 < feedback_beta < 1.0:
            raise GatewayError("feedback beta must lie in (0, 1)")
        self.ue_id = ue_id
        self.host = host
        self.fc_mc_rate = fc_mc_rate_bps
        self.beta = feedback_beta
        self.theta_high_s = theta_high_s
        self.theta_low_s = theta_low_s
        self.with_payload = with_payload
        self.tcp_window = tcp_window
        self.rto_min = rto_min
        self.min_virtual_k = min_virtual_k
        self.flows = {}
        self.logger = get_logger('vusgw')

    # ---------- registration / ingest ----------

    def register(self, flow_id: str, traffic_class: str, transport: str, symbol_size: int = 1000,
                 max_block_symbols: int = 1000) -> FlowContext:
        if transport not in TRANSPORTS:
            raise GatewayError(f"unknown transport {transport!r}")
        if flow_id in self.flows:
            raise GatewayError(f"flow {flow_id} already registered")
        ctx = FlowContext(flow_id, self.ue_id, traffic_class, transport, symbol_size, max_block_symbols)
        self.flows[flow_id] = ctx
        return ctx

    def context(self, flow_id: str) -> FlowContext:
        try:
            return self.flows[flow_id]
        except KeyError:
            raise GatewayError(f"flow {flow_id} is not registered") from None

    def ingest(self, flow_id: str, data: bytes = b'', size_bits: Optional[int] = None, release: float = 0.0,
               deadline: Optional[float] = None, fixed_ratio=None, single_path: bool = False,
               plain: bool = False) -> list:
        """Segment one application object and queue its blocks FIFO.

        ``data`` is used in payload mode; in symbolic mode pass ``size_bits``.
        ``fixed_ratio`` switches the blocks to fixed-rate coding, ``plain`` to
        source symbols only.
        """
        ctx = self.context(flow_id)
        if size_bits is None:
            size_bytes = len(data)
        else:
            size_bytes = int(math.ceil(size_bits / 8))
        if size_bytes == 0:
            return []

        if ctx.transport == 'tcp_d':
            n = int(math.ceil(size_bytes / ctx.symbol_size))
            ctx.session += 1
            job = BlockJob(ctx.session, n, 'tcp', n, release=release, deadline=deadline,
                           arq=ArqState(window=self.tcp_window, rto_min=self.rto_min, limit=n))
            ctx.jobs.append(job)
            return [job]

        if data and (self.with_payload or size_bits is None):
            blocks = fc.segment(data, ctx.symbol_size, ctx.max_block_symbols, ctx.next_block_id)
            sizes = [(b.block_id, b.K, b) for b in blocks]
        else:
            total = int(math.ceil(size_bytes / ctx.symbol_size))
            sizes = []
            for offset in range(0, total, ctx.max_block_symbols):
                block_id = ctx.next_block_id + len(sizes)
                sizes.append((block_id, min(ctx.max_block_symbols, total - offset), None))

        if plain or ctx.transport == 'udp':
            mode = 'plain'
        elif fixed_ratio is not None or ctx.transport == 'fixed_rate':
            mode = 'fixed'
        elif ctx.transport == 'od_fc':
            mode = 'od'
        else:
            mode = 'rateless'

        jobs = []
        for block_id, k, source in sizes:
            if mode == 'fixed':
                n_total = fc.fixed_rate_symbol_count(k, fixed_ratio if fixed_ratio is not None else 1)
            elif mode in ('plain', 'od'):
                n_total = k
            else:
                n_total = None
            job = BlockJob(block_id, k, mode, n_total, source, single_path, release, deadline)
            ctx.jobs.append(job)
            jobs.append(job)
        ctx.next_block_id = sizes[-1][0] + 1
        return jobs

    # ---------- TE / pacing ----------

    def apply_allocation(self, flow_id: str, paths: dict, rates: dict):
        """``paths``: path_id -> (radio node, gateway-to-node latency); ``rates``: path_id -> bits/s.

        Feedback-reduced rates on paths that keep their radio node stay
        reduced (capped at the new allocation).
        """
        ctx = self.context(flow_id)
        adjusted = {}
        for path_id, (node_id, latency) in paths.items():
            allocated = float(rates.get(path_id, 0.0))
            previous = ctx.adjusted.get(path_id)
            if previous is not None and ctx.path_nodes.get(path_id) == node_id:
                adjusted[path_id] = min(previous, allocated) if previous > 0 else allocated
            else:
                adjusted[path_id] = allocated
        ctx.allocated = {p: float(rates.get(p, 0.0)) for p in paths}
        ctx.adjusted = adjusted
        ctx.path_nodes = {p: node for p, (node, _) in paths.items()}
        ctx.path_latency = {p: latency for p, (_, latency) in paths.items()}
        ctx.carry = {p: ctx.carry.get(p, 0.0) for p in paths}

    def drop_paths(self, flow_id: str, nodes) -> list:
        """Forget the paths ending at ``nodes`` (they left the serving set)."""
        ctx = self.context(flow_id)
        gone = [p for p, node in ctx.path_nodes.items() if node in set(nodes)]
        for table in (ctx.path_nodes, ctx.path_latency, ctx.allocated, ctx.adjusted, ctx.carry):
            for path_id in gone:
                table.pop(path_id, None)
        return gone

    def path_rate(self, ctx: FlowContext, path_id: int) -> float:
        if ctx.transport == 'fc_mc':
            return self.fc_mc_rate
        return ctx.rate(path_id)

    def dispatch_tick(self, flow_id: str, dt: float, now: float = 0.0, solution=None) -> list:
        """Emit this tick's symbols as ``(path_id, Packet)``, paths served round-robin."""
        if dt <= 0:
            raise GatewayError("dt must be > 0")
        ctx = self.context(flow_id)
        if solution is not None:
            self.apply_allocation(flow_id, {p: (ctx.path_nodes[p], ctx.path_latency.get(p, 0.0))
                                            for p in ctx.path_nodes},
                                  {p: solution.path_rate(flow_id, p) for p in ctx.path_nodes})
        slots = {}
        for path_id in sorted(ctx.path_nodes):
            credit = ctx.carry.get(path_id, 0.0) + self.path_rate(ctx, path_id) * dt / ctx.symbol_bits
            slots[path_id] = int(math.floor(credit + 1e-9))
            ctx.carry[path_id] = max(0.0, credit - slots[path_id])

        emitted = []
        active = [p for p in sorted(slots) if slots[p] > 0]
        while active:
            for path_id in list(active):
                packet = self._next_packet(ctx, path_id, now)
                if packet is None:
                    # nothing to send on this path: unused slots are not banked
                    ctx.carry[path_id] = 0.0
                    active.remove(path_id)
                    continue
                packet.path_id = path_id
                packet.node_id = ctx.path_nodes[path_id]
                packet.ready = now + ctx.path_latency.get(path_id, 0.0)
                emitted.append((path_id, packet))
                slots[path_id] -= 1
                if slots[path_id] == 0:
                    active.remove(path_id)
        return emitted

    def _next_packet(self, ctx: FlowContext, path_id: int, now: float) -> Optional[Packet]:
        if ctx.forwarded and ctx.forwarded[0].ready <= now:
            packet = ctx.forwarded.popleft()
            packet.forwarded = True
            return packet

        for job in ctx.jobs:
            if job.release > now:
                break
            if job.mode == 'tcp':
                seq = tcp_d_send(job.arq, now)
                if seq is None:
                    continue
                return Packet(ctx.flow_id, ctx.ue_id, job.block_id, seq, ctx.symbol_bits, True,
                              deadline=job.deadline)
            if job.exhausted or (job.single_path and path_id != 0):
                continue
            return self._emit(ctx, job)
        return None

    def _emit(self, ctx: FlowContext, job: BlockJob) -> Packet:
        if job.next_esi < job.K or job.mode != 'od':
            esi = job.next_esi
            job.next_esi += 1
            if job.source is not None:
                symbol = fc.encode_symbol(job.source, esi, self.with_payload)
            else:
                symbol = fc.CodedSymbol(job.block_id, esi, None, esi < job.K)
        else:
            esi = job.od_next_esi
            job.od_next_esi += 1
            job.od_pending -= 1
            if job.source is not None:
                symbol = fc.encode_on_support(job.source, job.od_support, esi, self.with_payload)
            else:
                symbol = fc.CodedSymbol(job.block_id, esi, None, False, job.od_support)
        job.sent += 1
        return Packet(ctx.flow_id, ctx.ue_id, job.block_id, esi, ctx.symbol_bits, symbol.is_systematic, symbol,
                      deadline=job.deadline)

    # ---------- feedback ----------

    def on_buffer_report(self, flow_id: str, report: BufferStatusReport, now: float,
                         report_period: float = 0.1) -> Optional[float]:
        """Adjust the rate of the path ending at ``report.node_id``; returns the new rate."""
        ctx = self.context(flow_id)
        path_id = next((p for p, node in ctx.path_nodes.items() if node == report.node_id), None)
        if path_id is None:
            return None
        if now - report.timestamp > report_period + 1e-9:
            ctx.stale_reports += 1
            return ctx.adjusted.get(path_id)

        allocated = ctx.allocated.get(path_id, 0.0)
        current = ctx.adjusted.get(path_id, allocated)
        theta_high = self.theta_high_s * allocated / 8
        theta_low = self.theta_low_s * allocated / 8
        if report.queued_bytes > theta_high:
            action, current = 'decrease', current * self.beta
        elif report.queued_bytes < theta_low:
            action, current = 'increase', min(allocated, current / self.beta)
        else:
            action = 'hold'
        ctx.adjusted[path_id] = current
        ctx.feedback_events.append((now, flow_id, path_id, report.node_id, report.queued_bytes, action, current))
        return current

    # ---------- acknowledgments / purge ----------

    def on_decode_ack(self, flow_id: str, block_id: int) -> Optional[PurgeOrder]:
        """Stop coding ``block_id`` and order its queued symbols purged; repeats are no-ops."""
        ctx = self.context(flow_id)
        if block_id in ctx.acked_blocks:
            return None
        job = next((j for j in ctx.jobs if j.block_id == block_id and j.mode != 'tcp'), None)
        if job is None:
            return None
        ctx.acked_blocks.add(block_id)
        ctx.jobs.remove(job)
        if job.mode != 'plain':
            ctx.redundancy.append((block_id, job.K, job.sent, max(0.0, job.sent / job.K - 1.0)))
        return PurgeOrder(flow_id, block_id, tuple(sorted(set(ctx.path_nodes.values()))),
                          self._drop_forwarded(ctx, block_id))

    def expire(self, flow_id: str, block_id: int) -> Optional[PurgeOrder]:
        """Deadline passed: drop the block unsent and purge what is queued downstream."""
        ctx = self.context(flow_id)
        job = next((j for j in ctx.jobs if j.block_id == block_id), None)
        if job is not None:
            ctx.jobs.remove(job)
        elif block_id in ctx.acked_blocks:
            return None
        ctx.acked_blocks.add(block_id)
        return PurgeOrder(flow_id, block_id, tuple(sorted(set(ctx.path_nodes.values()))),
                          self._drop_forwarded(ctx, block_id))

    def _drop_forwarded(self, ctx: FlowContext, block_id: int) -> int:
        kept = deque(p for p in ctx.forwarded if p.block_id != block_id)
        dropped = len(ctx.forwarded) - len(kept)
        ctx.forwarded = kept
        return dropped

    def od_report(self, flow_id: str, block_id: int, missing: list, received: list, outstanding: int) -> int:
        """Receiver loss report for an on-demand block; returns repairs newly owed.

        ``outstanding`` counts repairs already on their way. Padding is taken
        from the most recently received source symbols.
        """
        ctx = self.context(flow_id)
        job = next((j for j in ctx.jobs if j.block_id == block_id and j.mode == 'od'), None)
        if job is None or job.next_esi < job.K or not missing:
            return 0
        owed = len(missing) - outstanding - job.od_pending
        if owed <= 0:
            return 0
        n_padding = min(max(0, self.min_virtual_k - len(missing)), len(received))
        padding = sorted(received)[len(received) - n_padding:] if n_padding else []
        support = tuple(padding) + tuple(sorted(missing))
        if support != job.od_support:
            job.od_support = support
            job.od_next_esi = len(support)
        job.od_pending += owed
        return owed

    # ---------- handover ----------

    def on_handover_forward(self, flow_id: str, node_old: str, packets, now: float,
                            return_latency: float = 0.0) -> tuple:
        """Take back undelivered packets from ``node_old``; they leave again ahead of fresh symbols.

        Returns ``(re-enqueued, purged)`` counts; packets of blocks already
        acked are purged instead of forwarded.
        """
        ctx = self.context(flow_id)
        accepted = purged = 0
        for packet in packets:
            if packet.block_id in ctx.acked_blocks and ctx.transport != 'tcp_d':
                purged += 1
                continue
            packet.ready = now + return_latency
            packet.forwarded = True
            ctx.forwarded.append(packet)
            accepted += 1
        self.logger.debug("%s: %d packets forwarded back from %s", flow_id, accepted, node_old)
        return accepted, purged

    # ---------- TCP-D ----------

    def _tcp_job(self, ctx: FlowContext, session: int) -> Optional[BlockJob]:
        return next((j for j in ctx.jobs if j.mode == 'tcp' and j.block_id == session), None)

    def tcp_ack(self, flow_id: str, session: int, seq: int, now: float) -> bool:
        ctx = self.context(flow_id)
        job = self._tcp_job(ctx, session)
        if job is None:
            return False
        fresh = tcp_d_on_ack(job.arq, seq, now)
        if job.arq.finished:
            ctx.jobs.remove(job)
        return fresh

    def tcp_timeouts(self, flow_id: str, now: float) -> list:
        """``(session, seq)`` of every packet whose retransmission timer fired."""
        ctx = self.context(flow_id)
        return [(job.block_id, seq) for job in ctx.jobs if job.mode == 'tcp'
                for seq in tcp_d_on_timeout(job.arq, now)]

    def backlog(self, flow_id: str) -> bool:
        ctx = self.context(flow_id)
        return bool(ctx.jobs or ctx.forwarded)
