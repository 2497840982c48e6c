"""
Software-defined protocol layer: per-class feature profiles, the TCP-D
sender/receiver, the HARQ error model and handover execution.
"""
from enum import Enum
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Optional

from .logs import get_logger
from .scenario import ProtocolConfig

logger = get_logger('protocols')

HARQ_SPACING_S = 0.008
RTO_MAX_S = 60.0
RTO_INITIAL_S = 1.0
PROFILE_CLASSES = ('best_effort', 'video_I', 'video_P')
HANDOVER_MODES = ('drop', 'forward')


class ProfileError(ValueError):
    pass


# ============== SDP PROFILES ==============

@dataclass(frozen=True)
class SdpProfile:
    te: bool = False
    radio_coordination: bool = False
    multipath: bool = False
    harq: bool = False
    fc: bool = False
    fixed_rate_fc: bool = False
    handover_forwarding: bool = False
    scheduler_policy: str = 'max_rate'
    fc_small_block_threshold: int = 8

    def __post_init__(self):
        if self.fixed_rate_fc and not self.fc:
            raise ProfileError("fixed-rate FC requires FC")
        if self.multipath and not self.te:
            raise ProfileError("multipath requires TE")
        if self.scheduler_policy not in ('max_rate', 'proportional_fair'):
            raise ProfileError(f"unknown scheduler policy {self.scheduler_policy!r}")


FEATURES = tuple(f.name for f in fields(SdpProfile) if f.type in (bool, 'bool'))


def sdp_select(traffic_class: str, high_load: bool = False, frame_symbols: Optional[int] = None,
               threshold: int = 8, scheduler: str = 'max_rate') -> SdpProfile:
    if traffic_class == 'best_effort':
        return SdpProfile(te=True, radio_coordination=high_load, multipath=True, fc=True,
                          scheduler_policy=scheduler, fc_small_block_threshold=threshold)
    if traffic_class == 'video_I':
        return SdpProfile(te=True, radio_coordination=True, multipath=True, fc=True, fixed_rate_fc=True,
                          handover_forwarding=True, scheduler_policy=scheduler,
                          fc_small_block_threshold=threshold)
    if traffic_class == 'video_P':
        use_fc = frame_symbols is not None and frame_symbols >= threshold
        return SdpProfile(te=True, harq=True, fc=use_fc, fixed_rate_fc=use_fc,
                          handover_forwarding=not use_fc, scheduler_policy=scheduler,
                          fc_small_block_threshold=threshold)
    raise ProfileError(f"unknown traffic class {traffic_class!r}")


def profile_matrix(threshold: int = 8) -> list:
    """Feature rows against the three traffic classes; cells are 'on'/'off'/'high load'."""
    profiles = {
        'best_effort': (sdp_select('best_effort', False, threshold=threshold),
                        sdp_select('best_effort', True, threshold=threshold)),
        'video_I': (sdp_select('video_I', threshold=threshold),) * 2,
        'video_P': (sdp_select('video_P', frame_symbols=0, threshold=threshold),) * 2,
    }
    rows = []
    for feature in FEATURES:
        cells = []
        for name in PROFILE_CLASSES:
            normal, loaded = profiles[name]
            a, b = getattr(normal, feature), getattr(loaded, feature)
            cells.append('on' if a else ('high load' if b else 'off'))
        rows.append((feature, *cells))
    rows.append(('scheduler', *(profiles[name][0].scheduler_policy for name in PROFILE_CLASSES)))
    return rows


def format_profile_matrix(threshold: int = 8) -> str:
    header = ('feature',) + PROFILE_CLASSES
    rows = [header] + profile_matrix(threshold)
    widths = [max(len(str(row[i])) for row in rows) for i in range(len(header))]
    lines = ["  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join('-' * w for w in widths))
    return "\n".join(lines) + "\n"


# ============== PROTOCOL STACKS ==============

@dataclass(frozen=True)
class ProtocolStack:
    """What the v-u-SGW and radio nodes run for a named protocol."""
    name: str
    transport: str
    paths: int
    harq: bool
    traffic_class: str = 'best_effort'

    @property
    def multipath(self) -> bool:
        return self.paths > 1

    @property
    def rate_objective(self) -> str:
        return 'max_min' if self.traffic_class == 'video' else 'max_sum'


PROTOCOL_STACKS = {
    'tcp_d_1path': ProtocolStack('tcp_d_1path', 'tcp_d', 1, harq=True),
    'tcp_d_multipath': ProtocolStack('tcp_d_multipath', 'tcp_d', 4, harq=True),
    'fc_mp': ProtocolStack('fc_mp', 'fc', 4, harq=False),
    'fc_mc': ProtocolStack('fc_mc', 'fc_mc', 4, harq=False),
    'udp_1path': ProtocolStack('udp_1path', 'udp', 1, harq=True, traffic_class='video'),
    'fc_mp_video': ProtocolStack('fc_mp_video', 'fixed_rate', 4, harq=False, traffic_class='video'),
    'od_fc': ProtocolStack('od_fc', 'od_fc', 4, harq=False),
}


# ============== TCP-D ==============

@dataclass
class ArqState:
    window: int = 64
    rto_min: float = 0.05
    rto_max: float = RTO_MAX_S
    srtt: Optional[float] = None
    rttvar: Optional[float] = None
    rto: float = RTO_INITIAL_S
    duplicates: int = 0
    retransmissions: int = 0
    next_seq: int = 0
    limit: Optional[int] = None
    unacked: dict = field(default_factory=dict)
    acked: set = field(default_factory=set)
    pending_retx: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.window < 1:
            raise ProfileError("TCP-D window must be >= 1")
        self.rto = min(max(self.rto, self.rto_min), self.rto_max)

    @property
    def finished(self) -> bool:
        return self.limit is not None and len(self.acked) >= self.limit

    def _sample(self, rtt: float):
        if self.srtt is None:
            self.srtt, self.rttvar = rtt, rtt / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.rto = min(max(self.srtt + 4 * self.rttvar, self.rto_min), self.rto_max)


def tcp_d_send(state: ArqState, now: float) -> Optional[int]:
    """Next sequence number to put on the wire, or None when the window stalls.

    Timed-out packets go first; they do not count against the window twice.
    """
    while state.pending_retx:
        seq = state.pending_retx.popleft()
        if seq in state.unacked:
            state.unacked[seq] = (now, True)
            state.retransmissions += 1
            return seq
    if len(state.unacked) >= state.window:
        return None
    if state.limit is not None and state.next_seq >= state.limit:
        return None
    seq = state.next_seq
    state.next_seq += 1
    state.unacked[seq] = (now, False)
    return seq


def tcp_d_on_ack(state: ArqState, seq: int, now: float) -> bool:
    """Returns False for an ack of a packet no longer outstanding."""
    entry = state.unacked.pop(seq, None)
    if entry is None:
        state.duplicates += 1
        return False
    sent_at, retransmitted = entry
    state.acked.add(seq)
    if not retransmitted:
        # Karn: ambiguous samples from retransmitted packets are skipped
        state._sample(now - sent_at)
    return True


def tcp_d_on_timeout(state: ArqState, now: float) -> list:
    """Queue every outstanding packet older than the RTO; back off the timer."""
    expired = sorted(seq for seq, (sent_at, _) in state.unacked.items()
                     if now - sent_at >= state.rto and seq not in state.pending_retx)
    if expired:
        state.pending_retx.extend(expired)
        state.rto = min(state.rto * 2, state.rto_max)
    return expired


@dataclass
class TcpDReceiver:
    limit: int
    received: set = field(default_factory=set)
    duplicates: int = 0

    def on_packet(self, seq: int) -> bool:
        if seq in self.received:
            self.duplicates += 1
            return False
        self.received.add(seq)
        return True

    @property
    def complete(self) -> bool:
        return len(self.received) >= self.limit


# ============== HARQ ==============

class HarqOutcome(Enum):
    DELIVERED = 'delivered'
    RETRY = 'retry'
    FAILED = 'failed'


@dataclass(frozen=True)
class HarqModel:
    max_harq: int = 3
    margin_db: float = 1.0
    p_high: float = 0.1
    p_low: float = 0.01
    spacing: float = HARQ_SPACING_S

    @classmethod
    def from_config(cls, protocol: ProtocolConfig) -> 'HarqModel':
        return cls(protocol.harq_max, protocol.harq_margin_db, protocol.harq_p_high, protocol.harq_p_low)

    def error_probability(self, sinr_est: float, sinr_true: float, retries: int = 0) -> float:
        p1 = self.p_high if sinr_est - sinr_true > self.margin_db else self.p_low
        return p1 / (2 ** retries)


@dataclass
class HarqProcess:
    node_id: str
    ue_id: str
    block: object
    retries: int = 0
    next_time: float = 0.0
    first_time: Optional[float] = None


def harq_transmit(process: HarqProcess, sinr_est: float, sinr_true: float, now: float, rng,
                  model: HarqModel, enabled: bool = True) -> HarqOutcome:
    """One transmission attempt of ``process.block``.

    ``max_harq`` counts retransmissions after the first attempt; each one is
    spaced ``model.spacing`` after the previous failure.
    """
    if process.first_time is None:
        process.first_time = now
    if rng.random() >= model.error_probability(sinr_est, sinr_true, process.retries):
        return HarqOutcome.DELIVERED
    if not enabled or process.retries >= model.max_harq:
        return HarqOutcome.FAILED
    process.retries += 1
    process.next_time = now + model.spacing
    return HarqOutcome.RETRY


# ============== HANDOVER ==============

@dataclass(frozen=True)
class HandoverEvent:
    kind: str
    node_id: str
    symbols: int
    time: float


@dataclass
class HandoverResult:
    events: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    forwarded: dict = field(default_factory=dict)
    joining: dict = field(default_factory=dict)


def handover_execute(ue_id: str, old_set, new_set, mode: str, queues: dict, now: float = 0.0,
                     delay: float = 0.02) -> HandoverResult:
    """Apply a serving-set change.

    ``queues`` maps a radio node id to the mutable queue of this UE's packets
    at that node; queues of nodes leaving the set are emptied into
    ``dropped`` or ``forwarded`` (per old node). Joining nodes become
    schedulable at ``now + delay``.
    """
    if mode not in HANDOVER_MODES:
        raise ProfileError(f"unknown handover mode {mode!r}")
    result = HandoverResult()
    if tuple(old_set) == tuple(new_set):
        return result
    leaving = [n for n in old_set if n not in new_set]
    joining = [n for n in new_set if n not in old_set]
    for node_id in leaving:
        queue = queues.get(node_id)
        packets = list(queue) if queue else []
        if queue:
            queue.clear()
        if mode == 'forward':
            result.forwarded[node_id] = packets
        else:
            result.dropped.extend(packets)
        result.events.append(HandoverEvent(mode, node_id, len(packets), now))
    for node_id in joining:
        result.joining[node_id] = now + delay
        result.events.append(HandoverEvent('join', node_id, 0, now))
    logger.debug("%s handover at %.3f: -%s +%s", ue_id, now, leaving, joining)
    return result
