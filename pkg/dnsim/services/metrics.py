"""
Run metrics, session records and their CSV row layouts.
"""
import math
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

SESSION_COLUMNS = ['key', 'seed', 'protocol', 'ue_id', 'kind', 'index', 'start', 'end', 'completed',
                   'outage_fraction', 'bits']
SUMMARY_COLUMNS = ['key', 'seed', 'protocol', 'completed_sessions', 'video_sessions', 'p99_outage',
                   'duplicates', 'decode_duplicates', 'retransmissions', 'backhaul_bytes',
                   'symbols_emitted', 'symbols_delivered', 'symbols_lost', 'symbols_purged',
                   'symbols_dropped', 'symbols_expired', 'symbols_in_flight', 'mean_redundancy',
                   'jain_index', 'handovers', 'te_runs', 'stale_reports', 'corrupted_blocks']
REDUNDANCY_COLUMNS = ['key', 'seed', 'flow_id', 'block_id', 'K', 'symbols_sent', 'redundancy']
FEEDBACK_COLUMNS = ['key', 'seed', 'time', 'flow_id', 'path_id', 'node_id', 'queued_bytes', 'action',
                    'adjusted_rate_bps']
REDUNDANCY_BINS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, math.inf)


@dataclass
class SessionRecord:
    ue_id: str
    kind: str
    index: int
    start: float
    end: Optional[float]
    completed: bool
    outage_fraction: Optional[float] = None
    bits: int = 0


@dataclass
class Metrics:
    ue_ids: list = field(default_factory=list)
    completed_sessions: Counter = field(default_factory=Counter)
    sessions: list = field(default_factory=list)
    duplicates: int = 0
    decode_duplicates: int = 0
    retransmissions: int = 0
    corrupted_blocks: int = 0
    backhaul_bytes: int = 0
    symbols_emitted: int = 0
    symbols_delivered: int = 0
    symbols_lost: int = 0
    symbols_purged: int = 0
    symbols_dropped: int = 0
    symbols_expired: int = 0
    symbols_in_flight: int = 0
    handovers: int = 0
    te_runs: int = 0
    stale_reports: int = 0
    redundancy: list = field(default_factory=list)
    redundancy_rows: list = field(default_factory=list)
    feedback_rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def total_completed(self) -> int:
        return sum(self.completed_sessions.values())

    @property
    def outage_fractions(self) -> list:
        return [s.outage_fraction for s in self.sessions if s.kind == 'video' and s.outage_fraction is not None]

    @property
    def mean_redundancy(self) -> Optional[float]:
        return float(np.mean(self.redundancy)) if self.redundancy else None

    def redundancy_histogram(self) -> list:
        """Counts per bin of ``REDUNDANCY_BINS`` (left-closed)."""
        edges = np.asarray(REDUNDANCY_BINS)
        slots = np.searchsorted(edges, np.asarray(self.redundancy, dtype=float), side='right') - 1
        counts = np.bincount(np.clip(slots, 0, len(edges) - 2), minlength=len(edges) - 1)
        return [int(c) for c in counts]

    def p99_outage(self) -> Optional[float]:
        values = self.outage_fractions
        return float(np.percentile(values, 99)) if values else None

    def jain(self) -> Optional[float]:
        return jain_index([self.completed_sessions.get(ue, 0) for ue in self.ue_ids])

    def conserved(self) -> bool:
        accounted = (self.symbols_delivered + self.symbols_lost + self.symbols_purged + self.symbols_dropped
                     + self.symbols_expired + self.symbols_in_flight)
        return accounted == self.symbols_emitted

    def counters(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.type is int}

    def summary_row(self, key: str, seed: int, protocol: str) -> dict:
        row = {'key': key, 'seed': seed, 'protocol': protocol,
               'completed_sessions': self.total_completed,
               'video_sessions': len(self.outage_fractions),
               'p99_outage': fmt_number(self.p99_outage()),
               'mean_redundancy': fmt_number(self.mean_redundancy),
               'jain_index': fmt_number(self.jain())}
        row.update({k: v for k, v in self.counters().items() if k in SUMMARY_COLUMNS})
        return {column: row[column] for column in SUMMARY_COLUMNS}

    def session_rows(self, key: str, seed: int, protocol: str) -> list:
        return [
            {'key': key, 'seed': seed, 'protocol': protocol, 'ue_id': s.ue_id, 'kind': s.kind,
             'index': s.index, 'start': fmt_number(s.start), 'end': fmt_number(s.end), 'completed': int(s.completed),
             'outage_fraction': fmt_number(s.outage_fraction), 'bits': s.bits}
            for s in self.sessions
        ]


def fmt_number(value) -> str:
    if value is None:
        return ''
    return f"{value:.6f}"


def jain_index(values) -> Optional[float]:
    """(sum v)^2 / (n sum v^2); None when every value is zero or the list is empty."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return None
    if (v < 0).any():
        raise ValueError("jain_index needs nonnegative values")
    square_sum = float((v ** 2).sum())
    if square_sum == 0.0:
        return None
    return float(v.sum() ** 2 / (v.size * square_sum))
