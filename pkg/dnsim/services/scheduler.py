"""
Per-TTI radio scheduling at one node: max-rate or proportional fair.
"""
from dataclasses import dataclass, field
from typing import Optional

SCHEDULER_POLICIES = ('max_rate', 'proportional_fair')


@dataclass(frozen=True)
class Candidate:
    ue_id: str
    rate: float


@dataclass
class ProportionalFair:
    """EWMA throughput tracker; ``window`` TTIs of memory."""
    window: int = 100
    throughput: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = 1.0 / self.window
        self.a = 1.0 - self.b

    def metric(self, candidate: Candidate) -> float:
        return candidate.rate / max(self.throughput.get(candidate.ue_id, 0.0), 1.0)

    def update(self, served: Optional[str], rate: float, ue_ids):
        for ue_id in ue_ids:
            current = self.throughput.get(ue_id, 0.0)
            self.throughput[ue_id] = self.a * current + self.b * (rate if ue_id == served else 0.0)


def tti_schedule(candidates, policy: str = 'max_rate', pf: Optional[ProportionalFair] = None,
                 tti: float = 0.001):
    """Pick the UE to serve this TTI among backlogged ``candidates``.

    Returns ``(ue_id, bits)`` or ``(None, 0.0)`` when nothing is backlogged.
    Ties go to the smallest ue_id.
    """
    candidates = list(candidates)
    if not candidates:
        if pf is not None:
            pf.update(None, 0.0, list(pf.throughput))
        return None, 0.0
    if policy == 'max_rate':
        chosen = min(candidates, key=lambda c: (-c.rate, c.ue_id))
    elif policy == 'proportional_fair':
        pf = pf if pf is not None else ProportionalFair()
        chosen = min(candidates, key=lambda c: (-pf.metric(c), c.ue_id))
        pf.update(chosen.ue_id, chosen.rate, {c.ue_id for c in candidates} | set(pf.throughput))
    else:
        raise ValueError(f"unknown scheduler policy {policy!r}")
    return chosen.ue_id, chosen.rate * tti
