"""
Traffic sources: on/off best-effort file downloads and GOP-structured video.
"""
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

LOW_INTENSITY_OFF_S = 10.0
HIGH_INTENSITY_OFF_S = 1.0


@dataclass
class BeSession:
    ue_id: str
    index: int
    file_size: int
    start: float
    off_time_mean: float
    completion: Optional[float] = None

    @property
    def completed(self) -> bool:
        return self.completion is not None


@dataclass(frozen=True)
class VideoFrame:
    ue_id: str
    index: int
    kind: str
    bits: int
    release: float
    deadline: float


@dataclass
class VideoSession:
    ue_id: str
    index: int
    rate: float
    start: float
    duration: float
    frames: int = 0
    missed: int = 0
    frame_interval: float = 1 / 30

    @property
    def outage_seconds(self) -> float:
        return self.missed * self.frame_interval

    @property
    def outage_fraction(self) -> float:
        if self.duration <= 0:
            return 0.0
        return min(1.0, self.outage_seconds / self.duration)


def be_generator(ue_id: str, rng: np.random.Generator, off_time_mean: float,
                 file_size: int = 20_000_000) -> Iterator[BeSession]:
    """On/off download sessions.

    The first session starts after one off period. Send the completion time
    of the current session to get the next one, which starts an
    ``Exp(off_time_mean)`` off period later::

        gen = be_generator('ue000', rng, 1.0)
        session = next(gen)
        session = gen.send(session_completion_time)
    """
    if off_time_mean <= 0:
        raise ValueError("off_time_mean must be > 0")
    start = float(rng.exponential(off_time_mean))
    index = 0
    while True:
        completion = yield BeSession(ue_id, index, file_size, start, off_time_mean)
        if completion is None:
            raise ValueError("send the completion time of the current session")
        start = float(completion) + float(rng.exponential(off_time_mean))
        index += 1


def frame_sizes(rate: float, fps: int = 30, gop: int = 30, i_to_p_ratio: float = 5.0) -> tuple:
    """(I-frame bits, P-frame bits) so one GOP carries ``rate * gop / fps`` bits."""
    if rate <= 0:
        raise ValueError("video rate must be > 0")
    gop_bits = rate * gop / fps
    p_bits = gop_bits / (i_to_p_ratio + gop - 1)
    return int(round(i_to_p_ratio * p_bits)), int(round(p_bits))


def video_generator(ue_id: str, rate: float, fps: int = 30, gop: int = 30, i_to_p_ratio: float = 5.0,
                    deadline: float = 0.1, start: float = 0.0,
                    duration: Optional[float] = None) -> Iterator[VideoFrame]:
    """Frames released every ``1/fps`` s from ``start``, an I-frame every ``gop`` frames."""
    i_bits, p_bits = frame_sizes(rate, fps, gop, i_to_p_ratio)
    count = None if duration is None else int(math.floor(duration * fps + 1e-9))
    index = 0
    while count is None or index < count:
        release = start + index / fps
        kind = 'I' if index % gop == 0 else 'P'
        yield VideoFrame(ue_id, index, kind, i_bits if kind == 'I' else p_bits, release, release + deadline)
        index += 1
