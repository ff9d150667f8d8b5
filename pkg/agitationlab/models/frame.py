"""
Raw multichannel wrist-sensor recording for one participant-day
"""

from dataclasses import dataclass
from datetime import date

import numpy as np

from agitationlab.errors import DataError

CHANNELS = ('acc_x', 'acc_y', 'acc_z', 'bvp', 'eda', 'temp')

# Per-channel durations may disagree by at most this many seconds
DURATION_TOLERANCE_S = 1.0


class SignalError(DataError):
    """Invalid raw signal input"""
    pass


@dataclass(frozen=True, eq=False)
class Channel:
    """Samples of one sensor stream at a fixed rate"""
    sample_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise SignalError("Channel samples must be a nonempty vector")
        if not self.sample_rate_hz > 0:
            raise SignalError(f"Sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, 'samples', samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class SignalFrame:
    """
    acc_x/acc_y/acc_z, bvp, eda and temp streams recorded from `start_minute`
    (minutes after midnight) on `day`.
    """
    participant_id: str
    day: date
    channels: dict
    start_minute: int = 0

    def __post_init__(self):
        names = set(self.channels)
        if names != set(CHANNELS):
            missing = sorted(set(CHANNELS) - names)
            extra = sorted(names - set(CHANNELS))
            raise SignalError(f"Channel set mismatch (missing {missing}, unexpected {extra})")
        durations = [self.channels[name].duration_s for name in CHANNELS]
        if max(durations) - min(durations) > DURATION_TOLERANCE_S:
            raise SignalError(
                f"Channel durations of {self.participant_id} {self.day} differ by more than "
                f"{DURATION_TOLERANCE_S} s: {dict(zip(CHANNELS, durations))}"
            )
        if self.start_minute < 0:
            raise SignalError(f"start_minute must be >= 0, got {self.start_minute}")

    @property
    def key(self):
        return (self.participant_id, self.day)

    @property
    def duration_s(self) -> float:
        return min(self.channels[name].duration_s for name in CHANNELS)
