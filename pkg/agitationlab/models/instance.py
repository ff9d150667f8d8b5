"""
One-minute feature window
"""

from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np

from agitationlab.errors import DataError

FEATURE_COUNT = 67
NORMAL = 0
AGITATION = 1


@dataclass(frozen=True)
class WindowInstance:
    """A single 1-minute window: 67 features, a binary label and an optional behaviour category"""
    participant_id: str
    day: date
    minute_index: int
    features: np.ndarray = field(repr=False)
    label: int
    category: Optional[int] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.shape != (FEATURE_COUNT,):
            raise DataError(f"Expected {FEATURE_COUNT} features, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DataError(f"Non-finite feature value in window {self.participant_id} {self.day} {self.minute_index}")
        if self.minute_index < 0:
            raise DataError(f"minute_index must be >= 0, got {self.minute_index}")
        if self.label not in (NORMAL, AGITATION):
            raise DataError(f"label must be 0 or 1, got {self.label}")
        object.__setattr__(self, 'features', features)

    @property
    def key(self):
        return (self.participant_id, self.day)

    def __eq__(self, other):
        if not isinstance(other, WindowInstance):
            return NotImplemented
        return (self.participant_id, self.day, self.minute_index, self.label, self.category) == \
            (other.participant_id, other.day, other.minute_index, other.label, other.category) and \
            np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.participant_id, self.day, self.minute_index))
