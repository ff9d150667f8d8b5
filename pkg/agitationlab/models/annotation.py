"""
Annotated agitation episode for one participant-day
"""

from dataclasses import dataclass
from datetime import date

from agitationlab.errors import DataError


@dataclass(frozen=True, order=True)
class EpisodeAnnotation:
    """Approximate start and end minute of an agitation event (both inclusive)"""
    participant_id: str
    day: date
    start_minute: int
    end_minute: int

    def __post_init__(self):
        if self.start_minute < 0:
            raise DataError(f"Episode start must be >= 0, got {self.start_minute}")
        if self.start_minute > self.end_minute:
            raise DataError(
                f"Episode for {self.participant_id} on {self.day} ends before it starts "
                f"({self.start_minute} > {self.end_minute})"
            )

    @property
    def key(self):
        return (self.participant_id, self.day)

    @property
    def duration_minutes(self) -> int:
        return self.end_minute - self.start_minute + 1

    def contains(self, minute: int) -> bool:
        return self.start_minute <= minute <= self.end_minute

    def __str__(self):
        return f"{self.participant_id} {self.day.isoformat()} [{self.start_minute}, {self.end_minute}]"


def annotations_by_day(annotations):
    """Group annotations into a dict of (participant_id, day) -> sorted episode list"""
    grouped = {}
    for episode in annotations:
        grouped.setdefault(episode.key, []).append(episode)
    for episodes in grouped.values():
        episodes.sort()
    return grouped
