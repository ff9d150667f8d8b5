"""
Columnar container for labelled one-minute windows and their episode annotations
"""

from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np

from agitationlab.errors import DataError
from agitationlab.models.annotation import EpisodeAnnotation, annotations_by_day
from agitationlab.models.instance import FEATURE_COUNT, AGITATION, NORMAL, WindowInstance

NO_CATEGORY = -1


class DatasetError(DataError):
    """A dataset violates one of its invariants"""

    def __init__(self, message, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Windows stored column-wise so that the feature matrix can be handed straight to numpy.

    Row order is the dataset order. `categories` uses -1 where a window has no category tag.
    """
    participant_ids: np.ndarray
    days: np.ndarray
    minute_index: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    categories: np.ndarray
    annotations: tuple = field(default_factory=tuple)

    def __post_init__(self):
        n = len(self.participant_ids)
        object.__setattr__(self, 'participant_ids', np.asarray(self.participant_ids, dtype=object))
        object.__setattr__(self, 'days', np.asarray(self.days, dtype=object))
        object.__setattr__(self, 'minute_index', np.asarray(self.minute_index, dtype=np.int64))
        object.__setattr__(self, 'labels', np.asarray(self.labels, dtype=np.int8))
        object.__setattr__(self, 'categories', np.asarray(self.categories, dtype=np.int16))
        features = np.asarray(self.features, dtype=float).reshape(n, -1) if n else \
            np.asarray(self.features, dtype=float).reshape(0, FEATURE_COUNT)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'annotations', tuple(sorted(self.annotations)))
        for name in ('days', 'minute_index', 'labels', 'categories'):
            if len(getattr(self, name)) != n:
                raise DatasetError(f"Column '{name}' has {len(getattr(self, name))} rows, expected {n}")
        if features.shape != (n, FEATURE_COUNT):
            raise DatasetError(f"Feature matrix must be ({n}, {FEATURE_COUNT}), got {features.shape}")

    @classmethod
    def empty(cls):
        return cls(
            participant_ids=np.empty(0, dtype=object),
            days=np.empty(0, dtype=object),
            minute_index=np.empty(0, dtype=np.int64),
            features=np.empty((0, FEATURE_COUNT)),
            labels=np.empty(0, dtype=np.int8),
            categories=np.empty(0, dtype=np.int16),
        )

    @classmethod
    def from_instances(cls, instances, annotations=()):
        """Build a dataset from WindowInstance objects, keeping their order"""
        instances = list(instances)
        if not instances:
            return cls.empty().with_annotations(annotations)
        return cls(
            participant_ids=[i.participant_id for i in instances],
            days=[i.day for i in instances],
            minute_index=[i.minute_index for i in instances],
            features=np.vstack([i.features for i in instances]),
            labels=[i.label for i in instances],
            categories=[NO_CATEGORY if i.category is None else i.category for i in instances],
            annotations=tuple(annotations),
        )

    @classmethod
    def concatenate(cls, parts, annotations=None):
        """Stack datasets row-wise; annotations are merged unless given explicitly"""
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty().with_annotations(annotations or ())
        if annotations is None:
            annotations = [a for p in parts for a in p.annotations]
        return cls(
            participant_ids=np.concatenate([p.participant_ids for p in parts]),
            days=np.concatenate([p.days for p in parts]),
            minute_index=np.concatenate([p.minute_index for p in parts]),
            features=np.vstack([p.features for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            categories=np.concatenate([p.categories for p in parts]),
            annotations=tuple(annotations),
        )

    def __len__(self):
        return len(self.participant_ids)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            len(self) == len(other)
            and np.array_equal(self.participant_ids, other.participant_ids)
            and np.array_equal(self.days, other.days)
            and np.array_equal(self.minute_index, other.minute_index)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.categories, other.categories)
            and self.annotations == other.annotations
        )

    @property
    def instances(self):
        """Materialize the rows as WindowInstance objects"""
        return [self.instance(i) for i in range(len(self))]

    def instance(self, i: int) -> WindowInstance:
        category = int(self.categories[i])
        return WindowInstance(
            participant_id=self.participant_ids[i],
            day=self.days[i],
            minute_index=int(self.minute_index[i]),
            features=self.features[i],
            label=int(self.labels[i]),
            category=None if category == NO_CATEGORY else category,
        )

    @property
    def normal_mask(self):
        return self.labels == NORMAL

    @property
    def agitation_mask(self):
        return self.labels == AGITATION

    @property
    def n_normal(self) -> int:
        return int(np.count_nonzero(self.normal_mask))

    @property
    def n_agitation(self) -> int:
        return int(np.count_nonzero(self.agitation_mask))

    def with_annotations(self, annotations):
        return LabeledDataset(
            participant_ids=self.participant_ids,
            days=self.days,
            minute_index=self.minute_index,
            features=self.features,
            labels=self.labels,
            categories=self.categories,
            annotations=tuple(annotations),
        )

    def with_labels(self, labels):
        return LabeledDataset(
            participant_ids=self.participant_ids,
            days=self.days,
            minute_index=self.minute_index,
            features=self.features,
            labels=labels,
            categories=self.categories,
            annotations=self.annotations,
        )

    def group_codes(self):
        """
        Integer code per row for its (participant_id, day).

        Returns:
            tuple: (codes array, list of keys in order of first appearance)
        """
        lookup = {}
        codes = np.empty(len(self), dtype=np.int64)
        for i, key in enumerate(zip(self.participant_ids, self.days)):
            codes[i] = lookup.setdefault(key, len(lookup))
        return codes, list(lookup)

    def day_keys(self):
        return self.group_codes()[1]

    def subset(self, index):
        """Rows selected by a boolean mask or an integer index; annotations of kept days follow"""
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        kept = set(zip(self.participant_ids[index], self.days[index]))
        return LabeledDataset(
            participant_ids=self.participant_ids[index],
            days=self.days[index],
            minute_index=self.minute_index[index],
            features=self.features[index],
            labels=self.labels[index],
            categories=self.categories[index],
            annotations=tuple(a for a in self.annotations if a.key in kept),
        )

    def agitation_minutes_by_day(self):
        codes, keys = self.group_codes()
        counts = np.bincount(codes, weights=self.agitation_mask, minlength=len(keys))
        return {key: int(count) for key, count in zip(keys, counts)}

    def validate(self):
        """Check ordering and label/annotation consistency; raises DatasetError naming the row"""
        n = len(self)
        if n and not np.all(np.isfinite(self.features)):
            row = int(np.flatnonzero(~np.all(np.isfinite(self.features), axis=1))[0])
            raise DatasetError("Non-finite feature value", row=row)
        if n and self.minute_index.min() < 0:
            row = int(np.flatnonzero(self.minute_index < 0)[0])
            raise DatasetError("minute_index must be >= 0", row=row)
        bad_label = ~np.isin(self.labels, (NORMAL, AGITATION))
        if bad_label.any():
            raise DatasetError("label must be 0 or 1", row=int(np.flatnonzero(bad_label)[0]))

        codes, _ = self.group_codes()
        order = np.lexsort((np.arange(n), codes))
        same_day = codes[order][1:] == codes[order][:-1]
        not_increasing = same_day & (np.diff(self.minute_index[order]) <= 0)
        if not_increasing.any():
            row = int(order[1:][not_increasing][0])
            raise DatasetError(
                "minute_index must be strictly increasing within a participant-day (duplicate or out of order)",
                row=row,
            )

        for key, episodes in annotations_by_day(self.annotations).items():
            for previous, current in zip(episodes, episodes[1:]):
                if current.start_minute <= previous.end_minute:
                    raise DatasetError(f"Overlapping episodes on {key[0]} {key[1]}: {previous} and {current}")

        inside = episode_membership(self, self.annotations)
        mismatch = inside != self.agitation_mask
        if mismatch.any():
            row = int(np.flatnonzero(mismatch)[0])
            if self.labels[row] == AGITATION:
                raise DatasetError("Agitation window lies outside every annotated episode", row=row)
            raise DatasetError("Window inside an annotated episode is labelled normal", row=row)
        return self


def episode_membership(dataset: LabeledDataset, annotations) -> np.ndarray:
    """Boolean mask of rows whose minute falls inside an episode of the same participant-day"""
    inside = np.zeros(len(dataset), dtype=bool)
    if not len(dataset):
        return inside
    codes, keys = dataset.group_codes()
    code_of = {key: code for code, key in enumerate(keys)}
    rows_of = _rows_by_code(codes, len(keys))
    for key, episodes in annotations_by_day(annotations).items():
        code = code_of.get(key)
        if code is None:
            continue
        rows = rows_of[code]
        minutes = dataset.minute_index[rows]
        for episode in episodes:
            inside[rows[(minutes >= episode.start_minute) & (minutes <= episode.end_minute)]] = True
    return inside


def _rows_by_code(codes, n_groups):
    order = np.argsort(codes, kind='stable')
    boundaries = np.searchsorted(codes[order], np.arange(n_groups + 1))
    return [order[boundaries[g]:boundaries[g + 1]] for g in range(n_groups)]


def rows_by_day(dataset: LabeledDataset):
    """Dict of (participant_id, day) -> row indices in dataset order"""
    codes, keys = dataset.group_codes()
    return dict(zip(keys, _rows_by_code(codes, len(keys))))


def as_date(value) -> date:
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))
