"""
Dataset files, fold splitting and time-gap computation shared by all modules.

Dataset file (UTF-8 CSV, one window per row):
    participant_id, day (ISO date), minute_index, label, category, f1 .. f67
Annotation file (UTF-8 CSV, default `<dataset stem>.annotations.csv`):
    participant_id, day, start_minute, end_minute
"""

import io
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from agitationlab.errors import DataError, UsageError
from agitationlab.models import (
    FEATURE_COUNT,
    NO_CATEGORY,
    NORMAL,
    DatasetError,
    EpisodeAnnotation,
    LabeledDataset,
    SplitPlan,
    annotations_by_day,
    episode_membership,
    rows_by_day,
)
from agitationlab.utils import FLOAT_FORMAT, atomic_write_text

logger = logging.getLogger(__name__)

FEATURE_COLUMNS = [f"f{i}" for i in range(1, FEATURE_COUNT + 1)]
DATASET_COLUMNS = ['participant_id', 'day', 'minute_index', 'label', 'category'] + FEATURE_COLUMNS
ANNOTATION_COLUMNS = ['participant_id', 'day', 'start_minute', 'end_minute']

# Relative spread of agitation minutes across folds before a warning is logged
STRATIFICATION_TOLERANCE = 0.20


class FoldError(UsageError):
    """The dataset cannot be split into the requested folds"""
    pass


class GapError(DataError):
    """min_time_gap called on a window that is not normal"""
    pass


def default_annotations_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.annotations.csv")


# ---------------------------------------------------------------------------
# Loading and saving
# ---------------------------------------------------------------------------

def _read_table(path, columns, what):
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as e:
        raise DatasetError(f"Malformed {what.lower()} file {path}: {e}")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{what} file {path} has no header")
    if list(frame.columns) != columns:
        raise DatasetError(f"{what} file {path} has unexpected columns (line 1): {list(frame.columns)[:8]}...")
    return frame


def _line(row: int) -> int:
    """1-based file line of a 0-based data row (line 1 is the header)"""
    return row + 2


def _parse_int_column(frame, column, path, minimum=None, allow_blank=False):
    raw = frame[column].str.strip()
    blank = raw == ''
    values = pd.to_numeric(raw.where(~blank), errors='coerce')
    invalid = values.isna() & ~blank if allow_blank else values.isna()
    invalid |= values.notna() & (values != np.floor(values))
    if minimum is not None:
        invalid |= values.notna() & (values < minimum)
    if invalid.any():
        row = int(np.flatnonzero(invalid.to_numpy())[0])
        raise DatasetError(f"{path}: line {_line(row)}: invalid {column} '{frame[column].iloc[row]}'", row=row)
    return values


def _parse_day_column(frame, path):
    days = pd.to_datetime(frame['day'].str.strip(), format='%Y-%m-%d', errors='coerce')
    if days.isna().any():
        row = int(np.flatnonzero(days.isna().to_numpy())[0])
        raise DatasetError(f"{path}: line {_line(row)}: invalid day '{frame['day'].iloc[row]}'", row=row)
    return days.dt.date.to_numpy(dtype=object)


def _parse_participants(frame, path):
    ids = frame['participant_id'].str.strip()
    if (ids == '').any():
        row = int(np.flatnonzero((ids == '').to_numpy())[0])
        raise DatasetError(f"{path}: line {_line(row)}: empty participant_id", row=row)
    return ids.to_numpy(dtype=object)


def load_annotations(path):
    """Read an annotation file into a list of EpisodeAnnotation"""
    frame = _read_table(path, ANNOTATION_COLUMNS, 'Annotation')
    ids = _parse_participants(frame, path)
    days = _parse_day_column(frame, path)
    starts = _parse_int_column(frame, 'start_minute', path, minimum=0)
    ends = _parse_int_column(frame, 'end_minute', path, minimum=0)
    annotations = []
    for row in range(len(frame)):
        try:
            annotations.append(EpisodeAnnotation(ids[row], days[row], int(starts.iloc[row]), int(ends.iloc[row])))
        except DataError as e:
            raise DatasetError(f"{path}: line {_line(row)}: {e}", row=row)
    return annotations


def load_dataset(path, annotations_path=None) -> LabeledDataset:
    """
    Load a dataset file and its annotation file, enforcing every dataset invariant.

    Raises:
        DatasetError: missing file, malformed row or label/annotation inconsistency,
            with the offending file line where one exists
    """
    path = Path(path)
    annotations_path = Path(annotations_path) if annotations_path else default_annotations_path(path)
    frame = _read_table(path, DATASET_COLUMNS, 'Dataset')
    annotations = load_annotations(annotations_path)

    ids = _parse_participants(frame, path)
    days = _parse_day_column(frame, path)
    minutes = _parse_int_column(frame, 'minute_index', path, minimum=0)
    labels = frame['label'].str.strip()
    bad_label = ~labels.isin(['0', '1'])
    if bad_label.any():
        row = int(np.flatnonzero(bad_label.to_numpy())[0])
        raise DatasetError(f"{path}: line {_line(row)}: label must be 0 or 1, got '{labels.iloc[row]}'", row=row)
    categories = _parse_int_column(frame, 'category', path, minimum=0, allow_blank=True)

    if len(frame):
        features = frame[FEATURE_COLUMNS].apply(lambda column: pd.to_numeric(column.str.strip(), errors='coerce'))
        features = features.to_numpy(dtype=float)
    else:
        features = np.empty((0, FEATURE_COUNT))
    non_finite = ~np.all(np.isfinite(features), axis=1)
    if non_finite.any():
        row = int(np.flatnonzero(non_finite)[0])
        raise DatasetError(f"{path}: line {_line(row)}: missing or non-finite feature value", row=row)

    dataset = LabeledDataset(
        participant_ids=ids,
        days=days,
        minute_index=minutes.to_numpy(dtype=np.int64),
        features=features,
        labels=labels.astype(int).to_numpy(),
        categories=categories.fillna(NO_CATEGORY).to_numpy(dtype=np.int64),
        annotations=tuple(annotations),
    )
    try:
        dataset.validate()
    except DatasetError as e:
        where = f"line {_line(e.row)}: " if e.row is not None else ''
        raise DatasetError(f"{path}: {where}{e}", row=e.row)
    logger.info(f"Loaded {len(dataset)} windows and {len(annotations)} episodes from {path}")
    return dataset


def dataset_to_csv(dataset: LabeledDataset) -> str:
    frame = pd.DataFrame({
        'participant_id': dataset.participant_ids,
        'day': [d.isoformat() for d in dataset.days],
        'minute_index': dataset.minute_index,
        'label': dataset.labels.astype(int),
        'category': np.where(dataset.categories == NO_CATEGORY, '', dataset.categories.astype(str)),
    }, columns=DATASET_COLUMNS[:5])
    features = pd.DataFrame(dataset.features, columns=FEATURE_COLUMNS)
    frame = pd.concat([frame, features], axis=1)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return buffer.getvalue()


def annotations_to_csv(annotations) -> str:
    annotations = sorted(annotations)
    frame = pd.DataFrame({
        'participant_id': [a.participant_id for a in annotations],
        'day': [a.day.isoformat() for a in annotations],
        'start_minute': [a.start_minute for a in annotations],
        'end_minute': [a.end_minute for a in annotations],
    }, columns=ANNOTATION_COLUMNS)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def save_annotations(annotations, path):
    try:
        atomic_write_text(path, annotations_to_csv(annotations))
    except OSError as e:
        raise DatasetError(f"Cannot write annotations to {path}: {e}")


def save_dataset(dataset: LabeledDataset, path, annotations_path=None):
    """Write the dataset and its annotations; output is byte-identical for equal datasets"""
    path = Path(path)
    annotations_path = Path(annotations_path) if annotations_path else default_annotations_path(path)
    try:
        atomic_write_text(path, dataset_to_csv(dataset))
        save_annotations(dataset.annotations, annotations_path)
    except OSError as e:
        raise DatasetError(f"Cannot write dataset to {path}: {e}")
    logger.info(f"Saved {len(dataset)} windows to {path}")


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

def make_folds(dataset: LabeledDataset, n_folds: int, seed: int) -> SplitPlan:
    """
    Partition participant-days into folds, stratified on agitation minutes.

    Agitation days are dealt largest first to the fold with the fewest agitation
    minutes; days without agitation are dealt to the fold with the fewest days.
    """
    if n_folds < 2:
        raise FoldError(f"n_folds must be >= 2, got {n_folds}")
    if dataset.n_agitation == 0 or dataset.n_normal == 0:
        raise FoldError("Both classes must be present to build folds")

    codes, keys = dataset.group_codes()
    agitation = np.bincount(codes, weights=dataset.agitation_mask, minlength=len(keys)).astype(int)
    normal = np.bincount(codes, weights=dataset.normal_mask, minlength=len(keys)).astype(int)
    if np.count_nonzero(agitation) < n_folds:
        raise FoldError(
            f"Need at least {n_folds} participant-days with agitation, found {np.count_nonzero(agitation)}"
        )
    if np.count_nonzero(normal) < n_folds:
        raise FoldError(f"Need at least {n_folds} participant-days with normal windows")

    rng = np.random.default_rng(seed)
    order = sorted(range(len(keys)), key=lambda g: keys[g])
    order = [order[i] for i in rng.permutation(len(order))]

    load = np.zeros(n_folds, dtype=int)
    normals = np.zeros(n_folds, dtype=int)
    n_days = np.zeros(n_folds, dtype=int)
    fold_of = {}

    agitated = sorted((g for g in order if agitation[g] > 0), key=lambda g: -agitation[g])
    for g in agitated:
        fold = int(np.lexsort((np.arange(n_folds), n_days, load))[0])
        fold_of[keys[g]] = fold
        load[fold] += agitation[g]
        normals[fold] += normal[g]
        n_days[fold] += 1
    for g in (g for g in order if agitation[g] == 0):
        fold = int(np.lexsort((np.arange(n_folds), normals, n_days))[0])
        fold_of[keys[g]] = fold
        normals[fold] += normal[g]
        n_days[fold] += 1

    if np.any(normals == 0):
        raise FoldError("A fold received no normal windows")
    spread = (load.max() - load.min()) / load.max()
    if spread > STRATIFICATION_TOLERANCE:
        logger.warning(
            f"Agitation minutes per fold {load.tolist()} differ by {spread:.0%}, "
            f"above the {STRATIFICATION_TOLERANCE:.0%} stratification tolerance"
        )
    logger.info(f"Split {len(keys)} participant-days into {n_folds} folds (agitation minutes {load.tolist()})")
    return SplitPlan(fold_of=fold_of, n_folds=n_folds)


# ---------------------------------------------------------------------------
# Time gaps and labelling
# ---------------------------------------------------------------------------

def _gap(minute, episode):
    if minute < episode.start_minute:
        return episode.start_minute - minute
    if minute > episode.end_minute:
        return minute - episode.end_minute
    return 0


def min_time_gap(instance, annotations) -> float:
    """
    Minutes between a normal window and the nearest annotated minute of the same
    participant-day; infinity when that day has no episode.
    """
    if instance.label != NORMAL:
        raise GapError(
            f"min_time_gap is defined for normal windows only "
            f"({instance.participant_id} {instance.day} minute {instance.minute_index})"
        )
    episodes = [a for a in annotations if a.key == instance.key]
    if not episodes:
        return math.inf
    return float(min(_gap(instance.minute_index, episode) for episode in episodes))


def min_time_gaps(dataset: LabeledDataset, annotations=None) -> np.ndarray:
    """Vectorized min_time_gap for every row (agitation rows get 0)"""
    annotations = dataset.annotations if annotations is None else annotations
    gaps = np.full(len(dataset), np.inf)
    rows_of = rows_by_day(dataset)
    for key, episodes in annotations_by_day(annotations).items():
        rows = rows_of.get(key)
        if rows is None:
            continue
        minutes = dataset.minute_index[rows]
        for episode in episodes:
            gap = np.where(
                minutes < episode.start_minute,
                episode.start_minute - minutes,
                np.where(minutes > episode.end_minute, minutes - episode.end_minute, 0),
            )
            gaps[rows] = np.minimum(gaps[rows], gap)
    return gaps


def label_windows(dataset: LabeledDataset, annotations) -> np.ndarray:
    """
    Label 1 for every window whose minute lies inside an annotated episode.

    Short episodes, episodes during device fitting and early-morning episodes are
    labelled like any other.
    """
    return episode_membership(dataset, annotations).astype(np.int8)


def relabel(dataset: LabeledDataset, annotations) -> LabeledDataset:
    """Replace labels and annotations so the dataset is consistent with `annotations`"""
    return dataset.with_labels(label_windows(dataset, annotations)).with_annotations(annotations)


def agitation_days_only(dataset: LabeledDataset) -> LabeledDataset:
    """Keep only participant-days that contain at least one annotated episode"""
    keys = {a.key for a in dataset.annotations}
    mask = np.array([key in keys for key in zip(dataset.participant_ids, dataset.days)], dtype=bool)
    logger.info(f"Restricted dataset to {len(keys)} agitation days ({int(mask.sum())} windows)")
    return dataset.subset(mask)


@dataclass(frozen=True)
class DatasetSummary:
    n_participants: int
    n_days: int
    n_agitation_days: int
    n_episodes: int
    mean_episode_minutes: float
    n_windows: int
    n_normal: int
    n_agitation: int
    prevalence: float

    @property
    def ratio_text(self) -> str:
        """Normal : agitation percentage split, e.g. '98.7 : 1.3'"""
        return f"{100 * (1 - self.prevalence):.1f} : {100 * self.prevalence:.1f}"

    def to_dict(self):
        info = asdict(self)
        info['ratio'] = self.ratio_text
        return info


def describe_dataset(dataset: LabeledDataset) -> DatasetSummary:
    """Participant, day, episode and class-balance counts of a dataset"""
    episodes = dataset.annotations
    n = len(dataset)
    return DatasetSummary(
        n_participants=len(set(dataset.participant_ids)),
        n_days=len(dataset.day_keys()),
        n_agitation_days=len({a.key for a in episodes}),
        n_episodes=len(episodes),
        mean_episode_minutes=float(np.mean([a.duration_minutes for a in episodes])) if episodes else 0.0,
        n_windows=n,
        n_normal=dataset.n_normal,
        n_agitation=dataset.n_agitation,
        prevalence=dataset.n_agitation / n if n else 0.0,
    )
