"""
Seeded synthetic cohort of wrist-sensor recordings with annotated agitation episodes.

The signals are statistical stand-ins: each minute belongs to one of a few normal
behaviour categories with distinct movement, EDA and heart-rate levels, and
agitation minutes raise movement variance, EDA level and heart rate on top of
that. Episode placement is planned once for the whole cohort so that the
realized prevalence and mean episode duration hit their targets; signals are
then generated day by day from per-day seeds, which lets days be produced lazily
or in parallel.
"""

import logging
from dataclasses import dataclass, field, fields
from datetime import date, timedelta
from typing import Optional

import numpy as np
from faker import Faker
from joblib import Parallel, delayed
from scipy.signal import lfilter, lfilter_zi

from agitationlab.core import relabel
from agitationlab.errors import UsageError
from agitationlab.features import frame_to_dataset
from agitationlab.models import (
    Channel,
    EpisodeAnnotation,
    LabeledDataset,
    SignalFrame,
    annotations_by_day,
)
from agitationlab.signals import DEFAULT_CUTOFF_HZ
from agitationlab.utils import round_half_up

logger = logging.getLogger(__name__)

# Native Empatica E4 rates
ACC_RATE_HZ = 32
BVP_RATE_HZ = 64
EDA_RATE_HZ = 4
TEMP_RATE_HZ = 4

# Independent random streams derived from the cohort seed
PLAN_STREAM = 1
DAY_STREAM = 2

MIN_EPISODE_GAP_MINUTES = 10
CATEGORY_BLOCK_MINUTES = 45

ACC_BASE_STD = 0.02
ACC_STD_RATIO = 1.6
INTENSITY_SIGMA = 0.25
MOVEMENT_BASE_HZ = 1.0
MOVEMENT_STEP_HZ = 0.25
EDA_BASE = 1.0
EDA_STEP = 0.3
EDA_AGITATION_RISE = 0.6
EDA_NOISE = 0.01
HR_BASE = 65.0
HR_STEP = 5.0
HR_AGITATION_RISE = 15.0
BVP_AMPLITUDE = 50.0
BVP_NOISE = 5.0
TEMP_BASE = 33.0
TEMP_STEP = -0.1
TEMP_NOISE = 0.02
SMOOTHING = 0.98

# Smallest standardized mean difference two categories must show on some feature
SEPARATION_MIN = 0.25

# Largest gap between the planned and the configured mean episode duration, in minutes
EPISODE_MEAN_TOLERANCE = 1.5


class SynthError(UsageError):
    """The cohort configuration is invalid or cannot be realized"""
    pass


@dataclass(frozen=True)
class CohortConfig:
    n_participants: int = 12
    days_per_participant: int = 30
    agitation_day_fraction: float = 0.4
    episodes_min: int = 1
    episodes_max: int = 4
    mean_episode_minutes: float = 8.6
    episode_min_minutes: int = 2
    episode_max_minutes: int = 30
    target_prevalence: float = 0.013
    n_normal_categories: int = 5
    wear_hours: float = 8
    wear_start_minute: int = 480
    agitation_effect: float = 2.0
    jitter_max_shift: int = 0
    start_date: date = date(2020, 1, 6)
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.n_participants >= 1, "n_participants must be >= 1"),
            (self.days_per_participant >= 1, "days_per_participant must be >= 1"),
            (0 <= self.agitation_day_fraction <= 1, "agitation_day_fraction must lie in [0, 1]"),
            (0 <= self.target_prevalence <= 1, "target_prevalence must lie in [0, 1]"),
            (self.mean_episode_minutes > 0, "mean_episode_minutes must be > 0"),
            (1 <= self.episodes_min <= self.episodes_max, "need 1 <= episodes_min <= episodes_max"),
            (1 <= self.episode_min_minutes <= self.episode_max_minutes,
             "need 1 <= episode_min_minutes <= episode_max_minutes"),
            (self.n_normal_categories >= 1, "n_normal_categories must be >= 1"),
            (self.wear_hours > 0, "wear_hours must be > 0"),
            (self.wear_start_minute >= 0, "wear_start_minute must be >= 0"),
            (self.wear_start_minute + self.wear_minutes <= 24 * 60, "wear period must end before midnight"),
            (self.agitation_effect > 0, "agitation_effect must be > 0"),
            (self.jitter_max_shift >= 0, "jitter_max_shift must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise SynthError(f"Invalid cohort config: {message}")

    @property
    def wear_minutes(self) -> int:
        return round_half_up(self.wear_hours * 60)

    @property
    def n_days(self) -> int:
        return self.n_participants * self.days_per_participant

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def cohort_config_from_mapping(mapping) -> CohortConfig:
    """Build a CohortConfig from KEY=VALUE pairs (keys case-insensitive, unknown keys rejected)"""
    types = {f.name: f.type for f in fields(CohortConfig)}
    values = {}
    for key, raw in mapping.items():
        name = key.strip().lower()
        if name not in types:
            raise SynthError(f"Unknown cohort setting '{key}'")
        try:
            if types[name] is date:
                values[name] = date.fromisoformat(str(raw).strip())
            elif types[name] is int:
                values[name] = int(str(raw).strip())
            else:
                values[name] = float(str(raw).strip())
        except ValueError:
            raise SynthError(f"Cohort setting {key}={raw!r} is not a valid {types[name].__name__}") from None
    return CohortConfig(**values)


def participant_codes(n: int, seed: int):
    """Pseudonymous, unique participant codes such as 'KT-4821'"""
    fake = Faker()
    fake.seed_instance(seed)
    return [fake.unique.bothify(text='??-####', letters='ABCDEFGHJKLMNPRSTUVWXYZ') for _ in range(n)]


# ---------------------------------------------------------------------------
# Episode planning
# ---------------------------------------------------------------------------

def _spread_counts(rng, n_days, total, low, high):
    counts = np.full(n_days, low, dtype=int)
    extra = total - n_days * low
    while extra > 0:
        eligible = np.flatnonzero(counts < high)
        chosen = rng.choice(eligible, min(extra, eligible.size), replace=False)
        counts[chosen] += 1
        extra -= chosen.size
    return counts


def _durations(rng, n_episodes, total, low, high):
    """Integer durations in [low, high] summing exactly to `total`"""
    mean = total / n_episodes
    durations = np.clip(np.rint(rng.gamma(2.0, mean / 2.0, n_episodes)), low, high).astype(int)
    diff = total - int(durations.sum())
    while diff != 0:
        step = 1 if diff > 0 else -1
        eligible = np.flatnonzero(durations < high) if step > 0 else np.flatnonzero(durations > low)
        chosen = rng.choice(eligible, min(abs(diff), eligible.size), replace=False)
        durations[chosen] += step
        diff -= step * chosen.size
    return durations


def _place(rng, durations, config):
    """Random non-overlapping start minutes inside the wear period, in order"""
    slack = config.wear_minutes - int(durations.sum()) - (len(durations) - 1) * MIN_EPISODE_GAP_MINUTES
    if slack < 0:
        raise SynthError(
            f"{len(durations)} episodes of {int(durations.sum())} minutes do not fit in a "
            f"{config.wear_minutes}-minute wear period"
        )
    cuts = np.sort(rng.integers(0, slack + 1, size=len(durations)))
    starts = []
    cursor = config.wear_start_minute
    previous_cut = 0
    for cut, duration in zip(cuts, durations):
        cursor += cut - previous_cut
        starts.append(cursor)
        cursor += int(duration) + MIN_EPISODE_GAP_MINUTES
        previous_cut = cut
    return starts


def plan_episodes(config: CohortConfig, codes=None):
    """
    Decide every episode of the cohort.

    The number of agitation minutes is round(target_prevalence x total minutes);
    episodes are spread over round(agitation_day_fraction x days) days with at
    least `episodes_min` per agitation day.

    Returns:
        tuple: EpisodeAnnotation objects in sorted order
    """
    if config.agitation_day_fraction == 0:
        return ()
    codes = codes or participant_codes(config.n_participants, config.seed)
    total_minutes = config.n_days * config.wear_minutes
    target = round_half_up(config.target_prevalence * total_minutes)
    n_agitation_days = round_half_up(config.agitation_day_fraction * config.n_days)
    if n_agitation_days == 0:
        return ()
    n_episodes = max(n_agitation_days * config.episodes_min, round_half_up(target / config.mean_episode_minutes))

    if n_episodes > n_agitation_days * config.episodes_max:
        raise SynthError(
            f"{n_episodes} episodes needed but {n_agitation_days} agitation days allow at most "
            f"{n_agitation_days * config.episodes_max}"
        )
    if not n_episodes * config.episode_min_minutes <= target <= n_episodes * config.episode_max_minutes:
        raise SynthError(
            f"Prevalence {config.target_prevalence} needs {target} agitation minutes, which {n_episodes} "
            f"episodes of {config.episode_min_minutes}-{config.episode_max_minutes} minutes cannot cover"
        )
    planned_mean = target / n_episodes
    if abs(planned_mean - config.mean_episode_minutes) > EPISODE_MEAN_TOLERANCE:
        raise SynthError(
            f"{n_episodes} episodes over {target} agitation minutes average {planned_mean:.2f} minutes, "
            f"more than {EPISODE_MEAN_TOLERANCE:g} away from mean_episode_minutes={config.mean_episode_minutes:g}"
        )

    rng = np.random.default_rng([config.seed, PLAN_STREAM])
    agitation_days = np.sort(rng.choice(config.n_days, n_agitation_days, replace=False))
    counts = _spread_counts(rng, n_agitation_days, n_episodes, config.episodes_min, config.episodes_max)
    durations = _durations(rng, n_episodes, target, config.episode_min_minutes, config.episode_max_minutes)

    episodes = []
    offset = 0
    for day_number, count in zip(agitation_days, counts):
        day_durations = durations[offset:offset + count]
        offset += count
        participant, day_index = divmod(int(day_number), config.days_per_participant)
        day = config.start_date + timedelta(days=day_index)
        for start, duration in zip(_place(rng, day_durations, config), day_durations):
            episodes.append(EpisodeAnnotation(codes[participant], day, start, start + int(duration) - 1))
    logger.info(
        f"Planned {len(episodes)} episodes ({target} minutes) on {n_agitation_days} of {config.n_days} days"
    )
    return tuple(sorted(episodes))


# ---------------------------------------------------------------------------
# Boundary jitter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JitterResult:
    """Recorded (jittered) episodes next to the ground truth they came from"""
    recorded: tuple
    truth: tuple
    collapsed: tuple = field(default_factory=tuple)


def inject_boundary_jitter(annotations, max_shift_minutes: int, seed: int) -> JitterResult:
    """
    Shrink every episode inward: the start moves later and the end earlier by
    independent uniform integers in [0, max_shift_minutes].

    An episode whose shifted start passes its shifted end is clamped to its
    middle minute and listed in `collapsed`.
    """
    if max_shift_minutes < 0:
        raise SynthError(f"max_shift_minutes must be >= 0, got {max_shift_minutes}")
    truth = tuple(sorted(annotations))
    rng = np.random.default_rng(seed)
    recorded = []
    collapsed = []
    for episode in truth:
        start_shift, end_shift = rng.integers(0, max_shift_minutes + 1, size=2)
        start = episode.start_minute + int(start_shift)
        end = episode.end_minute - int(end_shift)
        if start > end:
            start = end = (episode.start_minute + episode.end_minute) // 2
            collapsed.append(episode)
        recorded.append(EpisodeAnnotation(episode.participant_id, episode.day, start, end))
    if collapsed:
        logger.info(f"Boundary jitter collapsed {len(collapsed)} episodes to a single minute")
    return JitterResult(recorded=tuple(recorded), truth=truth, collapsed=tuple(collapsed))


# ---------------------------------------------------------------------------
# Signal generation
# ---------------------------------------------------------------------------

def _category_blocks(rng, n_minutes, n_categories):
    categories = np.empty(n_minutes, dtype=np.int16)
    position = 0
    while position < n_minutes:
        length = int(rng.geometric(1.0 / CATEGORY_BLOCK_MINUTES))
        categories[position:position + length] = rng.integers(n_categories)
        position += length
    return categories


def _smooth(x):
    b, a = [1 - SMOOTHING], [1, -SMOOTHING]
    return lfilter(b, a, x, zi=lfilter_zi(b, a) * x[0])[0]


def _per_sample(values, rate):
    return np.repeat(values, 60 * rate)


def generate_day(config: CohortConfig, participant_index: int, day_index: int, episodes=(), codes=None):
    """
    Raw recording of one participant-day.

    Returns:
        tuple: (SignalFrame, per-minute category array)
    """
    codes = codes or participant_codes(config.n_participants, config.seed)
    rng = np.random.default_rng([config.seed, DAY_STREAM, participant_index, day_index])
    n_minutes = config.wear_minutes
    minutes = config.wear_start_minute + np.arange(n_minutes)

    categories = _category_blocks(rng, n_minutes, config.n_normal_categories)
    agitated = np.zeros(n_minutes, dtype=bool)
    for episode in episodes:
        agitated |= (minutes >= episode.start_minute) & (minutes <= episode.end_minute)
    effect = np.where(agitated, config.agitation_effect, 1.0)
    rise = effect - 1.0

    intensity = rng.lognormal(0.0, INTENSITY_SIGMA, n_minutes)
    acc_std = _per_sample(ACC_BASE_STD * ACC_STD_RATIO ** categories * intensity * effect, ACC_RATE_HZ)
    movement_hz = _per_sample(MOVEMENT_BASE_HZ + MOVEMENT_STEP_HZ * categories, ACC_RATE_HZ)
    movement = np.sin(2 * np.pi * np.cumsum(movement_hz) / ACC_RATE_HZ)
    n_acc = acc_std.size
    acc_x = acc_std * (rng.standard_normal(n_acc) + movement)
    acc_y = acc_std * rng.standard_normal(n_acc)
    acc_z = 1.0 + acc_std * rng.standard_normal(n_acc)

    heart_hz = _per_sample((HR_BASE + HR_STEP * categories + HR_AGITATION_RISE * rise) / 60.0, BVP_RATE_HZ)
    phase = 2 * np.pi * np.cumsum(heart_hz) / BVP_RATE_HZ
    bvp = BVP_AMPLITUDE * np.sin(phase) + BVP_NOISE * rng.standard_normal(phase.size)

    eda_level = _per_sample(EDA_BASE + EDA_STEP * categories + EDA_AGITATION_RISE * rise, EDA_RATE_HZ)
    eda = _smooth(eda_level) + EDA_NOISE * rng.standard_normal(eda_level.size)
    temp_level = _per_sample(TEMP_BASE + TEMP_STEP * categories, TEMP_RATE_HZ)
    temp = _smooth(temp_level) + TEMP_NOISE * rng.standard_normal(temp_level.size)

    participant_id, day = codes[participant_index], config.start_date + timedelta(days=day_index)
    frame = SignalFrame(
        participant_id=participant_id,
        day=day,
        channels={
            'acc_x': Channel(ACC_RATE_HZ, acc_x),
            'acc_y': Channel(ACC_RATE_HZ, acc_y),
            'acc_z': Channel(ACC_RATE_HZ, acc_z),
            'bvp': Channel(BVP_RATE_HZ, bvp),
            'eda': Channel(EDA_RATE_HZ, eda),
            'temp': Channel(TEMP_RATE_HZ, temp),
        },
        start_minute=config.wear_start_minute,
    )
    return frame, categories


@dataclass(frozen=True)
class CohortDay:
    frame: SignalFrame
    annotations: tuple
    categories: np.ndarray


def iter_cohort_days(config: CohortConfig, plan=None):
    """Yield the cohort one participant-day at a time, in (participant, day) order"""
    codes = participant_codes(config.n_participants, config.seed)
    plan = plan_episodes(config, codes) if plan is None else plan
    by_day = annotations_by_day(plan)
    for p in range(config.n_participants):
        for d in range(config.days_per_participant):
            key = (codes[p], config.start_date + timedelta(days=d))
            episodes = tuple(by_day.get(key, ()))
            frame, categories = generate_day(config, p, d, episodes, codes)
            yield CohortDay(frame, episodes, categories)


@dataclass(frozen=True)
class Cohort:
    frames: list
    annotations: tuple
    categories: dict


def generate_cohort(config: CohortConfig) -> Cohort:
    """Whole cohort in memory; use iter_cohort_days or build_cohort_dataset for full-size configs"""
    frames, categories = [], {}
    plan = plan_episodes(config)
    for day in iter_cohort_days(config, plan):
        frames.append(day.frame)
        categories[day.frame.key] = day.categories
    return Cohort(frames=frames, annotations=plan, categories=categories)


# ---------------------------------------------------------------------------
# Feature dataset of a cohort
# ---------------------------------------------------------------------------

def check_category_separation(dataset: LabeledDataset):
    """
    Verify every pair of normal-behaviour categories differs on at least one feature.

    Returns:
        dict: (category a, category b) -> largest standardized mean difference
    """
    normal = dataset.normal_mask & (dataset.categories >= 0)
    present = sorted(int(c) for c in np.unique(dataset.categories[normal]))
    features = dataset.features[normal]
    scale = features.std(axis=0)
    scale[scale == 0] = 1.0
    means = {c: features[dataset.categories[normal] == c].mean(axis=0) / scale for c in present}
    separation = {}
    for i, a in enumerate(present):
        for b in present[i + 1:]:
            separation[(a, b)] = float(np.max(np.abs(means[a] - means[b])))
            if separation[(a, b)] < SEPARATION_MIN:
                raise SynthError(
                    f"Normal categories {a} and {b} are not separable "
                    f"(largest standardized mean difference {separation[(a, b)]:.3f})"
                )
    return separation


def _day_dataset(config, codes, participant_index, day_index, episodes, cutoff_hz):
    frame, categories = generate_day(config, participant_index, day_index, episodes, codes)
    return frame_to_dataset(frame, episodes, cutoff_hz, categories=categories)


@dataclass(frozen=True)
class CohortDataset:
    """Feature dataset of a cohort, labelled from the recorded annotations"""
    dataset: LabeledDataset
    truth: tuple
    jitter: Optional[JitterResult] = None


def build_cohort_dataset(config: CohortConfig, n_jobs: int = 1, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> CohortDataset:
    """Generate, preprocess and featurize every participant-day; day order is independent of n_jobs"""
    codes = participant_codes(config.n_participants, config.seed)
    plan = plan_episodes(config, codes)
    by_day = annotations_by_day(plan)
    jobs = []
    for p in range(config.n_participants):
        for d in range(config.days_per_participant):
            episodes = tuple(by_day.get((codes[p], config.start_date + timedelta(days=d)), ()))
            jobs.append(delayed(_day_dataset)(config, codes, p, d, episodes, cutoff_hz))
    logger.info(f"Generating {len(jobs)} participant-days with n_jobs={n_jobs}")
    parts = Parallel(n_jobs=n_jobs)(jobs)
    dataset = LabeledDataset.concatenate(parts, annotations=plan)
    if config.n_normal_categories > 1:
        check_category_separation(dataset)

    jitter = None
    if config.jitter_max_shift > 0:
        jitter = inject_boundary_jitter(plan, config.jitter_max_shift, config.seed)
        dataset = relabel(dataset, jitter.recorded)
    dataset.validate()
    return CohortDataset(dataset=dataset, truth=plan, jitter=jitter)
