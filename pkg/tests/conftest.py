"""
Shared fixtures: toy datasets with planted agitation episodes and a small
deterministic synthetic cohort.
"""

from dataclasses import replace
from datetime import date, timedelta

import numpy as np
import pytest

from agitationlab.core import relabel
from agitationlab.models import FEATURE_COUNT, EpisodeAnnotation, LabeledDataset
from agitationlab.synth import CohortConfig, build_cohort_dataset

START = date(2021, 3, 1)

# (participant index, day index, start minute, end minute)
DEFAULT_EPISODES = (
    (0, 0, 20, 27),
    (0, 1, 35, 44),
    (1, 0, 20, 27),
    (1, 1, 35, 44),
)


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow acceptance reproductions')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running reproduction on the full synthetic cohort')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def participant(p: int) -> str:
    return f"P{p + 1:02d}"


def build_dataset(n_participants=2, n_days=3, minutes=60, episodes=DEFAULT_EPISODES, shift=3.0, seed=0,
                  n_categories=5):
    """
    Random features with every agitation window shifted by `shift` on the first
    ten features; labels follow `episodes` exactly.
    """
    rng = np.random.default_rng(seed)
    ids, days, minute_index = [], [], []
    for p in range(n_participants):
        for d in range(n_days):
            ids += [participant(p)] * minutes
            days += [START + timedelta(days=d)] * minutes
            minute_index += list(range(minutes))
    n = len(ids)
    annotations = [
        EpisodeAnnotation(participant(p), START + timedelta(days=d), start, end) for p, d, start, end in episodes
    ]
    dataset = LabeledDataset(
        participant_ids=ids,
        days=days,
        minute_index=minute_index,
        features=rng.normal(size=(n, FEATURE_COUNT)),
        labels=np.zeros(n, dtype=np.int8),
        categories=rng.integers(0, n_categories, n),
    )
    dataset = relabel(dataset, annotations)
    features = dataset.features.copy()
    features[dataset.agitation_mask, :10] += shift
    return replace(dataset, features=features).validate()


@pytest.fixture
def make_dataset():
    return build_dataset


@pytest.fixture
def toy_dataset():
    return build_dataset()


SMALL_COHORT = CohortConfig(
    n_participants=3,
    days_per_participant=4,
    agitation_day_fraction=0.4,
    target_prevalence=0.03,
    n_normal_categories=3,
    wear_hours=2,
    seed=11,
)


@pytest.fixture(scope='session')
def small_cohort_config():
    return SMALL_COHORT


@pytest.fixture(scope='session')
def small_cohort():
    return build_cohort_dataset(SMALL_COHORT)
