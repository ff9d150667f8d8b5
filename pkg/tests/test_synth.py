import re
from dataclasses import replace
from datetime import date

import numpy as np
import pytest

from agitationlab.core import describe_dataset, label_windows
from agitationlab.features import DEFAULT_CATALOG
from agitationlab.models import EpisodeAnnotation
from agitationlab.synth import (
    SEPARATION_MIN,
    CohortConfig,
    SynthError,
    build_cohort_dataset,
    check_category_separation,
    cohort_config_from_mapping,
    generate_cohort,
    generate_day,
    inject_boundary_jitter,
    iter_cohort_days,
    participant_codes,
    plan_episodes,
)

TINY = CohortConfig(
    n_participants=2,
    days_per_participant=2,
    agitation_day_fraction=0.5,
    target_prevalence=0.05,
    mean_episode_minutes=3,
    n_normal_categories=2,
    wear_hours=0.5,
    seed=5,
)


class TestConfig:
    def test_invalid_values(self):
        with pytest.raises(SynthError):
            CohortConfig(n_participants=0)
        with pytest.raises(SynthError):
            CohortConfig(wear_hours=20)
        with pytest.raises(SynthError):
            CohortConfig(episodes_min=3, episodes_max=2)

    def test_from_mapping(self):
        config = cohort_config_from_mapping({
            'N_PARTICIPANTS': '3', 'START_DATE': '2021-01-04', 'target_prevalence': '0.02',
        })
        assert config.n_participants == 3
        assert config.start_date == date(2021, 1, 4)
        assert config.target_prevalence == 0.02
        assert config.days_per_participant == 30

    def test_from_mapping_rejects_unknown_and_bad_values(self):
        with pytest.raises(SynthError, match='Unknown'):
            cohort_config_from_mapping({'N_PATIENTS': '3'})
        with pytest.raises(SynthError, match='not a valid'):
            cohort_config_from_mapping({'N_PARTICIPANTS': 'three'})


def test_participant_codes_are_unique_and_seeded():
    codes = participant_codes(12, seed=0)
    assert len(set(codes)) == 12
    assert all(re.fullmatch(r'[A-Z]{2}-\d{4}', code) for code in codes)
    assert codes == participant_codes(12, seed=0)
    assert codes != participant_codes(12, seed=1)


class TestPlan:
    def test_plan_meets_targets(self, small_cohort_config):
        plan = plan_episodes(small_cohort_config)
        total = small_cohort_config.n_days * small_cohort_config.wear_minutes
        minutes = sum(episode.duration_minutes for episode in plan)
        assert minutes == round(small_cohort_config.target_prevalence * total)
        assert minutes / len(plan) == pytest.approx(small_cohort_config.mean_episode_minutes, abs=1.5)
        assert list(plan) == sorted(plan)

    def test_episodes_fit_wear_period_without_overlap(self, small_cohort_config):
        plan = plan_episodes(small_cohort_config)
        start = small_cohort_config.wear_start_minute
        end = start + small_cohort_config.wear_minutes - 1
        for episode in plan:
            assert start <= episode.start_minute <= episode.end_minute <= end
            assert 2 <= episode.duration_minutes <= 30
        for a, b in zip(plan, plan[1:]):
            if a.key == b.key:
                assert b.start_minute > a.end_minute

    def test_plan_is_deterministic(self, small_cohort_config):
        assert plan_episodes(small_cohort_config) == plan_episodes(small_cohort_config)

    def test_no_agitation_days(self):
        assert plan_episodes(replace(TINY, agitation_day_fraction=0)) == ()

    def test_unreachable_prevalence(self):
        config = CohortConfig(n_participants=1, days_per_participant=1, wear_hours=1, target_prevalence=1.0,
                              agitation_day_fraction=1.0)
        with pytest.raises(SynthError):
            plan_episodes(config)

    def test_unreachable_mean_duration(self):
        # 144 agitation days need at least 144 episodes, which spread 864 minutes at 6 minutes each
        config = replace(CohortConfig(), target_prevalence=0.005)
        with pytest.raises(SynthError, match="mean_episode_minutes"):
            plan_episodes(config)

    def test_planned_mean_tracks_the_configured_mean(self):
        config = replace(CohortConfig(), mean_episode_minutes=12)
        plan = plan_episodes(config)
        minutes = sum(episode.duration_minutes for episode in plan)
        assert minutes / len(plan) == pytest.approx(12, abs=1.5)


class TestSignals:
    def test_day_is_deterministic(self):
        first, first_categories = generate_day(TINY, 1, 1)
        second, second_categories = generate_day(TINY, 1, 1)
        for name, channel in first.channels.items():
            np.testing.assert_array_equal(channel.samples, second.channels[name].samples)
        np.testing.assert_array_equal(first_categories, second_categories)

    def test_days_differ(self):
        first, _ = generate_day(TINY, 0, 0)
        second, _ = generate_day(TINY, 0, 1)
        assert not np.array_equal(first.channels['acc_x'].samples, second.channels['acc_x'].samples)

    def test_frame_covers_wear_period(self):
        frame, categories = generate_day(TINY, 0, 0)
        assert frame.duration_s == TINY.wear_minutes * 60
        assert frame.start_minute == TINY.wear_start_minute
        assert categories.size == TINY.wear_minutes
        assert set(np.unique(categories)) <= set(range(TINY.n_normal_categories))

    def test_generate_cohort_matches_iterator(self):
        cohort = generate_cohort(TINY)
        assert len(cohort.frames) == TINY.n_days
        assert cohort.annotations == plan_episodes(TINY)
        for frame, day in zip(cohort.frames, iter_cohort_days(TINY)):
            assert frame.key == day.frame.key
            np.testing.assert_array_equal(frame.channels['eda'].samples, day.frame.channels['eda'].samples)
            np.testing.assert_array_equal(cohort.categories[frame.key], day.categories)


class TestCohortDataset:
    def test_prevalence_and_duration(self, small_cohort, small_cohort_config):
        summary = describe_dataset(small_cohort.dataset)
        assert summary.n_participants == 3
        assert summary.n_days == 12
        assert summary.n_windows == 12 * 120
        assert summary.prevalence == pytest.approx(small_cohort_config.target_prevalence, abs=0.004)
        assert summary.mean_episode_minutes == pytest.approx(small_cohort_config.mean_episode_minutes, abs=1.5)

    def test_agitation_raises_movement_and_eda(self, small_cohort):
        dataset = small_cohort.dataset
        for name in ('acc_mag_std', 'eda_mean'):
            column = dataset.features[:, DEFAULT_CATALOG.index(name)]
            assert column[dataset.agitation_mask].mean() > column[dataset.normal_mask].mean()

    def test_categories_separate(self, small_cohort):
        separation = check_category_separation(small_cohort.dataset)
        assert set(separation) == {(0, 1), (0, 2), (1, 2)}
        assert min(separation.values()) >= SEPARATION_MIN

    def test_identical_categories_are_rejected(self, toy_dataset):
        flat = replace(toy_dataset, features=np.ones_like(toy_dataset.features))
        with pytest.raises(SynthError, match='not separable'):
            check_category_separation(flat)

    def test_truth_equals_plan_without_jitter(self, small_cohort, small_cohort_config):
        assert small_cohort.jitter is None
        assert small_cohort.truth == plan_episodes(small_cohort_config)
        assert small_cohort.dataset.annotations == small_cohort.truth

    def test_worker_count_does_not_change_output(self):
        assert build_cohort_dataset(TINY, n_jobs=1).dataset == build_cohort_dataset(TINY, n_jobs=2).dataset

    def test_no_agitation_days_gives_all_normal(self):
        cohort = build_cohort_dataset(replace(TINY, agitation_day_fraction=0))
        assert cohort.dataset.annotations == ()
        assert cohort.dataset.n_agitation == 0

    def test_jittered_cohort_keeps_truth(self):
        cohort = build_cohort_dataset(replace(TINY, jitter_max_shift=2))
        assert cohort.jitter is not None
        assert cohort.truth == plan_episodes(TINY)
        assert cohort.dataset.annotations == cohort.jitter.recorded
        assert cohort.dataset.n_agitation <= label_windows(cohort.dataset, cohort.truth).sum()


class TestJitter:
    EPISODE = EpisodeAnnotation('P01', date(2021, 3, 1), 40, 50)

    def test_zero_shift_is_identity(self, small_cohort):
        result = inject_boundary_jitter(small_cohort.truth, 0, seed=1)
        assert result.recorded == result.truth == small_cohort.truth
        assert result.collapsed == ()

    def test_shift_stays_inside_episode(self):
        for seed in range(30):
            recorded = inject_boundary_jitter([self.EPISODE], 3, seed).recorded[0]
            assert 40 <= recorded.start_minute <= 43
            assert 47 <= recorded.end_minute <= 50

    def test_short_episode_collapses_to_middle(self):
        short = EpisodeAnnotation('P01', date(2021, 3, 1), 40, 42)
        results = [inject_boundary_jitter([short], 5, seed) for seed in range(50)]
        collapsed = [r for r in results if r.collapsed]
        assert collapsed
        for result in collapsed:
            assert result.collapsed == (short,)
            recorded = result.recorded[0]
            assert recorded.start_minute == recorded.end_minute == 41

    def test_empty_list(self):
        assert inject_boundary_jitter([], 4, seed=0).recorded == ()

    def test_negative_shift(self):
        with pytest.raises(SynthError):
            inject_boundary_jitter([self.EPISODE], -1, seed=0)

    def test_label_changes_stay_in_boundary_bands(self, small_cohort):
        max_shift = 4
        dataset = small_cohort.dataset
        jitter = inject_boundary_jitter(small_cohort.truth, max_shift, seed=2)
        truth = label_windows(dataset, jitter.truth)
        recorded = label_windows(dataset, jitter.recorded)

        changed = np.flatnonzero(truth != recorded)
        assert changed.size > 0
        assert np.all(truth[changed] == 1) and np.all(recorded[changed] == 0)
        for row in changed:
            minute = dataset.minute_index[row]
            episode = next(
                e for e in jitter.truth
                if e.key == (dataset.participant_ids[row], dataset.days[row]) and e.contains(minute)
            )
            assert min(minute - episode.start_minute, episode.end_minute - minute) < max_shift
