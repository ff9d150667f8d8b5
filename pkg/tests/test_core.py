import math
from datetime import date

import numpy as np
import pytest

from agitationlab.core import (
    FoldError,
    GapError,
    agitation_days_only,
    describe_dataset,
    label_windows,
    load_dataset,
    make_folds,
    min_time_gap,
    min_time_gaps,
    relabel,
    save_dataset,
)
from agitationlab.errors import DataError
from agitationlab.models import (
    FEATURE_COUNT,
    DatasetError,
    EpisodeAnnotation,
    LabeledDataset,
    WindowInstance,
)

DAY = date(2021, 3, 1)


def _normal(minute, participant_id='P01', day=DAY):
    return WindowInstance(participant_id, day, minute, np.zeros(FEATURE_COUNT), 0)


class TestRecords:
    def test_episode_bounds_are_inclusive(self):
        episode = EpisodeAnnotation('P01', DAY, 40, 50)
        assert episode.duration_minutes == 11
        assert episode.contains(40) and episode.contains(50)
        assert not episode.contains(51)

    def test_episode_rejects_end_before_start(self):
        with pytest.raises(DataError):
            EpisodeAnnotation('P01', DAY, 10, 9)

    def test_window_needs_67_finite_features(self):
        with pytest.raises(DataError):
            WindowInstance('P01', DAY, 0, np.zeros(66), 0)
        features = np.zeros(FEATURE_COUNT)
        features[3] = np.nan
        with pytest.raises(DataError):
            WindowInstance('P01', DAY, 0, features, 0)

    def test_window_label_must_be_binary(self):
        with pytest.raises(DataError):
            WindowInstance('P01', DAY, 0, np.zeros(FEATURE_COUNT), 2)


class TestValidation:
    def test_toy_dataset_is_consistent(self, toy_dataset):
        assert toy_dataset.validate() is toy_dataset
        assert len(toy_dataset) == 360
        assert toy_dataset.n_agitation == 36

    def test_agitation_outside_episode_names_row(self, toy_dataset):
        labels = toy_dataset.labels.copy()
        labels[5] = 1
        with pytest.raises(DatasetError, match='outside every annotated episode') as excinfo:
            toy_dataset.with_labels(labels).validate()
        assert excinfo.value.row == 5

    def test_normal_inside_episode_is_rejected(self, toy_dataset):
        labels = toy_dataset.labels.copy()
        labels[20] = 0
        with pytest.raises(DatasetError, match='labelled normal'):
            toy_dataset.with_labels(labels).validate()

    def test_duplicate_minute_is_rejected(self, toy_dataset):
        minutes = toy_dataset.minute_index.copy()
        minutes[3] = 2
        broken = LabeledDataset(
            toy_dataset.participant_ids, toy_dataset.days, minutes, toy_dataset.features,
            toy_dataset.labels, toy_dataset.categories, toy_dataset.annotations,
        )
        with pytest.raises(DatasetError, match='strictly increasing') as excinfo:
            broken.validate()
        assert excinfo.value.row == 3

    def test_overlapping_episodes_are_rejected(self, make_dataset):
        with pytest.raises(DatasetError, match='Overlapping'):
            make_dataset(n_participants=1, n_days=1, episodes=((0, 0, 10, 20), (0, 0, 20, 25)))


class TestFiles:
    def test_save_load_save_is_byte_identical(self, toy_dataset, tmp_path):
        first = tmp_path / 'first.csv'
        second = tmp_path / 'second.csv'
        save_dataset(toy_dataset, first)
        loaded = load_dataset(first)
        save_dataset(loaded, second)

        assert first.read_bytes() == second.read_bytes()
        assert (tmp_path / 'first.annotations.csv').read_bytes() == (tmp_path / 'second.annotations.csv').read_bytes()
        assert len(loaded) == len(toy_dataset)
        np.testing.assert_array_equal(loaded.labels, toy_dataset.labels)
        np.testing.assert_array_equal(loaded.minute_index, toy_dataset.minute_index)
        np.testing.assert_array_equal(loaded.categories, toy_dataset.categories)
        np.testing.assert_allclose(loaded.features, toy_dataset.features, rtol=1e-8)
        assert loaded.annotations == toy_dataset.annotations

    def test_save_twice_is_deterministic(self, toy_dataset, tmp_path):
        save_dataset(toy_dataset, tmp_path / 'a.csv')
        save_dataset(toy_dataset, tmp_path / 'b.csv')
        assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()

    def test_empty_dataset_is_header_only(self, tmp_path):
        path = tmp_path / 'empty.csv'
        save_dataset(LabeledDataset.empty(), path)
        lines = path.read_text(encoding='utf-8').splitlines()
        assert len(lines) == 1
        assert lines[0].startswith('participant_id,day,minute_index,label,category,f1,')
        assert len(load_dataset(path)) == 0

    def test_explicit_annotation_path(self, toy_dataset, tmp_path):
        save_dataset(toy_dataset, tmp_path / 'data.csv', tmp_path / 'episodes.csv')
        loaded = load_dataset(tmp_path / 'data.csv', tmp_path / 'episodes.csv')
        assert loaded.annotations == toy_dataset.annotations

    def test_malformed_row_reports_line(self, toy_dataset, tmp_path):
        path = tmp_path / 'data.csv'
        save_dataset(toy_dataset, path)
        lines = path.read_text(encoding='utf-8').splitlines()
        cells = lines[3].split(',')
        cells[3] = '7'
        lines[3] = ','.join(cells)
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        with pytest.raises(DatasetError, match='line 4'):
            load_dataset(path)

    def test_label_without_annotation_is_rejected(self, toy_dataset, tmp_path):
        path = tmp_path / 'data.csv'
        save_dataset(toy_dataset, path)
        (tmp_path / 'data.annotations.csv').write_text(
            'participant_id,day,start_minute,end_minute\n', encoding='utf-8'
        )
        with pytest.raises(DatasetError, match='outside every annotated episode'):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match='not found'):
            load_dataset(tmp_path / 'nope.csv')


class TestFolds:
    def test_one_agitation_day_per_fold(self, make_dataset):
        dataset = make_dataset(n_participants=1, n_days=4, episodes=((0, 0, 10, 15), (0, 1, 20, 25)))
        plan = make_folds(dataset, 2, seed=3)
        agitation_days = {key for key, count in dataset.agitation_minutes_by_day().items() if count}
        for fold in range(2):
            assert len(agitation_days & set(plan.days_in_fold(fold))) == 1

    def test_same_seed_same_plan(self, toy_dataset):
        assert make_folds(toy_dataset, 2, seed=7) == make_folds(toy_dataset, 2, seed=7)

    def test_every_day_assigned_and_both_classes_per_fold(self, toy_dataset):
        plan = make_folds(toy_dataset, 2, seed=0)
        assert set(plan.fold_of) == set(toy_dataset.day_keys())
        folds = plan.fold_indices(toy_dataset)
        for fold in range(2):
            labels = toy_dataset.labels[folds == fold]
            assert set(np.unique(labels)) == {0, 1}

    def test_agitation_minutes_balanced(self, toy_dataset):
        folds = make_folds(toy_dataset, 2, seed=1).fold_indices(toy_dataset)
        counts = [int(toy_dataset.labels[folds == fold].sum()) for fold in range(2)]
        assert counts == [18, 18]

    def test_single_day_cannot_be_split(self, make_dataset):
        dataset = make_dataset(n_participants=1, n_days=1, episodes=((0, 0, 10, 15),))
        with pytest.raises(FoldError):
            make_folds(dataset, 2, seed=0)

    def test_n_folds_below_two(self, toy_dataset):
        with pytest.raises(FoldError):
            make_folds(toy_dataset, 1, seed=0)


class TestTimeGaps:
    EPISODES = [EpisodeAnnotation('P01', DAY, 40, 50)]

    def test_gap_before_episode(self):
        assert min_time_gap(_normal(30), self.EPISODES) == 10

    def test_gap_after_episode(self):
        assert min_time_gap(_normal(51), self.EPISODES) == 1

    def test_day_without_episode(self):
        assert min_time_gap(_normal(30, day=date(2021, 3, 2)), self.EPISODES) == math.inf
        assert min_time_gap(_normal(30, participant_id='P02'), self.EPISODES) == math.inf

    def test_gap_is_symmetric(self):
        episodes = [EpisodeAnnotation('P01', DAY, 30, 40)]
        assert min_time_gap(_normal(20), episodes) == min_time_gap(_normal(50), episodes) == 10

    def test_nearest_episode_wins(self):
        episodes = [EpisodeAnnotation('P01', DAY, 10, 12), EpisodeAnnotation('P01', DAY, 40, 50)]
        assert min_time_gap(_normal(35), episodes) == 5

    def test_agitation_window_is_rejected(self):
        agitated = WindowInstance('P01', DAY, 45, np.zeros(FEATURE_COUNT), 1)
        with pytest.raises(GapError):
            min_time_gap(agitated, self.EPISODES)

    def test_vectorized_gaps_match(self, toy_dataset):
        gaps = min_time_gaps(toy_dataset)
        for row in np.flatnonzero(toy_dataset.normal_mask)[::7]:
            assert gaps[row] == min_time_gap(toy_dataset.instance(row), toy_dataset.annotations)
        assert np.all(gaps[toy_dataset.agitation_mask] == 0)


class TestLabelling:
    def test_one_minute_episode_is_labelled(self, toy_dataset):
        short = EpisodeAnnotation(toy_dataset.participant_ids[0], toy_dataset.days[0], 3, 3)
        labels = label_windows(toy_dataset, [short])
        assert labels.sum() == 1
        assert labels[3] == 1

    def test_relabel_keeps_dataset_consistent(self, toy_dataset):
        episodes = [EpisodeAnnotation(toy_dataset.participant_ids[0], toy_dataset.days[0], 0, 4)]
        relabelled = relabel(toy_dataset, episodes).validate()
        assert relabelled.n_agitation == 5
        assert relabelled.annotations == tuple(episodes)

    def test_agitation_days_only(self, toy_dataset):
        restricted = agitation_days_only(toy_dataset)
        assert len(restricted.day_keys()) == 4
        assert restricted.n_agitation == toy_dataset.n_agitation
        assert restricted.annotations == toy_dataset.annotations


def test_describe_dataset(toy_dataset):
    summary = describe_dataset(toy_dataset)
    assert summary.n_participants == 2
    assert summary.n_days == 6
    assert summary.n_agitation_days == 4
    assert summary.n_episodes == 4
    assert summary.mean_episode_minutes == pytest.approx(9.0)
    assert summary.n_windows == 360
    assert summary.n_agitation == 36
    assert summary.prevalence == pytest.approx(0.1)
    assert summary.ratio_text == '90.0 : 10.0'
    assert summary.to_dict()['ratio'] == '90.0 : 10.0'
