import numpy as np
import pytest

from agitationlab.autoenc import AeTrainConfig
from agitationlab.core import make_folds
from agitationlab.errors import UsageError
from agitationlab.experiment import StrategySpec, run_cv_experiment
from agitationlab.forest import HyperGrid
from agitationlab.models import Strategy

GRID = HyperGrid((5, 10), (4, 16))
FAST_AE = AeTrainConfig(epochs=10)


def _run(dataset, spec, **kwargs):
    kwargs.setdefault('grid', GRID)
    kwargs.setdefault('seed1', 3)
    return run_cv_experiment(dataset, spec, **kwargs)


class TestStrategySpec:
    def test_labels(self):
        assert StrategySpec(Strategy.RUS, proportion=0.2).label == 'rus_p0.2'
        assert StrategySpec('wrus', proportion=1.0).label == 'wrus_p1'
        assert StrategySpec('aef_iqr', k=1.5).label == 'aef_iqr_k1.5'
        assert StrategySpec('none').label == 'none_p1'

    @pytest.mark.parametrize('kwargs', [
        {'strategy': 'none', 'proportion': 0.5},
        {'strategy': 'rus', 'proportion': 0},
        {'strategy': 'wrus', 'proportion': 1.2},
        {'strategy': 'aef_iqr'},
        {'strategy': 'aef_iqr', 'k': -1},
        {'strategy': 'rus', 'proportion': 0.5, 'k': 1.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(UsageError):
            StrategySpec(**kwargs)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            StrategySpec('smote')

    def test_to_dict(self):
        assert StrategySpec('rus', proportion=0.4).to_dict() == {'strategy': 'rus', 'proportion': 0.4}
        info = StrategySpec('aef_iqr', k=2, ae_config=FAST_AE).to_dict()
        assert info['k'] == 2
        assert info['autoencoder']['epochs'] == 10
        assert 'wrus' in StrategySpec('wrus', proportion=0.5).to_dict()


class TestRun:
    def test_one_report_per_fold_and_seed(self, toy_dataset):
        result = _run(toy_dataset, StrategySpec('rus', proportion=0.5), seeds2=range(5))
        assert len(result.reports) == 10
        assert [(r.fold, r.seed) for r in result.reports[:3]] == [(0, 0), (1, 0), (0, 1)]
        seed_means = result.seed_mean_aurocs()
        assert list(seed_means) == [0, 1, 2, 3, 4]
        assert result.mean_auroc == pytest.approx(np.mean(list(seed_means.values())))

    def test_every_row_is_scored_once_per_seed(self, toy_dataset):
        result = _run(toy_dataset, StrategySpec('rus', proportion=0.5), seeds2=(0, 1))
        for seed in (0, 1):
            scores = result.test_scores[seed]
            assert scores.shape == (len(toy_dataset),)
            assert np.all((scores >= 0) & (scores <= 1))
        assert sum(r.n_test for r in result.reports if r.seed == 0) == len(toy_dataset)

    def test_none_equals_full_rus(self, toy_dataset):
        plain = _run(toy_dataset, StrategySpec('none'))
        full = _run(toy_dataset, StrategySpec('rus', proportion=1.0))
        assert [r.auroc for r in plain.reports] == [r.auroc for r in full.reports]
        np.testing.assert_array_equal(plain.test_scores[0], full.test_scores[0])
        assert plain.mean_proportion == 1.0

    def test_strategies_share_test_folds(self, toy_dataset):
        plan = make_folds(toy_dataset, 2, seed=3)
        results = [
            _run(toy_dataset, spec, plan=plan)
            for spec in (StrategySpec('rus', proportion=0.3), StrategySpec('wrus', proportion=0.3))
        ]
        assert [r.n_test for r in results[0].reports] == [r.n_test for r in results[1].reports]
        assert results[0].reports[0].retained_normal_count == results[1].reports[0].retained_normal_count

    def test_undersampling_shrinks_training_set(self, toy_dataset):
        result = _run(toy_dataset, StrategySpec('rus', proportion=0.2))
        for report in result.reports:
            assert report.n_train_rebuilt < report.n_train_source
            assert report.n_train_rebuilt == report.retained_normal_count + report.agitation_count
            assert report.proportion == 0.2

    def test_result_is_reproducible(self, toy_dataset):
        spec = StrategySpec('wrus', proportion=0.4)
        assert _run(toy_dataset, spec, seeds2=(1, 2)).to_dict() == _run(toy_dataset, spec, seeds2=(1, 2)).to_dict()

    def test_timings_are_kept_apart(self, toy_dataset):
        result = _run(toy_dataset, StrategySpec('rus', proportion=0.5))
        info = result.to_dict()
        assert 'training_ms' not in info['folds'][0]
        assert 'mean_training_ms' not in info
        timing = result.timing()
        assert timing['mean_training_ms'] > 0
        assert len(timing['folds']) == 2

    def test_truth_labels_must_align(self, toy_dataset):
        with pytest.raises(UsageError):
            _run(toy_dataset, StrategySpec('rus', proportion=0.5), truth_labels=[0, 1])

    def test_needs_a_seed(self, toy_dataset):
        with pytest.raises(UsageError):
            _run(toy_dataset, StrategySpec('rus', proportion=0.5), seeds2=())


class TestAefRun:
    def test_autoencoders_are_cached_per_fold_and_seed(self, toy_dataset):
        cache = {}
        _run(toy_dataset, StrategySpec('aef_iqr', k=1.5, ae_config=FAST_AE), seeds2=(0, 1), ae_cache=cache)
        assert set(cache) == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_wider_fence_keeps_more_normals(self, toy_dataset):
        cache = {}
        narrow = _run(toy_dataset, StrategySpec('aef_iqr', k=0.5, ae_config=FAST_AE), ae_cache=cache)
        wide = _run(toy_dataset, StrategySpec('aef_iqr', k=3, ae_config=FAST_AE), ae_cache=cache)
        for a, b in zip(narrow.reports, wide.reports):
            assert a.retained_normal_count <= b.retained_normal_count
            assert a.agitation_count == b.agitation_count
        assert narrow.mean_proportion < 1.0
        assert narrow.to_dict()['folds'][0]['k'] == 0.5
