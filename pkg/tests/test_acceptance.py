"""
End-to-end properties: exact oracles run by default, the cohort-scale
reproductions only with --runslow.
"""

from dataclasses import replace

import numpy as np
import pytest

from agitationlab.core import label_windows, make_folds
from agitationlab.decide import CcrParams, ccr_relabel, effective_threshold_range, sweep_thresholds
from agitationlab.experiment import StrategySpec, run_cv_experiment
from agitationlab.forest import HyperGrid
from agitationlab.metrics import auroc, linear_fit
from agitationlab.resample import aef_iqr_filter, iqr_fence, rus
from agitationlab.synth import CohortConfig, build_cohort_dataset

TABLE_K = (0, 0.1, 0.5, 1, 1.5, 2, 3, 10)


def test_ccr_flags_match_a_direct_recount():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        win = int(rng.integers(1, 8))
        params = CcrParams(win=win, threshold=float(rng.uniform(0.05, 0.95)))
        scores = rng.random(int(rng.integers(0, 40)))
        trace = ccr_relabel(scores, params)
        interim = (scores >= params.threshold).astype(int)
        for i in range(len(scores)):
            flag = interim[max(0, i - win):i].sum()
            assert trace.flags[i] == flag
            if i < win:
                expected = interim[i]
            elif flag == 0:
                expected = 0
            elif flag > win / 2:
                expected = 1
            else:
                expected = interim[i]
            assert trace.labels[i] == expected


def test_auroc_matches_pair_counting():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        truth = rng.random(100) < 0.3
        truth[:2] = (True, False)
        scores = np.round(rng.random(100), 2)
        pos, neg = scores[truth][:, None], scores[~truth][None, :]
        pairs = (pos > neg).sum() + 0.5 * (pos == neg).sum()
        assert abs(auroc(scores, truth.astype(int)) - pairs / (pos.size * neg.size)) <= 1e-9


def test_rus_preserves_category_shares(small_cohort):
    dataset = small_cohort.dataset
    normal = dataset.categories[dataset.normal_mask]
    categories = np.unique(normal)
    source = np.array([np.mean(normal == c) for c in categories])
    shares = []
    for seed in range(50):
        rebuilt = rus(dataset, 0.2, seed).dataset
        kept = rebuilt.categories[rebuilt.normal_mask]
        shares.append([np.mean(kept == c) for c in categories])
    np.testing.assert_allclose(np.mean(shares, axis=0), source, atol=0.03)


def test_iqr_fence_on_gaussian_scores():
    scores = np.random.default_rng(0).normal(size=10000)
    assert aef_iqr_filter(scores, 1.5).mean() >= 0.99
    kept = [set(np.flatnonzero(aef_iqr_filter(scores, k))) for k in TABLE_K]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
    assert iqr_fence(scores, 1.5).iqr == pytest.approx(1.349, abs=0.05)


# ---------------------------------------------------------------------------
# Cohort-scale reproductions
# ---------------------------------------------------------------------------

SEEDS = tuple(range(5))
REDUCED_GRID = HyperGrid((30,), (7,))


def _cv(dataset, spec, plan, **kwargs):
    return run_cv_experiment(dataset, spec, REDUCED_GRID, seeds2=SEEDS, plan=plan, n_jobs=-1, **kwargs)


@pytest.fixture(scope='module')
def default_cohort():
    return build_cohort_dataset(CohortConfig(), n_jobs=-1)


@pytest.mark.slow
def test_undersampling_and_ccr_on_the_default_cohort(default_cohort):
    dataset = default_cohort.dataset
    plan = make_folds(dataset, 2, seed=0)
    baseline = _cv(dataset, StrategySpec('none'), plan)
    proportions = (0.2, 0.4, 0.6, 0.8, 1.0)
    runs = {p: _cv(dataset, StrategySpec('rus', proportion=p), plan) for p in proportions}

    assert runs[0.2].mean_auroc >= baseline.mean_auroc - 0.02
    assert runs[0.2].mean_training_ms <= 0.4 * baseline.mean_training_ms
    fit = linear_fit(proportions, [runs[p].mean_training_ms for p in proportions])
    assert fit.r_squared >= 0.9

    codes, _ = dataset.group_codes()
    best_original, best_ccr = [], []
    for seed in SEEDS:
        sweep = sweep_thresholds(runs[0.2].test_scores[seed], dataset.labels, day_codes=codes,
                                 minutes=dataset.minute_index)
        best_original.append(sweep.best_original.f1_orig)
        best_ccr.append(sweep.best_ccr.f1_ccr)
        if sweep.best_ccr.f1_ccr > sweep.best_original.f1_orig:
            found = effective_threshold_range(sweep)
            assert not found.is_empty
            assert found.contains(sweep.best_ccr.threshold)
    assert np.mean(best_ccr) >= 1.05 * np.mean(best_original)


@pytest.mark.slow
def test_wrus_tolerates_boundary_jitter():
    cohort = build_cohort_dataset(replace(CohortConfig(), jitter_max_shift=4), n_jobs=-1)
    dataset = cohort.dataset
    truth = label_windows(dataset, cohort.truth)
    plan = make_folds(dataset, 2, seed=0)
    wins, gaps = 0, []
    for p in (0.3, 0.4, 0.5, 0.6, 0.7):
        weighted = _cv(dataset, StrategySpec('wrus', proportion=p), plan, truth_labels=truth).mean_auroc
        uniform = _cv(dataset, StrategySpec('rus', proportion=p), plan, truth_labels=truth).mean_auroc
        gaps.append(weighted - uniform)
        wins += weighted >= uniform
    assert np.mean(gaps) >= -0.005
    assert wins >= 3
