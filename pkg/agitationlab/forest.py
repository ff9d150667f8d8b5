"""
Random forest with class costs (RFC).

Forests are grown with scikit-learn, then exported into plain node arrays so that
scoring and the on-disk format do not depend on pickles or library versions.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.model_selection import StratifiedKFold

from agitationlab.core import FoldError, make_folds
from agitationlab.errors import DataError, UsageError
from agitationlab.metrics import MetricError, auroc
from agitationlab.models import AGITATION, FEATURE_COUNT, NORMAL, LabeledDataset, RebuiltTrainingSet
from agitationlab.utils import atomic_write_json

logger = logging.getLogger(__name__)

DEFAULT_N_TREES = (30, 50, 70, 90, 110)
DEFAULT_N_PREDICTORS = tuple(range(1, 35, 3))
FORMAT_NAME = 'agitationlab-forest'
FORMAT_VERSION = 1
INTERNAL_FOLDS = 2
LEAF = -1


class ForestError(DataError):
    """The forest cannot be trained or used on the given data"""
    pass


@dataclass(frozen=True)
class CostSpec:
    """
    Cost of a missed agitation window relative to a false alarm.

    None means inverse class frequency of the training set.
    """
    cost_fn: Optional[float] = None

    def __post_init__(self):
        if self.cost_fn is not None and not self.cost_fn >= 1:
            raise UsageError(f"cost_fn must be >= 1, got {self.cost_fn}")

    def resolve(self, labels) -> float:
        if self.cost_fn is not None:
            return float(self.cost_fn)
        labels = np.asarray(labels)
        n_agitation = int(np.count_nonzero(labels == AGITATION))
        n_normal = int(np.count_nonzero(labels == NORMAL))
        if n_agitation == 0:
            raise ForestError("Cannot derive class costs without agitation windows")
        return max(1.0, n_normal / n_agitation)


@dataclass(frozen=True)
class HyperGrid:
    n_trees_options: tuple = DEFAULT_N_TREES
    n_predictors_options: tuple = DEFAULT_N_PREDICTORS

    def __post_init__(self):
        object.__setattr__(self, 'n_trees_options', tuple(sorted(set(int(v) for v in self.n_trees_options))))
        object.__setattr__(
            self, 'n_predictors_options', tuple(sorted(set(int(v) for v in self.n_predictors_options)))
        )
        if not self.n_trees_options or not self.n_predictors_options:
            raise UsageError("Hyperparameter grid must not be empty")
        if min(self.n_trees_options) < 1 or min(self.n_predictors_options) < 1:
            raise UsageError("Grid entries must be >= 1")
        if max(self.n_predictors_options) > FEATURE_COUNT:
            raise UsageError(f"n_predictors must be <= {FEATURE_COUNT}")

    def cells(self):
        """(n_trees, n_predictors) pairs, fewer trees first, then fewer predictors"""
        return list(product(self.n_trees_options, self.n_predictors_options))


@dataclass(frozen=True, eq=False)
class TreeArrays:
    """One decision tree as parallel node arrays; leaves have feature == -1"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'feature', np.asarray(self.feature, dtype=np.int64))
        object.__setattr__(self, 'threshold', np.asarray(self.threshold, dtype=float))
        object.__setattr__(self, 'left', np.asarray(self.left, dtype=np.int64))
        object.__setattr__(self, 'right', np.asarray(self.right, dtype=np.int64))
        object.__setattr__(self, 'value', np.asarray(self.value, dtype=float))
        n = len(self.feature)
        if n == 0 or any(len(a) != n for a in (self.threshold, self.left, self.right, self.value)):
            raise ForestError("Tree arrays must be nonempty and of equal length")
        internal = self.feature != LEAF
        if np.any(self.feature[internal] >= FEATURE_COUNT) or np.any(self.feature[internal] < 0):
            raise ForestError(f"Split feature index out of range [0, {FEATURE_COUNT})")
        children = np.concatenate([self.left[internal], self.right[internal]])
        if np.any(children <= 0) or np.any(children >= n):
            raise ForestError("Tree child index out of range")

    @classmethod
    def from_sklearn(cls, estimator):
        tree = estimator.tree_
        value = tree.value[:, 0, :]
        totals = value.sum(axis=1)
        return cls(
            feature=np.where(tree.children_left == -1, LEAF, tree.feature),
            threshold=np.where(tree.children_left == -1, 0.0, tree.threshold),
            left=tree.children_left,
            right=tree.children_right,
            value=np.divide(value[:, 1], totals, out=np.zeros_like(totals), where=totals > 0),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x32) -> np.ndarray:
        """Class-1 fraction of the leaf each row lands in; `x32` must already be float32"""
        node = np.zeros(len(x32), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            current = node[active]
            go_left = x32[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] != LEAF]
        return self.value[node]

    def to_dict(self):
        return {
            'feature': self.feature, 'threshold': self.threshold,
            'left': self.left, 'right': self.right, 'value': self.value,
        }

    def __eq__(self, other):
        if not isinstance(other, TreeArrays):
            return NotImplemented
        return all(np.array_equal(getattr(self, name), getattr(other, name))
                   for name in ('feature', 'threshold', 'left', 'right', 'value'))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    n_predictors: int
    cost_fn: float
    seed: int
    n_features: int = FEATURE_COUNT
    provenance: dict = field(default_factory=dict)
    training_ms: float = 0.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def same_trees(self, other) -> bool:
        return self.n_trees == other.n_trees and all(a == b for a, b in zip(self.trees, other.trees))


def _check_training_data(x, y, n_predictors):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ForestError(f"Feature matrix {x.shape} does not match {y.shape[0]} labels")
    if set(np.unique(y)) != {NORMAL, AGITATION}:
        raise ForestError("Training set must contain both normal and agitation windows")
    if not 1 <= n_predictors <= x.shape[1]:
        raise ForestError(f"n_predictors must lie in [1, {x.shape[1]}], got {n_predictors}")
    return x, y


def _grow(x, y, n_trees, n_predictors, cost_fn, seed, n_jobs):
    forest = RandomForestClassifier(
        n_estimators=n_trees,
        criterion='gini',
        max_features=n_predictors,
        max_depth=None,
        min_samples_leaf=1,
        bootstrap=True,
        class_weight={NORMAL: 1.0, AGITATION: float(cost_fn)},
        random_state=seed,
        n_jobs=n_jobs,
    )
    forest.fit(x, y)
    return tuple(TreeArrays.from_sklearn(estimator) for estimator in forest.estimators_)


def fit_forest(x, y, n_trees: int, n_predictors: int, cost_fn: float, seed: int, n_jobs: int = 1,
               provenance: Optional[dict] = None) -> ForestModel:
    """Grow `n_trees` cost-weighted trees on raw arrays; the result does not depend on n_jobs"""
    if n_trees < 1:
        raise ForestError(f"n_trees must be >= 1, got {n_trees}")
    x, y = _check_training_data(x, y, n_predictors)
    started = time.perf_counter()
    trees = _grow(x, y, n_trees, n_predictors, cost_fn, seed, n_jobs)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return ForestModel(
        trees=trees,
        n_predictors=n_predictors,
        cost_fn=float(cost_fn),
        seed=seed,
        n_features=x.shape[1],
        provenance=dict(provenance or {}),
        training_ms=elapsed_ms,
    )


def _dataset_of(train):
    return train.dataset if isinstance(train, RebuiltTrainingSet) else train


def train_rfc(train, n_trees: int, n_predictors: int, costs: CostSpec = CostSpec(), seed: int = 0,
              n_jobs: int = 1) -> ForestModel:
    """Train the RFC on a rebuilt training set (or a plain dataset)"""
    dataset = _dataset_of(train)
    cost_fn = costs.resolve(dataset.labels)
    provenance = train.provenance() if isinstance(train, RebuiltTrainingSet) else {}
    model = fit_forest(dataset.features, dataset.labels, n_trees, n_predictors, cost_fn, seed, n_jobs, provenance)
    logger.info(
        f"Trained RFC ({n_trees} trees, {n_predictors} predictors, cost_fn={cost_fn:.3g}) "
        f"on {len(dataset)} windows in {model.training_ms:.0f} ms"
    )
    return model


def _tree_scores(trees, x):
    x32 = np.asarray(x, dtype=np.float32)
    return np.vstack([tree.predict(x32) for tree in trees])


def predict_scores(model: ForestModel, features) -> np.ndarray:
    """Mean over trees of the leaf agitation fraction, one score in [0, 1] per row"""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ForestError(f"Expected rows of {model.n_features} features, got shape {x.shape}")
    if len(x) == 0:
        return np.empty(0)
    return _tree_scores(model.trees, x).mean(axis=0)


def predict_score(model: ForestModel, instance) -> float:
    instance = np.asarray(instance, dtype=float)
    if instance.shape != (model.n_features,):
        raise ForestError(f"Instance must have {model.n_features} features, got shape {instance.shape}")
    return float(predict_scores(model, instance[None, :])[0])


# ---------------------------------------------------------------------------
# Hyperparameter tuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TuneResult:
    n_trees: int
    n_predictors: int
    auroc: float
    table: tuple
    tuning_ms: float = 0.0

    def to_dict(self):
        return {
            'n_trees': self.n_trees,
            'n_predictors': self.n_predictors,
            'auroc': self.auroc,
            'table': [{'n_trees': t, 'n_predictors': p, 'auroc': a} for t, p, a in self.table],
        }


def internal_folds(dataset: LabeledDataset, seed: int) -> np.ndarray:
    """
    Two-fold split of a training set: by participant-day when possible,
    otherwise stratified over individual windows.
    """
    agitation_days = {key for key, count in dataset.agitation_minutes_by_day().items() if count > 0}
    if len(agitation_days) >= INTERNAL_FOLDS:
        try:
            return make_folds(dataset, INTERNAL_FOLDS, seed).fold_indices(dataset)
        except FoldError as e:
            logger.debug(f"Day-level internal split not possible ({e}); splitting windows instead")
    labels = dataset.labels
    if min(np.count_nonzero(labels == NORMAL), np.count_nonzero(labels == AGITATION)) < INTERNAL_FOLDS:
        raise ForestError("Internal two-fold split needs at least two windows of each class")
    folds = np.empty(len(dataset), dtype=np.int64)
    splitter = StratifiedKFold(n_splits=INTERNAL_FOLDS, shuffle=True, random_state=seed)
    for fold, (_, test) in enumerate(splitter.split(dataset.features, labels)):
        folds[test] = fold
    return folds


def tune_hyperparams(train, grid: HyperGrid = HyperGrid(), costs: CostSpec = CostSpec(), seed: int = 0,
                     n_jobs: int = 1) -> TuneResult:
    """
    Pick (n_trees, n_predictors) by internal two-fold AUROC.

    Ties go to fewer trees, then fewer predictors. For each predictor count one
    forest of the largest tree count is grown per fold: the first k trees of a
    forest equal the k-tree forest grown from the same seed, so every tree count
    of the grid is scored from prefixes of it.
    """
    started = time.perf_counter()
    dataset = _dataset_of(train)
    folds = internal_folds(dataset, seed)
    max_trees = max(grid.n_trees_options)
    aurocs = {cell: [] for cell in grid.cells()}

    for fold in range(INTERNAL_FOLDS):
        fit_rows, eval_rows = folds != fold, folds == fold
        y_fit, y_eval = dataset.labels[fit_rows], dataset.labels[eval_rows]
        if len(np.unique(y_fit)) < 2 or len(np.unique(y_eval)) < 2:
            raise ForestError(f"Internal fold {fold} lacks one of the classes")
        cost_fn = costs.resolve(y_fit)
        for n_predictors in grid.n_predictors_options:
            x_fit, _ = _check_training_data(dataset.features[fit_rows], y_fit, n_predictors)
            trees = _grow(x_fit, y_fit, max_trees, n_predictors, cost_fn, seed, n_jobs)
            running = np.cumsum(_tree_scores(trees, dataset.features[eval_rows]), axis=0)
            for n_trees in grid.n_trees_options:
                try:
                    aurocs[(n_trees, n_predictors)].append(auroc(running[n_trees - 1] / n_trees, y_eval))
                except MetricError as e:
                    raise ForestError(f"Internal fold {fold}: {e}")

    table = tuple((t, p, float(np.mean(aurocs[(t, p)]))) for t, p in grid.cells())
    best = table[0]
    for row in table[1:]:
        if row[2] > best[2]:
            best = row
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    logger.info(f"Tuned RFC: {best[0]} trees, {best[1]} predictors (internal AUROC {best[2]:.4f})")
    return TuneResult(n_trees=best[0], n_predictors=best[1], auroc=best[2], table=table, tuning_ms=elapsed_ms)


# ---------------------------------------------------------------------------
# Forest files
# ---------------------------------------------------------------------------

def save_forest(model: ForestModel, path):
    atomic_write_json(path, {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'n_features': model.n_features,
        'n_predictors': model.n_predictors,
        'cost_fn': model.cost_fn,
        'seed': model.seed,
        'provenance': model.provenance,
        'trees': [tree.to_dict() for tree in model.trees],
    })


def load_forest(path) -> ForestModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ForestError(f"Cannot read forest file {path}: {e}")
    if data.get('format') != FORMAT_NAME or data.get('version') != FORMAT_VERSION:
        raise ForestError(f"{path} is not a version {FORMAT_VERSION} forest file")
    return ForestModel(
        trees=tuple(TreeArrays(**tree) for tree in data['trees']),
        n_predictors=data['n_predictors'],
        cost_fn=data['cost_fn'],
        seed=data['seed'],
        n_features=data['n_features'],
        provenance=data.get('provenance', {}),
    )
