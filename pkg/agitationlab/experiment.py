"""
Cross-validation driver comparing undersampling strategies.

For every outer fold and sampling seed: rebuild the training fold with the
strategy, tune the forest on it by internal two-fold CV, train it, and score
the untouched test fold. The fold plan comes from one seed (seed1) so every
strategy sees identical partitions; the sampling seeds (seeds2) repeat the
randomized parts.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from agitationlab.autoenc import AeTrainConfig, train_autoencoder
from agitationlab.core import make_folds
from agitationlab.errors import UsageError
from agitationlab.forest import CostSpec, HyperGrid, predict_scores, train_rfc, tune_hyperparams
from agitationlab.metrics import ConfusionMatrix, auroc, confusion
from agitationlab.models import LabeledDataset, SplitPlan, Strategy
from agitationlab.resample import WrusParams, aef_iqr, no_resampling, rus, wrus

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StrategySpec:
    """Strategy plus the one parameter that varies across a batch (proportion or k)"""
    strategy: Strategy
    proportion: float = 1.0
    k: Optional[float] = None
    wrus_params: WrusParams = field(default_factory=WrusParams)
    ae_config: AeTrainConfig = field(default_factory=AeTrainConfig)

    def __post_init__(self):
        object.__setattr__(self, 'strategy', Strategy(self.strategy))
        if self.strategy is Strategy.NONE and self.proportion != 1.0:
            raise UsageError("Strategy none always uses proportion 1")
        if self.strategy in (Strategy.RUS, Strategy.WRUS) and not 0 < self.proportion <= 1:
            raise UsageError(f"proportion must lie in (0, 1], got {self.proportion}")
        if self.strategy is Strategy.AEF_IQR:
            if self.k is None or self.k < 0:
                raise UsageError("aef_iqr needs k >= 0")
        elif self.k is not None:
            raise UsageError("k only applies to aef_iqr")

    @property
    def param_text(self) -> str:
        if self.strategy is Strategy.AEF_IQR:
            return f"k{self.k:g}"
        return f"p{self.proportion:g}"

    @property
    def label(self) -> str:
        """File-name friendly identifier, e.g. 'rus_p0.2' or 'aef_iqr_k1.5'"""
        return f"{self.strategy.value}_{self.param_text}"

    def to_dict(self):
        info = {'strategy': self.strategy.value, 'proportion': self.proportion}
        if self.strategy is Strategy.AEF_IQR:
            info['k'] = self.k
            info['autoencoder'] = {
                'epochs': self.ae_config.epochs,
                'learning_rate': self.ae_config.learning_rate,
                'batch_size': self.ae_config.batch_size,
                'activation': self.ae_config.activation,
            }
        if self.strategy is Strategy.WRUS:
            info['wrus'] = self.wrus_params.to_dict()
        return info


@dataclass(frozen=True)
class MetricReport:
    """Outcome of one (outer fold, sampling seed) run"""
    fold: int
    seed: int
    strategy: str
    proportion: float
    k: Optional[float]
    auroc: float
    threshold: float
    confusion: ConfusionMatrix
    n_train_source: int
    n_train_rebuilt: int
    retained_normal_count: int
    agitation_count: int
    n_test: int
    n_trees: int
    n_predictors: int
    cost_fn: float
    tuning_auroc: float
    training_ms: float = 0.0
    tuning_ms: float = 0.0
    resample_ms: float = 0.0

    def to_dict(self):
        return {
            'fold': self.fold,
            'seed': self.seed,
            'strategy': self.strategy,
            'proportion': self.proportion,
            'k': self.k,
            'auroc': self.auroc,
            'threshold': self.threshold,
            'confusion': self.confusion.to_dict(),
            'n_train_source': self.n_train_source,
            'n_train_rebuilt': self.n_train_rebuilt,
            'retained_normal_count': self.retained_normal_count,
            'agitation_count': self.agitation_count,
            'n_test': self.n_test,
            'n_trees': self.n_trees,
            'n_predictors': self.n_predictors,
            'cost_fn': self.cost_fn,
            'tuning_auroc': self.tuning_auroc,
        }

    def timing(self):
        return {
            'fold': self.fold,
            'seed': self.seed,
            'training_ms': self.training_ms,
            'tuning_ms': self.tuning_ms,
            'resample_ms': self.resample_ms,
            'n_train_rebuilt': self.n_train_rebuilt,
        }


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    spec: StrategySpec
    reports: tuple
    seed1: int
    seeds2: tuple
    n_folds: int
    threshold: float
    test_scores: dict = field(default_factory=dict)

    @property
    def auroc_values(self):
        return [report.auroc for report in self.reports]

    @property
    def mean_auroc(self) -> float:
        return float(np.mean(self.auroc_values))

    def seed_mean_aurocs(self):
        """Mean over folds for every sampling seed, in seed order"""
        return {seed: float(np.mean([r.auroc for r in self.reports if r.seed == seed])) for seed in self.seeds2}

    @property
    def mean_training_ms(self) -> float:
        return float(np.mean([report.training_ms for report in self.reports]))

    @property
    def mean_proportion(self) -> float:
        return float(np.mean([report.proportion for report in self.reports]))

    def to_dict(self):
        """Deterministic part of the result; timings are kept apart in timing()"""
        return {
            'spec': self.spec.to_dict(),
            'seed1': self.seed1,
            'seeds2': list(self.seeds2),
            'n_folds': self.n_folds,
            'threshold': self.threshold,
            'mean_auroc': self.mean_auroc,
            'seed_mean_auroc': {str(seed): value for seed, value in self.seed_mean_aurocs().items()},
            'mean_proportion': self.mean_proportion,
            'folds': [report.to_dict() for report in self.reports],
        }

    def timing(self):
        return {
            'spec': self.spec.to_dict(),
            'mean_training_ms': self.mean_training_ms,
            'mean_tuning_ms': float(np.mean([r.tuning_ms for r in self.reports])),
            'folds': [report.timing() for report in self.reports],
        }


def rebuild_training_set(train: LabeledDataset, spec: StrategySpec, seed: int, autoencoder=None):
    if spec.strategy is Strategy.NONE:
        return no_resampling(train, seed)
    if spec.strategy is Strategy.RUS:
        return rus(train, spec.proportion, seed)
    if spec.strategy is Strategy.WRUS:
        return wrus(train, train.annotations, spec.proportion, spec.wrus_params, seed)
    return aef_iqr(train, spec.k, spec.ae_config, seed, model=autoencoder)


def run_cv_experiment(dataset: LabeledDataset, spec: StrategySpec, grid: HyperGrid = HyperGrid(),
                      costs: CostSpec = CostSpec(), seed1: int = 0, seeds2=(0,), n_folds: int = 2,
                      plan: Optional[SplitPlan] = None, threshold: float = 0.5, truth_labels=None,
                      n_jobs: int = 1, ae_cache: Optional[dict] = None) -> ExperimentResult:
    """
    Run the outer cross-validation for one strategy.

    Args:
        dataset: labelled windows with their annotations
        spec: strategy and its parameter
        grid: tuning grid
        costs: class costs
        seed1: fold seed (ignored when `plan` is given)
        seeds2: sampling seeds; every fold is repeated once per seed
        n_folds: outer folds
        plan: a precomputed fold plan, so several strategies share partitions
        threshold: decision threshold for the reported confusion matrix
        truth_labels: labels to evaluate against instead of dataset.labels
        n_jobs: workers for forest growing
        ae_cache: dict reused across calls; holds the autoencoder of each (fold, seed)

    Returns:
        ExperimentResult: one MetricReport per (fold, seed) plus pooled test scores per seed
    """
    seeds2 = tuple(int(seed) for seed in seeds2)
    if not seeds2:
        raise UsageError("At least one sampling seed is needed")
    plan = plan or make_folds(dataset, n_folds, seed1)
    folds = plan.fold_indices(dataset)
    truth = dataset.labels if truth_labels is None else np.asarray(truth_labels)
    if truth.shape != dataset.labels.shape:
        raise UsageError("truth_labels must have one label per dataset row")

    reports = []
    test_scores = {}
    for seed in seeds2:
        pooled = np.full(len(dataset), np.nan)
        for fold in range(plan.n_folds):
            train = dataset.subset(folds != fold)
            test_rows = np.flatnonzero(folds == fold)

            started = time.perf_counter()
            autoencoder = None
            if spec.strategy is Strategy.AEF_IQR and ae_cache is not None:
                key = (fold, seed)
                if key not in ae_cache:
                    ae_cache[key] = train_autoencoder(
                        train.features[train.normal_mask], replace(spec.ae_config, seed=seed)
                    )
                autoencoder = ae_cache[key]
            rebuilt = rebuild_training_set(train, spec, seed, autoencoder)
            resample_ms = (time.perf_counter() - started) * 1000.0

            tuned = tune_hyperparams(rebuilt, grid, costs, seed, n_jobs)
            model = train_rfc(rebuilt, tuned.n_trees, tuned.n_predictors, costs, seed, n_jobs)
            scores = predict_scores(model, dataset.features[test_rows])
            pooled[test_rows] = scores

            fold_truth = truth[test_rows]
            report = MetricReport(
                fold=fold,
                seed=seed,
                strategy=spec.strategy.value,
                proportion=rebuilt.proportion,
                k=spec.k,
                auroc=auroc(scores, fold_truth),
                threshold=threshold,
                confusion=confusion(scores >= threshold, fold_truth),
                n_train_source=len(train),
                n_train_rebuilt=len(rebuilt),
                retained_normal_count=rebuilt.retained_normal_count,
                agitation_count=rebuilt.agitation_count,
                n_test=len(test_rows),
                n_trees=tuned.n_trees,
                n_predictors=tuned.n_predictors,
                cost_fn=model.cost_fn,
                tuning_auroc=tuned.auroc,
                training_ms=model.training_ms,
                tuning_ms=tuned.tuning_ms,
                resample_ms=resample_ms,
            )
            reports.append(report)
            logger.info(
                f"{spec.label} fold {fold} seed {seed}: AUROC {report.auroc:.4f}, "
                f"{report.n_train_rebuilt} training windows, fit {report.training_ms:.0f} ms"
            )
        test_scores[seed] = pooled

    result = ExperimentResult(
        spec=spec,
        reports=tuple(reports),
        seed1=seed1,
        seeds2=seeds2,
        n_folds=plan.n_folds,
        threshold=threshold,
        test_scores=test_scores,
    )
    logger.info(f"{spec.label}: mean AUROC {result.mean_auroc:.4f} over {len(reports)} runs")
    return result
