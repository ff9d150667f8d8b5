"""
Undersampling strategies that rebuild a training fold before the classifier sees it.

Every strategy keeps all agitation windows and only decides which normal windows
stay:
  - rus: uniform random selection of a fixed proportion
  - wrus: weighted selection where normals close to an annotated episode are
    unlikely to be picked
  - aef_iqr: normals whose autoencoder score falls outside an IQR fence are dropped
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from agitationlab.autoenc import AeTrainConfig, AutoencoderModel, reconstruction_scores, train_autoencoder
from agitationlab.core import min_time_gaps, save_dataset
from agitationlab.errors import UsageError
from agitationlab.models import LabeledDataset, RebuiltTrainingSet, Strategy
from agitationlab.utils import atomic_write_json, round_half_up

logger = logging.getLogger(__name__)

# Weights below this are raised to it so every normal stays selectable
WEIGHT_FLOOR = 1e-12
MIN_FENCE_SCORES = 4


class ResampleError(UsageError):
    """Invalid resampling request"""
    pass


class SamplingError(ResampleError):
    """Weighted sampling cannot draw the requested number of items"""
    pass


@dataclass(frozen=True)
class WrusParams:
    """Shape of the deformed sigmoid weighting normals by their distance to an episode"""
    lambda1: float = 1.5
    lambda2: float = 1.2
    pivot_minutes: float = 10.0

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ResampleError(f"lambda1 must be > 0, got {self.lambda1}")

    def to_dict(self):
        return {'lambda1': self.lambda1, 'lambda2': self.lambda2, 'pivot_minutes': self.pivot_minutes}


@dataclass(frozen=True)
class IqrFence:
    """Tukey fence (q1 - k*iqr, q3 + k*iqr); scores on the fence itself are outside"""
    q1: float
    q3: float
    k: float

    def __post_init__(self):
        if self.k < 0:
            raise ResampleError(f"k must be >= 0, got {self.k}")
        if self.q1 > self.q3:
            raise ResampleError(f"q1 ({self.q1}) must not exceed q3 ({self.q3})")

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    @property
    def lower(self) -> float:
        return self.q1 - self.k * self.iqr

    @property
    def upper(self) -> float:
        return self.q3 + self.k * self.iqr

    def contains(self, scores):
        scores = np.asarray(scores, dtype=float)
        return (scores > self.lower) & (scores < self.upper)


def _check_proportion(proportion):
    if not 0 < proportion <= 1:
        raise ResampleError(f"proportion must lie in (0, 1], got {proportion}")


def retained_count(n_normal: int, proportion: float) -> int:
    return round_half_up(proportion * n_normal)


def _rebuilt(train, normal_rows, strategy, proportion, seed, **provenance):
    keep = np.sort(np.concatenate([normal_rows, np.flatnonzero(train.agitation_mask)]))
    rebuilt = RebuiltTrainingSet(
        dataset=train.subset(keep),
        strategy=strategy,
        proportion=proportion,
        seed=seed,
        source_normal_count=train.n_normal,
        **provenance,
    )
    logger.info(
        f"{strategy.value}: kept {rebuilt.retained_normal_count} of {train.n_normal} normal windows "
        f"and {rebuilt.agitation_count} agitation windows"
    )
    return rebuilt


def no_resampling(train: LabeledDataset, seed: int = 0) -> RebuiltTrainingSet:
    """The training fold unchanged, recorded as strategy none"""
    return _rebuilt(train, np.flatnonzero(train.normal_mask), Strategy.NONE, 1.0, seed)


def rus(train: LabeledDataset, proportion: float, seed: int) -> RebuiltTrainingSet:
    """Random undersampling: a uniform sample of round(proportion x normals) normal windows"""
    _check_proportion(proportion)
    normal_rows = np.flatnonzero(train.normal_mask)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(normal_rows, retained_count(normal_rows.size, proportion), replace=False)
    return _rebuilt(train, chosen, Strategy.RUS, proportion, seed)


def wrus_weight(gap_minutes, params: WrusParams = WrusParams()):
    """Selection weight of a normal window `gap_minutes` away from the nearest episode (inf for none)"""
    gap = np.asarray(gap_minutes, dtype=float)
    with np.errstate(over='ignore'):
        weight = 1.0 / (1.0 + (np.e / params.lambda1) ** (params.lambda2 * (params.pivot_minutes - gap)))
    return np.maximum(weight, WEIGHT_FLOOR)


def wrus_weights(train: LabeledDataset, annotations=None, params: WrusParams = WrusParams()) -> np.ndarray:
    """Weight of every normal window of `train`, in dataset order"""
    gaps = min_time_gaps(train, train.annotations if annotations is None else annotations)
    return wrus_weight(gaps[train.normal_mask], params)


def weighted_sample_without_replacement(items, weights, m: int, seed: int):
    """
    Draw `m` items one after another, each with probability proportional to its
    weight among the items not yet drawn.

    Items with weight 0 are never drawn.

    Returns:
        np.ndarray: the selected items in draw order
    """
    items = np.asarray(items)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(items),):
        raise SamplingError(f"Got {len(weights)} weights for {len(items)} items")
    if np.any(~np.isfinite(weights)) or np.any(weights < 0):
        raise SamplingError("Weights must be finite and non-negative")
    if m < 0:
        raise SamplingError(f"Cannot draw {m} items")
    positive = np.flatnonzero(weights > 0)
    if m > positive.size:
        raise SamplingError(f"Cannot draw {m} items: only {positive.size} have a positive weight")
    rng = np.random.default_rng(seed)
    p = weights[positive] / weights[positive].sum()
    return items[positive[rng.choice(positive.size, m, replace=False, p=p)]]


def wrus(train: LabeledDataset, annotations=None, proportion: float = 1.0,
         params: WrusParams = WrusParams(), seed: int = 0) -> RebuiltTrainingSet:
    """Weighted random undersampling: like rus, but normals near an episode are rarely kept"""
    _check_proportion(proportion)
    normal_rows = np.flatnonzero(train.normal_mask)
    weights = wrus_weights(train, annotations, params)
    chosen = weighted_sample_without_replacement(
        normal_rows, weights, retained_count(normal_rows.size, proportion), seed
    )
    return _rebuilt(train, chosen, Strategy.WRUS, proportion, seed, wrus_params=params.to_dict())


def iqr_fence(scores, k: float) -> IqrFence:
    """Fence from the quartiles of `scores` (linear interpolation at p*(n-1))"""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size < MIN_FENCE_SCORES:
        raise ResampleError(f"An IQR fence needs at least {MIN_FENCE_SCORES} scores, got {scores.size}")
    if not np.all(np.isfinite(scores)):
        raise ResampleError("Scores must be finite")
    q1, q3 = np.quantile(scores, [0.25, 0.75], method='linear')
    return IqrFence(float(q1), float(q3), float(k))


def aef_iqr_filter(scores, k: float) -> np.ndarray:
    """Boolean mask of scores strictly inside their own k-fence"""
    return iqr_fence(scores, k).contains(scores)


def aef_iqr(train: LabeledDataset, k: float, ae_config: AeTrainConfig = AeTrainConfig(), seed: int = 0,
            model: Optional[AutoencoderModel] = None) -> RebuiltTrainingSet:
    """
    Autoencoder filtering: keep the normals whose reconstruction score lies inside the k-fence.

    Args:
        train: training fold
        k: fence width in interquartile ranges
        ae_config: autoencoder settings; its seed is replaced by `seed`
        seed: autoencoder seed
        model: an autoencoder already trained on this fold's normals, reused as is

    Returns:
        RebuiltTrainingSet: proportion is the realized retained share of normals
    """
    if train.n_normal == 0 or train.n_agitation == 0:
        raise ResampleError("aef_iqr needs both normal and agitation windows")
    normal_rows = np.flatnonzero(train.normal_mask)
    if model is None:
        model = train_autoencoder(train.features[normal_rows], replace(ae_config, seed=seed))
    inside = aef_iqr_filter(reconstruction_scores(model, train.features[normal_rows]), k)
    if not inside.any():
        raise ResampleError(f"aef_iqr with k={k} rejected every normal window")
    return _rebuilt(train, normal_rows[inside], Strategy.AEF_IQR, float(inside.mean()), seed, k=k)


def save_training_set(training_set: RebuiltTrainingSet, path):
    """Write the rebuilt set as a dataset file plus `<stem>.provenance.json`"""
    path = Path(path)
    save_dataset(training_set.dataset, path)
    sidecar = path.with_name(f"{path.stem}.provenance.json")
    atomic_write_json(sidecar, training_set.provenance())
    return sidecar
