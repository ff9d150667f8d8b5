"""
Classification metrics: confusion counts, precision / recall / F1, AUROC and a
least-squares line fit for timing curves.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from agitationlab.errors import DataError


class MetricError(DataError):
    """Metric inputs are misaligned or degenerate"""
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return precision_recall_f1(self)[0]

    @property
    def recall(self) -> float:
        return precision_recall_f1(self)[1]

    @property
    def f1(self) -> float:
        return precision_recall_f1(self)[2]

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else 0.0

    @property
    def npv(self) -> float:
        return self.tn / (self.tn + self.fn) if self.tn + self.fn else 0.0

    def to_dict(self):
        info = asdict(self)
        info.update(
            precision=self.precision,
            recall=self.recall,
            f1=self.f1,
            accuracy=self.accuracy,
            specificity=self.specificity,
            npv=self.npv,
        )
        return info


def _binary(values, what):
    values = np.asarray(values)
    if values.dtype == bool:
        return values
    if not np.all(np.isin(values, (0, 1))):
        raise MetricError(f"{what} must contain only 0 and 1")
    return values.astype(bool)


def confusion(pred, truth) -> ConfusionMatrix:
    pred = _binary(pred, "Predictions")
    truth = _binary(truth, "Truth labels")
    if pred.shape != truth.shape:
        raise MetricError(f"Predictions ({pred.size}) and truth ({truth.size}) differ in length")
    return ConfusionMatrix(
        tp=int(np.count_nonzero(pred & truth)),
        fp=int(np.count_nonzero(pred & ~truth)),
        fn=int(np.count_nonzero(~pred & truth)),
        tn=int(np.count_nonzero(~pred & ~truth)),
    )


def precision_recall_f1(m: ConfusionMatrix):
    """(P, R, F1), each 0 when its denominator is 0"""
    precision = m.tp / (m.tp + m.fp) if m.tp + m.fp else 0.0
    recall = m.tp / (m.tp + m.fn) if m.tp + m.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def auroc(scores, truth) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic: the share of
    (agitation, normal) pairs ranked correctly, tied pairs counting one half.
    """
    scores = np.asarray(scores, dtype=float)
    truth = _binary(truth, "Truth labels")
    if scores.shape != truth.shape:
        raise MetricError(f"Scores ({scores.size}) and truth ({truth.size}) differ in length")
    n_pos = int(np.count_nonzero(truth))
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both classes in the truth labels")
    ranks = stats.rankdata(scores, method='average')
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self):
        return asdict(self)


def linear_fit(x, y) -> LinearFit:
    """Least-squares line y = slope * x + intercept"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise MetricError("A line fit needs at least two aligned points")
    if np.all(x == x[0]):
        raise MetricError("A line fit needs at least two distinct x values")
    result = stats.linregress(x, y)
    return LinearFit(slope=float(result.slope), intercept=float(result.intercept), r_squared=float(result.rvalue ** 2))
