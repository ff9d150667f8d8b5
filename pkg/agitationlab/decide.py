"""
Turning classifier scores into labels.

Original decision: label 1 iff score >= threshold. Cumulative class re-decision
(CCR) then looks at the interim labels of the previous `win` minutes of the same
participant-day: none positive forces 0, more than half positive forces 1,
anything else keeps the interim label. The first `win` minutes of a day keep
their interim label.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from agitationlab.errors import UsageError
from agitationlab.metrics import confusion, precision_recall_f1

logger = logging.getLogger(__name__)

DEFAULT_WIN = 5
SWEEP_COLUMNS = ['Th', 'P_orig', 'R_orig', 'F1_orig', 'P_ccr', 'R_ccr', 'F1_ccr']


class DecisionError(UsageError):
    """Invalid decision parameters or misaligned inputs"""
    pass


@dataclass(frozen=True)
class CcrParams:
    win: int = DEFAULT_WIN
    threshold: float = 0.5

    def __post_init__(self):
        if int(self.win) != self.win or self.win < 1:
            raise DecisionError(f"win must be a positive integer, got {self.win}")
        if not 0 < self.threshold < 1:
            raise DecisionError(f"threshold must lie in (0, 1), got {self.threshold}")


def default_threshold_grid():
    """0.01, 0.02, ..., 0.99"""
    return tuple(round(i / 100, 2) for i in range(1, 100))


def interim_label(score: float, threshold: float) -> int:
    return int(score >= threshold)


def interim_labels(scores, threshold: float) -> np.ndarray:
    return (np.asarray(scores, dtype=float) >= threshold).astype(np.int8)


@dataclass(frozen=True, eq=False)
class DecisionTrace:
    """Per-window decision steps, aligned with the input scores"""
    scores: np.ndarray
    interim: np.ndarray
    flags: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.scores)


def _ccr_sorted(interim, position, group_start, win):
    """CCR over rows already grouped by day and in time order"""
    csum = np.concatenate([[0], np.cumsum(interim, dtype=np.int64)])
    index = np.arange(len(interim))
    window_start = np.maximum(group_start, index - win)
    flags = csum[index] - csum[window_start]
    labels = np.where(flags == 0, 0, np.where(flags > win / 2, 1, interim)).astype(np.int8)
    warm_up = position < win
    labels[warm_up] = interim[warm_up]
    return flags, labels


def ccr_relabel(scores, params: CcrParams = CcrParams()) -> DecisionTrace:
    """CCR over the chronological scores of a single participant-day"""
    scores = np.asarray(scores, dtype=float).ravel()
    interim = interim_labels(scores, params.threshold)
    position = np.arange(len(scores))
    flags, labels = _ccr_sorted(interim, position, np.zeros(len(scores), dtype=np.int64), params.win)
    return DecisionTrace(scores=scores, interim=interim, flags=flags, labels=labels)


def _day_order(day_codes, minutes=None):
    """Row order grouping days together (time order within a day), each row's position and group start"""
    day_codes = np.asarray(day_codes)
    n = len(day_codes)
    keys = (np.arange(n),) if minutes is None else (np.arange(n), np.asarray(minutes))
    order = np.lexsort(keys + (day_codes,))
    sorted_codes = day_codes[order]
    new_group = np.ones(n, dtype=bool)
    new_group[1:] = sorted_codes[1:] != sorted_codes[:-1]
    group_start = np.maximum.accumulate(np.where(new_group, np.arange(n), 0))
    position = np.arange(n) - group_start
    return order, position, group_start


def ccr_relabel_days(scores, day_codes, params: CcrParams = CcrParams(), minutes=None) -> DecisionTrace:
    """
    CCR applied to every participant-day separately; decision windows never cross days.

    Args:
        scores: one score per window
        day_codes: participant-day identifier per window
        params: window length and threshold
        minutes: minute of each window; when omitted, input order is taken as time order
    """
    scores = np.asarray(scores, dtype=float)
    if len(day_codes) != len(scores) or (minutes is not None and len(minutes) != len(scores)):
        raise DecisionError("Scores, day codes and minutes must be aligned")
    order, position, group_start = _day_order(day_codes, minutes)
    interim = interim_labels(scores, params.threshold)
    flags_sorted, labels_sorted = _ccr_sorted(interim[order], position, group_start, params.win)
    flags = np.empty_like(flags_sorted)
    labels = np.empty_like(labels_sorted)
    flags[order] = flags_sorted
    labels[order] = labels_sorted
    return DecisionTrace(scores=scores, interim=interim, flags=flags, labels=labels)


# ---------------------------------------------------------------------------
# Threshold sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    threshold: float
    precision_orig: float
    recall_orig: float
    f1_orig: float
    precision_ccr: float
    recall_ccr: float
    f1_ccr: float
    f1_baseline: Optional[float] = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    win: int

    @property
    def thresholds(self):
        return np.array([row.threshold for row in self.rows])

    @property
    def best_original(self) -> SweepRow:
        """Row with the highest Original F1 (lowest threshold on ties)"""
        return max(self.rows, key=lambda row: (row.f1_orig, -row.threshold))

    @property
    def best_ccr(self) -> SweepRow:
        return max(self.rows, key=lambda row: (row.f1_ccr, -row.threshold))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [[r.threshold, r.precision_orig, r.recall_orig, r.f1_orig, r.precision_ccr, r.recall_ccr, r.f1_ccr]
             for r in self.rows],
            columns=SWEEP_COLUMNS,
        )
        if any(r.f1_baseline is not None for r in self.rows):
            frame['F1_baseline'] = [r.f1_baseline for r in self.rows]
        return frame


def _check_grid(grid):
    grid = [float(th) for th in grid]
    if not grid:
        raise DecisionError("Threshold grid must not be empty")
    if any(not 0 < th < 1 for th in grid):
        raise DecisionError("Thresholds must lie in (0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DecisionError("Thresholds must be strictly increasing")
    return grid


def sweep_thresholds(scores, truth, grid=None, win: int = DEFAULT_WIN, day_codes=None, minutes=None,
                     baseline_scores=None) -> SweepResult:
    """
    Precision, recall and F1 of the Original and CCR decisions at every threshold.

    Args:
        scores: classifier scores
        truth: true labels
        grid: increasing thresholds in (0, 1), default 0.01..0.99
        win: CCR window length
        day_codes: participant-day of each window (all one day when omitted)
        minutes: minute of each window within its day
        baseline_scores: scores of a reference model, adding an F1_baseline column
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth)
    if truth.shape != scores.shape:
        raise DecisionError(f"Scores ({scores.size}) and truth ({truth.size}) differ in length")
    if baseline_scores is not None and len(baseline_scores) != len(scores):
        raise DecisionError("Baseline scores must be aligned with scores")
    grid = _check_grid(default_threshold_grid() if grid is None else grid)
    day_codes = np.zeros(len(scores), dtype=np.int64) if day_codes is None else np.asarray(day_codes)

    rows = []
    for threshold in grid:
        params = CcrParams(win=win, threshold=threshold)
        trace = ccr_relabel_days(scores, day_codes, params, minutes)
        original = precision_recall_f1(confusion(trace.interim, truth))
        ccr = precision_recall_f1(confusion(trace.labels, truth))
        baseline = None
        if baseline_scores is not None:
            baseline = precision_recall_f1(confusion(interim_labels(baseline_scores, threshold), truth))[2]
        rows.append(SweepRow(threshold, *original, *ccr, f1_baseline=baseline))
    return SweepResult(rows=tuple(rows), win=win)


@dataclass(frozen=True)
class ThresholdRange:
    """
    Longest run of thresholds where CCR beats the best Original F1.

    `runs` lists every run. The CCR argmax may sit in a shorter run than [lo, hi];
    `argmax_run` is the run holding it.
    """
    lo: Optional[float]
    hi: Optional[float]
    runs: tuple = ()
    argmax_run: Optional[tuple] = None

    @property
    def is_empty(self) -> bool:
        return self.lo is None

    def contains(self, threshold: float) -> bool:
        return not self.is_empty and self.lo <= threshold <= self.hi

    def to_dict(self):
        return {
            'lo': self.lo,
            'hi': self.hi,
            'runs': [list(run) for run in self.runs],
            'argmax_run': None if self.argmax_run is None else list(self.argmax_run),
        }


def effective_threshold_range(sweep: SweepResult) -> ThresholdRange:
    peak = max(row.f1_orig for row in sweep.rows)
    runs = []
    start = None
    for i, row in enumerate(sweep.rows):
        if row.f1_ccr > peak:
            start = i if start is None else start
        elif start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(sweep.rows) - 1))
    if not runs:
        return ThresholdRange(None, None, ())
    longest = max(runs, key=lambda run: (run[1] - run[0], -run[0]))
    best = sweep.rows.index(sweep.best_ccr)
    holding = next(run for run in runs if run[0] <= best <= run[1])
    thresholds = [row.threshold for row in sweep.rows]
    return ThresholdRange(
        lo=thresholds[longest[0]],
        hi=thresholds[longest[1]],
        runs=tuple((thresholds[a], thresholds[b]) for a, b in runs),
        argmax_run=(thresholds[holding[0]], thresholds[holding[1]]),
    )
