"""
Assignment of participant-days to cross-validation folds
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitPlan:
    """Maps every (participant_id, day) to a fold index in [0, n_folds)"""
    fold_of: dict
    n_folds: int

    def fold_indices(self, dataset) -> np.ndarray:
        """Fold index of every row of the dataset"""
        return np.array([self.fold_of[key] for key in zip(dataset.participant_ids, dataset.days)], dtype=np.int64)

    def days_in_fold(self, fold: int):
        return sorted(key for key, f in self.fold_of.items() if f == fold)
