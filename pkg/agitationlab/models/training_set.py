"""
Training set rebuilt by an undersampling strategy, with its provenance
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from agitationlab.models.dataset import LabeledDataset


class Strategy(str, Enum):
    NONE = 'none'
    RUS = 'rus'
    AEF_IQR = 'aef_iqr'
    WRUS = 'wrus'

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ', '.join(s.value for s in cls)
            raise ValueError(f"Unknown strategy '{value}' (choose from {choices})") from None


@dataclass(frozen=True, eq=False)
class RebuiltTrainingSet:
    """Every agitation window of the source training set plus the retained normal windows"""
    dataset: LabeledDataset
    strategy: Strategy
    proportion: float
    seed: int
    source_normal_count: int
    k: Optional[float] = None
    wrus_params: Optional[dict] = None

    @property
    def instances(self):
        return self.dataset.instances

    @property
    def retained_normal_count(self) -> int:
        return self.dataset.n_normal

    @property
    def agitation_count(self) -> int:
        return self.dataset.n_agitation

    def __len__(self):
        return len(self.dataset)

    def provenance(self) -> dict:
        """Plain-dict description written next to every artifact derived from this set"""
        info = {
            'strategy': self.strategy.value,
            'proportion': self.proportion,
            'seed': self.seed,
            'source_normal_count': self.source_normal_count,
            'retained_normal_count': self.retained_normal_count,
            'agitation_count': self.agitation_count,
        }
        if self.k is not None:
            info['k'] = self.k
        if self.wrus_params is not None:
            info['wrus'] = dict(self.wrus_params)
        return info
