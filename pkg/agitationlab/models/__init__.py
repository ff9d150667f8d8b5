"""
Domain records shared by every module
"""

from agitationlab.models.annotation import EpisodeAnnotation, annotations_by_day
from agitationlab.models.instance import FEATURE_COUNT, NORMAL, AGITATION, WindowInstance
from agitationlab.models.dataset import (
    NO_CATEGORY,
    DatasetError,
    LabeledDataset,
    episode_membership,
    rows_by_day,
)
from agitationlab.models.split import SplitPlan
from agitationlab.models.frame import CHANNELS, Channel, SignalFrame
from agitationlab.models.training_set import Strategy, RebuiltTrainingSet
