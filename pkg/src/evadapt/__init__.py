"""evadapt: adversarial domain adaptation from labeled frames to unlabeled events."""

__version__ = "0.1.0"

from evadapt.augment import AugmentConfig, augment_events, augment_frame, two_view
from evadapt.config import TrainConfig, load_config, save_config
from evadapt.data import DatasetSpec, ToyConfig, generate_toy_dataset, load_dataset
from evadapt.events import EventStream, EventTensor, parse_event_stream, voxelize
from evadapt.frames import FrameTensor, load_frame
from evadapt.losses import LossReport, LossWeights, Toggles
from evadapt.networks import AdaptationModel, ProjectionConfig

__all__ = [
    "AugmentConfig",
    "AdaptationModel",
    "DatasetSpec",
    "EventStream",
    "EventTensor",
    "FrameTensor",
    "LossReport",
    "LossWeights",
    "ProjectionConfig",
    "Toggles",
    "ToyConfig",
    "TrainConfig",
    "augment_events",
    "augment_frame",
    "generate_toy_dataset",
    "load_config",
    "load_dataset",
    "load_frame",
    "parse_event_stream",
    "save_config",
    "two_view",
    "voxelize",
]
