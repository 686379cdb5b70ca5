"""Training configuration: one flat, sectioned document covering every knob.

Configs round-trip through JSON so each run can write its fully-resolved
configuration next to its outputs.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from evadapt.augment import AugmentConfig
from evadapt.data.loaders import DatasetSpec
from evadapt.errors import ConfigError
from evadapt.losses import LossWeights, Toggles
from evadapt.networks import ProjectionConfig


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "radam"  # rectified adaptive-moment updates
    beta1: float = 0.0
    beta2: float = 0.999
    lr: float = 1e-4
    lr_decay: float = 0.95  # multiplied into lr after every epoch
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind != "radam":
            raise ConfigError(f"unsupported optimizer kind '{self.kind}'")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ConfigError(f"lr decay must lie in (0, 1], got {self.lr_decay}")


@dataclass(frozen=True)
class TrainConfig:
    data: DatasetSpec = field(
        default_factory=lambda: DatasetSpec(kind="toy", root="data/toy")
    )
    resolution: int = 32
    event_bins: int = 5
    event_normalization: str = "unit_max"
    frame_batch: int = 25
    event_batch: int = 25
    epochs: int = 30
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    toggles: Toggles = field(default_factory=Toggles)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    frame_aug: Optional[AugmentConfig] = None
    event_aug: Optional[AugmentConfig] = None
    stem_kernel: int = 3
    stem_stride: int = 2
    grad_clip: float = 0.0
    decoder_edge_threshold: float = 0.05
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint_every: int = 1
    eval_every: int = 1  # epochs between val-set evaluations (0 disables)
    init_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.frame_batch < 1 or self.event_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.event_bins < 1:
            raise ConfigError(f"event bins must be >= 1, got {self.event_bins}")
        if self.data.resolution != self.resolution:
            object.__setattr__(self, "data", replace(self.data, resolution=self.resolution))
        size = (self.resolution, self.resolution)
        if self.frame_aug is None:
            object.__setattr__(self, "frame_aug", AugmentConfig.frame_default(size))
        if self.event_aug is None:
            object.__setattr__(self, "event_aug", AugmentConfig.event_default(size))
        if self.frame_aug.domain != "frame" or self.event_aug.domain != "event":
            raise ConfigError("frame_aug/event_aug domains are swapped")

    @property
    def event_channels(self):
        return 2 * self.event_bins


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

_SECTIONS = {
    "data": ("data", DatasetSpec),
    "optimizer": ("optimizer", OptimizerConfig),
    "loss_weights": ("weights", LossWeights),
    "toggles": ("toggles", Toggles),
    "projection": ("projection", ProjectionConfig),
    "frame_augment": ("frame_aug", AugmentConfig),
    "event_augment": ("event_aug", AugmentConfig),
}

_RUN_FIELDS = (
    "resolution",
    "event_bins",
    "event_normalization",
    "frame_batch",
    "event_batch",
    "epochs",
    "stem_kernel",
    "stem_stride",
    "grad_clip",
    "decoder_edge_threshold",
    "seed",
    "out_dir",
    "checkpoint_every",
    "eval_every",
    "init_checkpoint",
)


def config_to_dict(cfg: TrainConfig) -> dict:
    doc = {"run": {name: getattr(cfg, name) for name in _RUN_FIELDS}}
    for section, (attr, _) in _SECTIONS.items():
        value = getattr(cfg, attr)
        doc[section] = asdict(value) if value is not None else None
    return doc


def _coerce(cls, data: dict):
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown {cls.__name__} field '{key}'")
        # JSON has no tuples; ranges and sizes arrive as lists
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {cls.__name__} section: {exc}") from exc


def config_from_dict(doc: dict) -> TrainConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    kwargs = {}
    run = doc.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("'run' section must be an object")
    for key, value in run.items():
        if key not in _RUN_FIELDS:
            raise ConfigError(f"unknown run field '{key}'")
        kwargs[key] = value
    for section, (attr, cls) in _SECTIONS.items():
        if section in doc and doc[section] is not None:
            kwargs[attr] = _coerce(cls, doc[section])
    unknown = set(doc) - set(_SECTIONS) - {"run"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return TrainConfig(**kwargs)


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def save_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=1, sort_keys=True))
