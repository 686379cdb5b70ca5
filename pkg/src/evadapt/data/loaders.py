"""Dataset specs and ingestion into in-memory training sets.

Training-time event sets are unlabeled by construction (a distinct type with
no label field), so target labels cannot leak into adaptation.  Split
membership is a pure function of (sample id, seed): toy sample ids encode
their split directly, the paired real benchmarks hash ids against the split
fractions.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from evadapt.errors import ConfigError, IngestionError, ValidationError
from evadapt.events.io import read_event_file
from evadapt.events.voxel import voxelize
from evadapt.frames import load_frame
from evadapt.seeding import rng_for

KINDS = ("toy", "caltech101_pair", "cifar10_pair")

_KIND_DEFAULTS = {
    # kind: (split fractions, class count, event file format)
    "caltech101_pair": ((0.45, 0.30, 0.25), 101, "ncaltech_bin"),
    "cifar10_pair": ((5 / 6, 0.0, 1 / 6), 10, "aedat"),
    "toy": (None, None, "canonical"),
}

_FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
_EVENT_SUFFIXES = (".evt", ".bin", ".aedat")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    root: str
    split_fractions: Optional[Tuple[float, float, float]] = None
    resolution: int = 32
    class_count: Optional[int] = None
    split_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"dataset kind must be one of {KINDS}, got '{self.kind}'")
        fractions, classes, _ = _KIND_DEFAULTS[self.kind]
        if self.split_fractions is None and fractions is not None:
            object.__setattr__(self, "split_fractions", fractions)
        if self.class_count is None and classes is not None:
            object.__setattr__(self, "class_count", classes)
        if self.split_fractions is not None:
            if abs(sum(self.split_fractions) - 1.0) > 1e-9:
                raise ConfigError(
                    f"split fractions must sum to 1, got {self.split_fractions}"
                )

    @property
    def event_format(self):
        return _KIND_DEFAULTS[self.kind][2]


def split_of(sample_id: str, seed: int, fractions) -> str:
    """Deterministic split assignment by hashing the sample id."""
    u = float(rng_for(seed, "split", sample_id).random())
    if u < fractions[0]:
        return "train"
    if u < fractions[0] + fractions[1]:
        return "val"
    return "test"


@dataclass
class LabeledSet:
    data: np.ndarray
    labels: np.ndarray
    ids: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.data)


@dataclass
class UnlabeledSet:
    """Training-time event data; deliberately carries no labels."""

    data: np.ndarray
    ids: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.data)


@dataclass
class LoadedDataset:
    class_names: List[str]
    frames_train: LabeledSet
    events_train: UnlabeledSet
    events_test: LabeledSet
    events_val: LabeledSet
    frames_test: LabeledSet
    resolution: int
    bins: int

    @property
    def num_classes(self):
        return len(self.class_names)


def _empty_labeled(channels, resolution):
    return LabeledSet(
        np.zeros((0, channels, resolution, resolution), np.float32), np.zeros(0, np.int64), []
    )


def load_dataset(
    spec: DatasetSpec, bins: int = 5, normalization: str = "unit_max"
) -> LoadedDataset:
    """Materialize (labeled frames, unlabeled training events, labeled event
    val/test sets) from an on-disk tree."""
    root = Path(spec.root)
    if not root.exists():
        raise IngestionError(f"dataset root {root} does not exist")
    if spec.kind == "toy":
        entries, class_names = _toy_entries(root)
    else:
        entries, class_names = _scanned_entries(root, spec)

    if spec.class_count is not None and len(class_names) != spec.class_count:
        raise ValidationError(
            f"expected {spec.class_count} classes, discovered {len(class_names)}"
        )

    seen = set()
    for e in entries:
        key = (e["domain"], e["id"])
        if key in seen:
            raise ValidationError(f"duplicate sample id '{e['id']}' in domain {e['domain']}")
        seen.add(key)

    class_index = {name: i for i, name in enumerate(class_names)}
    buckets = {}
    for e in entries:
        buckets.setdefault((e["domain"], e["split"]), []).append(e)

    def load_frames(split):
        items = sorted(buckets.get(("frames", split), []), key=lambda e: e["id"])
        if not items:
            return _empty_labeled(3, spec.resolution)
        data = np.stack(
            [load_frame(root / e["file"], spec.resolution).data for e in items]
        )
        labels = np.array([class_index[e["class"]] for e in items], dtype=np.int64)
        return LabeledSet(data, labels, [e["id"] for e in items])

    def load_events(split):
        items = sorted(buckets.get(("events", split), []), key=lambda e: e["id"])
        tensors, labels, ids = [], [], []
        for e in items:
            stream = read_event_file(root / e["file"], spec.event_format)
            tensor = voxelize(stream, spec.resolution, spec.resolution, bins).normalized(
                normalization
            )
            tensors.append(tensor.data)
            labels.append(class_index[e["class"]])
            ids.append(e["id"])
        if not tensors:
            return _empty_labeled(2 * bins, spec.resolution)
        return LabeledSet(np.stack(tensors), np.array(labels, dtype=np.int64), ids)

    events_train_labeled = load_events("train")
    if len(events_train_labeled) == 0:
        raise ConfigError(f"dataset {root} contains no training events")
    frames_train = load_frames("train")
    if len(frames_train) == 0:
        raise ConfigError(f"dataset {root} contains no training frames")

    return LoadedDataset(
        class_names=class_names,
        frames_train=frames_train,
        # labels are dropped here and never reach the trainer
        events_train=UnlabeledSet(events_train_labeled.data, events_train_labeled.ids),
        events_test=load_events("test"),
        events_val=load_events("val"),
        frames_test=load_frames("test"),
        resolution=spec.resolution,
        bins=bins,
    )


def _toy_entries(root: Path):
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise IngestionError(f"toy dataset at {root} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    class_names = list(manifest["classes"])
    for name in class_names:
        for domain in ("frames", "events"):
            if not (root / domain / name).is_dir():
                raise IngestionError(f"missing class directory {domain}/{name} under {root}")
    return list(manifest["samples"]), class_names


def _scanned_entries(root: Path, spec: DatasetSpec):
    """Directory scan for the paired real benchmarks, hash-splitting ids."""
    entries = []
    class_names = None
    for domain, suffixes in (("frames", _FRAME_SUFFIXES), ("events", _EVENT_SUFFIXES)):
        domain_dir = root / domain
        if not domain_dir.is_dir():
            raise IngestionError(f"missing domain directory {domain_dir}")
        names = sorted(d.name for d in domain_dir.iterdir() if d.is_dir())
        if class_names is None:
            class_names = names
        elif names != class_names:
            raise IngestionError(
                f"frame and event class directories disagree under {root}"
            )
        for name in names:
            files = sorted(
                f for f in (domain_dir / name).iterdir() if f.suffix.lower() in suffixes
            )
            if not files:
                raise IngestionError(f"class directory {domain_dir / name} holds no samples")
            for f in files:
                sample_id = f"{name}/{f.stem}"
                entries.append(
                    {
                        "id": sample_id,
                        "class": name,
                        "domain": domain,
                        "split": split_of(sample_id, spec.split_seed, spec.split_fractions),
                        "file": str(f.relative_to(root)),
                    }
                )
    # manifest, when shipped alongside real data, pins the expected counts
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        expected = manifest.get("counts", {})
        actual = {}
        for e in entries:
            actual[e["domain"]] = actual.get(e["domain"], 0) + 1
        for domain, count in expected.items():
            if actual.get(domain, 0) != count:
                raise ValidationError(
                    f"manifest expects {count} {domain} samples, found {actual.get(domain, 0)}"
                )
    return entries, class_names
