"""Synthetic two-domain shape benchmark.

The frame domain renders anti-aliased geometric shapes with random pose,
scale and color over low-frequency backgrounds.  The event domain translates
a shape along a short random trajectory and emits an event whenever a pixel's
log intensity crosses a threshold level (sign gives polarity), plus uniform
noise events.  The two domains draw poses independently, so samples are
unpaired; only the class label is shared.
"""

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from evadapt.errors import ConfigError
from evadapt.events import kernels
from evadapt.events.io import save_canonical
from evadapt.events.stream import EventStream
from evadapt.seeding import rng_for

SHAPES = ("circle", "square", "triangle", "cross", "ring", "diamond", "hbar", "checker")

LOG_FLOOR = 0.08  # intensity offset before the log, keeps log finite on black


@dataclass(frozen=True)
class ToyConfig:
    classes: int = 5
    per_class: int = 100
    eval_per_class: int = 30
    image_size: int = 32
    theta: float = 0.2
    trajectory_steps: int = 8
    noise_rate: float = 1e-4  # expected noise events per pixel per step
    dt_us: int = 2000

    def __post_init__(self):
        if not 2 <= self.classes <= len(SHAPES):
            raise ConfigError(f"classes must lie in [2, {len(SHAPES)}], got {self.classes}")
        if self.theta <= 0:
            raise ConfigError(f"threshold theta must be > 0, got {self.theta}")
        if self.trajectory_steps < 1:
            raise ConfigError(f"trajectory needs at least 1 step, got {self.trajectory_steps}")
        if self.per_class < 1 or self.eval_per_class < 0:
            raise ConfigError("sample counts must be positive")

    @property
    def class_names(self):
        return list(SHAPES[: self.classes])


# ---------------------------------------------------------------------------
# shape rendering
# ---------------------------------------------------------------------------


def render_shape(shape, size, cx, cy, radius, angle, supersample=4):
    """Soft occupancy mask in [0, 1] for one shape at one pose."""
    n = size * supersample
    coords = (np.arange(n) + 0.5) / supersample
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    dy, dx = yy - cy, xx - cx
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * dx + sa * dy  # rotated local frame
    v = -sa * dx + ca * dy

    r = radius
    if shape == "circle":
        mask = u**2 + v**2 <= r**2
    elif shape == "square":
        mask = np.maximum(np.abs(u), np.abs(v)) <= r * 0.9
    elif shape == "triangle":
        # downward-pointing half planes of an equilateral triangle
        mask = (v >= -r * 0.8) & (v + 2.0 * u <= r) & (v - 2.0 * u <= r)
    elif shape == "cross":
        arm = r * 0.35
        mask = ((np.abs(u) <= arm) & (np.abs(v) <= r)) | ((np.abs(v) <= arm) & (np.abs(u) <= r))
    elif shape == "ring":
        d2 = u**2 + v**2
        mask = (d2 <= r**2) & (d2 >= (r * 0.55) ** 2)
    elif shape == "diamond":
        mask = np.abs(u) + np.abs(v) <= r * 1.1
    elif shape == "hbar":
        mask = (np.abs(u) <= r) & (np.abs(v) <= r * 0.35)
    elif shape == "checker":
        inside = np.maximum(np.abs(u), np.abs(v)) <= r * 0.95
        parity = (np.floor(u / (r * 0.5)) + np.floor(v / (r * 0.5))) % 2 == 0
        mask = inside & parity
    else:
        raise ConfigError(f"unknown shape '{shape}'")

    mask = mask.astype(np.float64).reshape(size, supersample, size, supersample)
    return mask.mean(axis=(1, 3))


def _random_pose(rng, size):
    radius = rng.uniform(0.22, 0.34) * size
    margin = radius + 1.0
    cx = rng.uniform(margin, size - margin)
    cy = rng.uniform(margin, size - margin)
    angle = rng.uniform(0, 2 * np.pi)
    return cx, cy, radius, angle


def _background(rng, size, channels, low, high):
    coarse = rng.uniform(low, high, size=(channels, 4, 4)).astype(np.float64)
    ups = np.repeat(np.repeat(coarse, size // 4 + 1, axis=1), size // 4 + 1, axis=2)
    return ups[:, :size, :size]


def sample_frame(cfg: ToyConfig, class_index, rng):
    """One rendered RGB frame in [0, 1], channel-first."""
    size = cfg.image_size
    cx, cy, radius, angle = _random_pose(rng, size)
    mask = render_shape(cfg.class_names[class_index], size, cx, cy, radius, angle)
    bg = _background(rng, size, 3, 0.0, 0.35)
    color = rng.uniform(0.6, 1.0, size=3)
    frame = bg * (1.0 - mask) + color[:, None, None] * mask
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def intensity_sequence(cfg: ToyConfig, class_index, rng):
    """Grayscale renders of the shape translating along a random trajectory."""
    size = cfg.image_size
    cx, cy, radius, angle = _random_pose(rng, size)
    speed = rng.uniform(0.8, 2.0)
    direction = rng.uniform(0, 2 * np.pi)
    step = np.array([np.cos(direction), np.sin(direction)]) * speed
    bg_level = rng.uniform(0.05, 0.2)
    fg_level = rng.uniform(0.7, 1.0)
    frames = np.empty((cfg.trajectory_steps + 1, size, size), dtype=np.float64)
    for k in range(cfg.trajectory_steps + 1):
        mask = render_shape(
            cfg.class_names[class_index],
            size,
            cx + step[0] * k,
            cy + step[1] * k,
            radius,
            angle,
        )
        frames[k] = bg_level * (1.0 - mask) + fg_level * mask
    return frames


def events_from_intensity(intensities, theta, dt_us, noise_rate=0.0, rng=None, t_start_us=0):
    """Threshold-crossing events for a (T+1, H, W) intensity sequence.

    Log intensity is compared against the fixed level grid {k * theta}; each
    crossing emits one event with the crossing's sign and an interpolated
    timestamp.  Optional uniform noise events are mixed in before sorting.
    """
    log_frames = np.log(np.asarray(intensities, dtype=np.float64) + LOG_FLOOR)
    t, x, y, p = kernels.level_crossing_events(log_frames, float(theta), int(t_start_us), int(dt_us))

    steps, h, w = intensities.shape[0] - 1, intensities.shape[1], intensities.shape[2]
    if noise_rate > 0.0:
        if rng is None:
            raise ConfigError("noise events need an RNG")
        n_noise = int(rng.poisson(noise_rate * h * w * steps))
        if n_noise:
            t = np.concatenate([t, rng.integers(t_start_us, t_start_us + steps * dt_us, n_noise).astype(np.uint64)])
            x = np.concatenate([x, rng.integers(0, w, n_noise).astype(np.uint16)])
            y = np.concatenate([y, rng.integers(0, h, n_noise).astype(np.uint16)])
            p = np.concatenate([p, rng.choice(np.array([-1, 1], dtype=np.int8), n_noise)])

    order = np.argsort(t, kind="stable")
    return t[order], x[order], y[order], p[order]


def sample_events(cfg: ToyConfig, class_index, rng, label=None) -> EventStream:
    intensities = intensity_sequence(cfg, class_index, rng)
    t, x, y, p = events_from_intensity(
        intensities, cfg.theta, cfg.dt_us, cfg.noise_rate, rng
    )
    return EventStream.from_arrays(t, x, y, p, cfg.image_size, cfg.image_size, label)


# ---------------------------------------------------------------------------
# on-disk generation
# ---------------------------------------------------------------------------


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _save_frame(frame, path):
    img = (np.clip(frame, 0, 1) * 255).round().astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(img).save(path)


def generate_toy_dataset(cfg: ToyConfig, seed: int, out_dir) -> Path:
    """Write the benchmark to disk in canonical formats; returns the root.

    Layout: <root>/<domain>/<class_name>/<sample_id>.{png|evt} plus a
    manifest listing every sample's id, class, domain, split and checksum.
    Splits are encoded in the sample id (train/val/test), so membership is a
    pure function of the id.
    """
    root = Path(out_dir)
    samples = []

    plan = [
        ("frames", "train", cfg.per_class),
        ("frames", "test", cfg.eval_per_class),
        ("events", "train", cfg.per_class),
        ("events", "val", cfg.eval_per_class),
        ("events", "test", cfg.eval_per_class),
    ]
    for domain, split, count in plan:
        for class_index, class_name in enumerate(cfg.class_names):
            class_dir = root / domain / class_name
            class_dir.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                sample_id = f"{split}_{class_name}_{i:04d}"
                rng = rng_for(seed, "toy", domain, split, class_name, i)
                if domain == "frames":
                    path = class_dir / f"{sample_id}.png"
                    _save_frame(sample_frame(cfg, class_index, rng), path)
                else:
                    path = class_dir / f"{sample_id}.evt"
                    save_canonical(sample_events(cfg, class_index, rng, label=class_index), path)
                samples.append(
                    {
                        "id": sample_id,
                        "class": class_name,
                        "class_index": class_index,
                        "domain": domain,
                        "split": split,
                        "file": str(path.relative_to(root)),
                        "sha256": _sha256(path),
                    }
                )

    manifest = {
        "kind": "toy",
        "classes": cfg.class_names,
        "image_size": cfg.image_size,
        "seed": seed,
        "config": asdict(cfg),
        "samples": samples,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return root
