"""Stochastic augmentation menus and the two-view sampler.

Frames and event grids use disjoint transform menus (frames: color jitter,
Gaussian blur, random resize, random affine, random crop, random flip;
events: random spatial shift, random flip, random resize, random crop).
Every transform is a pure function of (input, config, seed): the same seed
always reproduces the same output, which is what makes training replays and
checkpoint resume exact.
"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from evadapt.errors import ConfigError, ValidationError
from evadapt.events.stream import EventTensor
from evadapt.frames import FrameTensor
from evadapt.seeding import derive_seed, rng_for

FRAME_DOMAIN = "frame"
EVENT_DOMAIN = "event"


@dataclass(frozen=True)
class AugmentConfig:
    """Per-transform enable flags and draw ranges for one domain's menu."""

    domain: str
    out_size: Tuple[int, int]
    flip_prob: float = 0.0
    resize_scale: Optional[Tuple[float, float]] = None
    crop_scale: Optional[Tuple[float, float]] = None
    # frame menu only
    jitter: float = 0.0
    blur_sigma: Optional[Tuple[float, float]] = None
    affine_degrees: float = 0.0
    affine_translate: float = 0.0
    # event menu only
    shift_max: int = 0

    def __post_init__(self):
        if self.domain not in (FRAME_DOMAIN, EVENT_DOMAIN):
            raise ConfigError(f"unknown augmentation domain '{self.domain}'")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError(f"flip probability must be in [0, 1], got {self.flip_prob}")
        for name in ("resize_scale", "crop_scale", "blur_sigma"):
            rng = getattr(self, name)
            if rng is not None and not (0 < rng[0] <= rng[1]):
                raise ConfigError(f"{name} range {rng} is empty or non-positive")
        if self.crop_scale is not None and self.crop_scale[1] > 1.0:
            raise ConfigError(
                f"crop window scale {self.crop_scale[1]} exceeds the input extent"
            )
        if self.domain == EVENT_DOMAIN:
            for name in ("jitter", "affine_degrees", "affine_translate"):
                if getattr(self, name):
                    raise ConfigError(f"'{name}' belongs to the frame menu, not events")
            if self.blur_sigma is not None:
                raise ConfigError("'blur_sigma' belongs to the frame menu, not events")
        if self.domain == FRAME_DOMAIN and self.shift_max:
            raise ConfigError("'shift_max' belongs to the event menu, not frames")

    @classmethod
    def identity(cls, domain: str, out_size) -> "AugmentConfig":
        return cls(domain=domain, out_size=tuple(out_size))

    @classmethod
    def frame_default(cls, out_size) -> "AugmentConfig":
        # magnitudes follow common two-view contrastive practice
        return cls(
            domain=FRAME_DOMAIN,
            out_size=tuple(out_size),
            flip_prob=0.5,
            resize_scale=(0.8, 1.2),
            crop_scale=(0.6, 1.0),
            jitter=0.4,
            blur_sigma=(0.1, 2.0),
            affine_degrees=10.0,
            affine_translate=0.1,
        )

    @classmethod
    def event_default(cls, out_size, shift_max: int = 4) -> "AugmentConfig":
        return cls(
            domain=EVENT_DOMAIN,
            out_size=tuple(out_size),
            flip_prob=0.5,
            resize_scale=(0.8, 1.2),
            crop_scale=(0.6, 1.0),
            shift_max=shift_max,
        )

    def is_identity(self) -> bool:
        return (
            self.flip_prob == 0.0
            and self.resize_scale is None
            and self.crop_scale is None
            and self.jitter == 0.0
            and self.blur_sigma is None
            and self.affine_degrees == 0.0
            and self.affine_translate == 0.0
            and self.shift_max == 0
        )


# ---------------------------------------------------------------------------
# primitive transforms on (C, H, W) float arrays
# ---------------------------------------------------------------------------


def hflip(arr: np.ndarray) -> np.ndarray:
    return arr[:, :, ::-1].copy()


def shift2d(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer translation with zero fill."""
    out = np.zeros_like(arr)
    h, w = arr.shape[1], arr.shape[2]
    ys, yd = (dy, 0) if dy < 0 else (0, dy)
    xs, xd = (dx, 0) if dx < 0 else (0, dx)
    hh, ww = h - abs(dy), w - abs(dx)
    if hh > 0 and ww > 0:
        out[:, yd : yd + hh, xd : xd + ww] = arr[:, -ys : -ys + hh, -xs : -xs + ww]
    return out


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact-size bilinear resample (align-corners=False convention)."""
    c, h, w = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, :]
    top = arr[:, y0][:, :, x0] * (1 - wx) + arr[:, y0][:, :, x1] * wx
    bot = arr[:, y1][:, :, x0] * (1 - wx) + arr[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def affine_transform(arr: np.ndarray, degrees: float, dy: float, dx: float) -> np.ndarray:
    """Rotation about the center plus translation, bilinear with zero fill."""
    c, h, w = arr.shape
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: undo translation, rotate backward about the center
    ysrc = cos_t * (yy - cy - dy) + sin_t * (xx - cx - dx) + cy
    xsrc = -sin_t * (yy - cy - dy) + cos_t * (xx - cx - dx) + cx
    valid = (ysrc >= 0) & (ysrc <= h - 1) & (xsrc >= 0) & (xsrc <= w - 1)
    ysrc = np.clip(ysrc, 0, h - 1)
    xsrc = np.clip(xsrc, 0, w - 1)
    y0 = np.floor(ysrc).astype(np.int64)
    x0 = np.floor(xsrc).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ysrc - y0).astype(np.float32)
    wx = (xsrc - x0).astype(np.float32)
    out = (
        arr[:, y0, x0] * (1 - wy) * (1 - wx)
        + arr[:, y0, x1] * (1 - wy) * wx
        + arr[:, y1, x0] * wy * (1 - wx)
        + arr[:, y1, x1] * wy * wx
    )
    return (out * valid[None].astype(np.float32)).astype(np.float32)


def color_jitter(arr: np.ndarray, brightness: float, contrast: float, saturation: float) -> np.ndarray:
    out = arr * brightness
    mean = out.mean()
    out = (out - mean) * contrast + mean
    gray = out.mean(axis=0, keepdims=True)
    out = gray + (out - gray) * saturation
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# menu application
# ---------------------------------------------------------------------------


def _random_resize(arr, rng, scale_range, out_size):
    scale = float(rng.uniform(*scale_range))
    h, w = arr.shape[1], arr.shape[2]
    arr = resize_bilinear(arr, max(1, round(h * scale)), max(1, round(w * scale)))
    return _fit_to(arr, out_size)


def _fit_to(arr, out_size):
    """Center-crop or zero-pad to the target spatial size."""
    out_h, out_w = out_size
    c, h, w = arr.shape
    if h > out_h:
        top = (h - out_h) // 2
        arr = arr[:, top : top + out_h, :]
    elif h < out_h:
        pad = out_h - h
        arr = np.pad(arr, ((0, 0), (pad // 2, pad - pad // 2), (0, 0)))
    h = arr.shape[1]
    if w > out_w:
        left = (w - out_w) // 2
        arr = arr[:, :, left : left + out_w]
    elif w < out_w:
        pad = out_w - w
        arr = np.pad(arr, ((0, 0), (0, 0), (pad // 2, pad - pad // 2)))
    return np.ascontiguousarray(arr, dtype=np.float32)


def _random_crop(arr, rng, scale_range, out_size):
    h, w = arr.shape[1], arr.shape[2]
    scale = float(rng.uniform(*scale_range))
    ch = max(1, round(h * scale))
    cw = max(1, round(w * scale))
    if ch > h or cw > w:
        raise ValidationError(f"crop window {ch}x{cw} larger than input {h}x{w}")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    window = arr[:, top : top + ch, left : left + cw]
    return resize_bilinear(window, out_size[0], out_size[1])


def apply_augment(data: np.ndarray, cfg: AugmentConfig, seed: int) -> np.ndarray:
    """Run one domain menu over a (C, H, W) array, deterministically."""
    if cfg.is_identity():
        return _fit_to(np.array(data, dtype=np.float32, copy=True), cfg.out_size)
    rng = rng_for(seed, "augment", cfg.domain)
    arr = np.asarray(data, dtype=np.float32)

    if cfg.domain == FRAME_DOMAIN:
        if cfg.jitter > 0:
            lo, hi = max(0.0, 1.0 - cfg.jitter), 1.0 + cfg.jitter
            arr = color_jitter(
                arr,
                float(rng.uniform(lo, hi)),
                float(rng.uniform(lo, hi)),
                float(rng.uniform(lo, hi)),
            )
        if cfg.blur_sigma is not None:
            sigma = float(rng.uniform(*cfg.blur_sigma))
            arr = np.stack(
                [gaussian_filter(ch, sigma=sigma, mode="nearest") for ch in arr]
            ).astype(np.float32)
        if cfg.resize_scale is not None:
            arr = _random_resize(arr, rng, cfg.resize_scale, cfg.out_size)
        if cfg.affine_degrees > 0 or cfg.affine_translate > 0:
            deg = float(rng.uniform(-cfg.affine_degrees, cfg.affine_degrees))
            max_t = cfg.affine_translate
            dy = float(rng.uniform(-max_t, max_t)) * arr.shape[1]
            dx = float(rng.uniform(-max_t, max_t)) * arr.shape[2]
            arr = affine_transform(arr, deg, dy, dx)
        if cfg.crop_scale is not None:
            arr = _random_crop(arr, rng, cfg.crop_scale, cfg.out_size)
        if cfg.flip_prob > 0 and rng.random() < cfg.flip_prob:
            arr = hflip(arr)
    else:
        if cfg.shift_max > 0:
            dy = int(rng.integers(-cfg.shift_max, cfg.shift_max + 1))
            dx = int(rng.integers(-cfg.shift_max, cfg.shift_max + 1))
            arr = shift2d(arr, dy, dx)
        if cfg.flip_prob > 0 and rng.random() < cfg.flip_prob:
            arr = hflip(arr)
        if cfg.resize_scale is not None:
            arr = _random_resize(arr, rng, cfg.resize_scale, cfg.out_size)
        if cfg.crop_scale is not None:
            arr = _random_crop(arr, rng, cfg.crop_scale, cfg.out_size)

    return _fit_to(arr, cfg.out_size)


def augment_events(tensor: EventTensor, cfg: AugmentConfig, seed: int) -> EventTensor:
    """Event-menu augmentation of a count grid; pure in (input, cfg, seed)."""
    if cfg.domain != EVENT_DOMAIN:
        raise ValidationError("augment_events requires an event-domain config")
    out = apply_augment(tensor.data, cfg, seed)
    return EventTensor(out, tensor.bins, tensor.normalization, tensor.label)


def augment_frame(frame: FrameTensor, cfg: AugmentConfig, seed: int) -> FrameTensor:
    if cfg.domain != FRAME_DOMAIN:
        raise ValidationError("augment_frame requires a frame-domain config")
    out = np.clip(apply_augment(frame.data, cfg, seed), 0.0, 1.0)
    return FrameTensor(out, frame.label)


def two_view(x, cfg: AugmentConfig, seed: int):
    """Two independently augmented versions of one sample.

    Sub-seeds for the two views derive from ``seed`` so the pair is
    reproducible; frame inputs demand the frame menu and event inputs the
    event menu.
    """
    if isinstance(x, FrameTensor):
        if cfg.domain != FRAME_DOMAIN:
            raise ValidationError("frame input requires a frame-domain augment config")
        make = lambda s: augment_frame(x, cfg, s)
    elif isinstance(x, EventTensor):
        if cfg.domain != EVENT_DOMAIN:
            raise ValidationError("event input requires an event-domain augment config")
        make = lambda s: augment_events(x, cfg, s)
    else:
        raise ValidationError(f"two_view expects FrameTensor or EventTensor, got {type(x)}")
    return make(derive_seed(seed, "view1")), make(derive_seed(seed, "view2"))


def event_config_from(cfg: AugmentConfig) -> AugmentConfig:
    """Project a frame config onto the event menu (shared knobs only)."""
    return replace(
        AugmentConfig.event_default(cfg.out_size),
        flip_prob=cfg.flip_prob,
        resize_scale=cfg.resize_scale,
        crop_scale=cfg.crop_scale,
    )
