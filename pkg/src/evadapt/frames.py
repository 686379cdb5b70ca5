"""Frame-domain inputs: RGB images in [0, 1] with class labels."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from evadapt.errors import IngestionError, ValidationError


@dataclass
class FrameTensor:
    """One RGB image as a (3, H, W) float grid in [0, 1]."""

    data: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValidationError(f"frame tensor must be (3, H, W), got {self.data.shape}")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValidationError("frame values must lie in [0, 1]")

    @property
    def shape(self):
        return self.data.shape


def load_frame(path, resolution: int, label: Optional[int] = None) -> FrameTensor:
    """Decode an image file, resize to the training resolution, scale to [0, 1].

    Grayscale sources are replicated across the three channels.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise IngestionError(f"cannot decode image file {path}: {exc}") from exc
    return FrameTensor(arr.transpose(2, 0, 1), label)
