"""Domain types for asynchronous event data.

An :class:`EventStream` is the raw sensor output for one sample: an ordered
list of (t, x, y, polarity) records plus the sensor geometry.  An
:class:`EventTensor` is the dense, polarity-split count grid that the
convolutional encoders consume.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from evadapt.errors import ValidationError

# Columnar in-memory layout; mirrors the canonical on-disk record.
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])


@dataclass
class EventStream:
    """Raw event list for one sample.

    ``events`` is a structured array with fields t (microseconds), x, y
    (pixel coordinates) and p (polarity, +1 or -1).  ``label`` is present
    only on evaluation sets; the adaptation trainer never sees it.
    """

    events: np.ndarray
    sensor_width: int
    sensor_height: int
    label: Optional[int] = None

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=EVENT_DTYPE)
        self.validate()

    def __len__(self):
        return len(self.events)

    @classmethod
    def from_arrays(cls, t, x, y, p, sensor_width, sensor_height, label=None):
        ev = np.empty(len(t), dtype=EVENT_DTYPE)
        ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
        return cls(ev, sensor_width, sensor_height, label)

    @classmethod
    def empty(cls, sensor_width, sensor_height, label=None):
        return cls(np.empty(0, dtype=EVENT_DTYPE), sensor_width, sensor_height, label)

    def validate(self):
        if self.sensor_width <= 0 or self.sensor_height <= 0:
            raise ValidationError(
                f"sensor size must be positive, got {self.sensor_width}x{self.sensor_height}"
            )
        ev = self.events
        if len(ev) == 0:
            return
        if np.any(np.diff(ev["t"].astype(np.int64)) < 0):
            raise ValidationError("event timestamps must be non-decreasing")
        if ev["x"].max(initial=0) >= self.sensor_width:
            raise ValidationError(
                f"event x coordinate {int(ev['x'].max())} outside sensor width {self.sensor_width}"
            )
        if ev["y"].max(initial=0) >= self.sensor_height:
            raise ValidationError(
                f"event y coordinate {int(ev['y'].max())} outside sensor height {self.sensor_height}"
            )
        pol = ev["p"]
        if not np.all((pol == 1) | (pol == -1)):
            bad = pol[(pol != 1) & (pol != -1)][0]
            raise ValidationError(f"polarity must be +1 or -1, got {int(bad)}")


# How the count grid has been scaled, if at all.
NORMALIZATIONS = ("raw_counts", "unit_max", "standardized")


@dataclass
class EventTensor:
    """Polarity-split count grid of shape (2*bins, H, W).

    Channels [0, bins) hold positive-polarity bins, [bins, 2*bins) negative.
    Under ``raw_counts`` the total sum equals the event count of the source
    stream.
    """

    data: np.ndarray
    bins: int
    normalization: str = "raw_counts"
    label: Optional[int] = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(f"unknown normalization '{self.normalization}'")
        if self.data.ndim != 3:
            raise ValidationError(f"event tensor must be 3-D, got shape {self.data.shape}")
        if self.data.shape[0] != 2 * self.bins:
            raise ValidationError(
                f"expected {2 * self.bins} channels for {self.bins} bins, got {self.data.shape[0]}"
            )
        if self.normalization == "raw_counts" and len(self.data) and self.data.min() < 0:
            raise ValidationError("raw count grid must be non-negative")

    @property
    def shape(self):
        return self.data.shape

    def normalized(self, mode: str) -> "EventTensor":
        """Return a rescaled copy (``unit_max`` or ``standardized``)."""
        if mode == self.normalization:
            return self
        if mode not in NORMALIZATIONS:
            raise ValidationError(f"unknown normalization '{mode}'")
        data = self.data
        if mode == "unit_max":
            peak = float(data.max()) if data.size else 0.0
            out = data / peak if peak > 0 else data.copy()
        elif mode == "standardized":
            std = float(data.std())
            out = (data - data.mean()) / std if std > 0 else data - data.mean()
        else:
            out = data.copy()
        return EventTensor(out, self.bins, mode, self.label)
