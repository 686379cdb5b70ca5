"""Dense count-grid construction from raw event streams."""

import numpy as np

from evadapt.errors import ValidationError
from evadapt.events import kernels
from evadapt.events.stream import EventStream, EventTensor


def voxelize(stream: EventStream, height: int, width: int, bins: int) -> EventTensor:
    """Bin a stream into a (2*bins, height, width) polarity-split count grid.

    Events are partitioned into ``bins`` equal time intervals spanning
    [t_min, t_max]; spatial coordinates are scaled to the target grid with
    nearest-integer rounding so every event lands in exactly one cell and
    the grid total equals the event count.
    """
    if bins <= 0:
        raise ValidationError(f"bin count must be >= 1, got {bins}")
    if height <= 0 or width <= 0:
        raise ValidationError(f"target grid must be positive, got {height}x{width}")
    ev = stream.events
    grid = kernels.accumulate_counts(
        ev["t"],
        ev["x"].astype(np.int64),
        ev["y"].astype(np.int64),
        ev["p"],
        stream.sensor_width,
        stream.sensor_height,
        bins,
        height,
        width,
    )
    return EventTensor(grid, bins, "raw_counts", stream.label)
