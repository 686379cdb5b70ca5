"""Raw event streams and their dense tensor representation."""

from evadapt.events.stream import EVENT_DTYPE, EventStream, EventTensor
from evadapt.events.io import parse_event_stream, write_canonical
from evadapt.events.voxel import voxelize

__all__ = [
    "EVENT_DTYPE",
    "EventStream",
    "EventTensor",
    "parse_event_stream",
    "write_canonical",
    "voxelize",
]
