"""Event file ingestion: canonical container plus two public-dataset adapters.

Canonical format (little-endian):
    header  -- 16 bytes: magic b"EVT1", u32 sensor width, u32 sensor height,
               u32 record count
    records -- 16 bytes each: u64 timestamp in microseconds, u16 x, u16 y,
               i8 polarity (+1/-1), 3 pad bytes

``ncaltech_bin`` reads the 40-bit ATIS packing used by the public
N-Caltech101 distribution; ``aedat`` reads AEDAT 2.0 DVS-128 event packets.
"""

from pathlib import Path

import numpy as np

from evadapt.errors import EventParseError, ValidationError
from evadapt.events.stream import EVENT_DTYPE, EventStream

MAGIC = b"EVT1"
HEADER_SIZE = 16

_HEADER_DTYPE = np.dtype([("magic", "S4"), ("width", "<u4"), ("height", "<u4"), ("count", "<u4")])
_RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1"), ("pad", "V3")]
)

FORMATS = ("canonical", "ncaltech_bin", "aedat")


def parse_event_stream(data: bytes, format: str = "canonical", label=None) -> EventStream:
    """Decode raw file content into a validated :class:`EventStream`."""
    if format == "canonical":
        return _parse_canonical(data, label)
    if format == "ncaltech_bin":
        return _parse_ncaltech(data, label)
    if format == "aedat":
        return _parse_aedat(data, label)
    raise ValidationError(f"unknown event format '{format}' (expected one of {FORMATS})")


def read_event_file(path, format: str = "canonical", label=None) -> EventStream:
    return parse_event_stream(Path(path).read_bytes(), format, label)


# ---------------------------------------------------------------------------
# canonical
# ---------------------------------------------------------------------------


def _parse_canonical(data: bytes, label=None) -> EventStream:
    if len(data) < HEADER_SIZE:
        raise EventParseError(
            f"truncated header: need {HEADER_SIZE} bytes, got {len(data)}", offset=len(data)
        )
    header = np.frombuffer(data[:HEADER_SIZE], dtype=_HEADER_DTYPE)[0]
    if bytes(header["magic"]) != MAGIC:
        raise EventParseError(f"bad magic {bytes(header['magic'])!r}", offset=0)
    count = int(header["count"])
    body = data[HEADER_SIZE:]
    if len(body) != count * _RECORD_DTYPE.itemsize:
        complete = len(body) // _RECORD_DTYPE.itemsize
        raise EventParseError(
            f"header declares {count} records but body holds {len(body)} bytes",
            offset=HEADER_SIZE + complete * _RECORD_DTYPE.itemsize,
        )
    records = np.frombuffer(body, dtype=_RECORD_DTYPE)
    events = np.empty(count, dtype=EVENT_DTYPE)
    for field in ("t", "x", "y", "p"):
        events[field] = records[field]
    return EventStream(events, int(header["width"]), int(header["height"]), label)


def write_canonical(stream: EventStream) -> bytes:
    header = np.zeros(1, dtype=_HEADER_DTYPE)
    header["magic"] = MAGIC
    header["width"] = stream.sensor_width
    header["height"] = stream.sensor_height
    header["count"] = len(stream)
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    for field in ("t", "x", "y", "p"):
        records[field] = stream.events[field]
    return header.tobytes() + records.tobytes()


def save_canonical(stream: EventStream, path) -> None:
    Path(path).write_bytes(write_canonical(stream))


# ---------------------------------------------------------------------------
# N-Caltech101 ATIS .bin adapter
# ---------------------------------------------------------------------------
#
# 5 bytes per event, big-endian bit layout:
#   bits 39-32 x, bits 31-24 y, bit 23 polarity (1 -> +1), bits 22-0 t (us)

ATIS_SENSOR = (304, 240)


def _parse_ncaltech(data: bytes, label=None) -> EventStream:
    if len(data) % 5 != 0:
        raise EventParseError(
            f"ATIS payload length {len(data)} is not a multiple of 5",
            offset=(len(data) // 5) * 5,
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 5).astype(np.uint64)
    x = raw[:, 0]
    y = raw[:, 1]
    p = np.where(raw[:, 2] & 0x80, 1, -1).astype(np.int8)
    t = ((raw[:, 2] & 0x7F) << 16) | (raw[:, 3] << 8) | raw[:, 4]
    return EventStream.from_arrays(t, x, y, p, ATIS_SENSOR[0], ATIS_SENSOR[1], label)


def write_ncaltech(stream: EventStream) -> bytes:
    t = stream.events["t"].astype(np.uint64)
    if len(t) and t.max() >= (1 << 23):
        raise ValidationError("ATIS packing holds 23-bit timestamps only")
    if len(t) and (stream.events["x"].max() > 0xFF or stream.events["y"].max() > 0xFF):
        raise ValidationError("ATIS packing holds 8-bit coordinates only")
    raw = np.zeros((len(t), 5), dtype=np.uint8)
    raw[:, 0] = stream.events["x"]
    raw[:, 1] = stream.events["y"]
    raw[:, 2] = ((stream.events["p"] > 0).astype(np.uint8) << 7) | ((t >> 16) & 0x7F).astype(
        np.uint8
    )
    raw[:, 3] = ((t >> 8) & 0xFF).astype(np.uint8)
    raw[:, 4] = (t & 0xFF).astype(np.uint8)
    return raw.tobytes()


# ---------------------------------------------------------------------------
# AEDAT 2.0 DVS-128 adapter
# ---------------------------------------------------------------------------
#
# '#'-prefixed ASCII header lines, then 8-byte big-endian records
# (u32 address, u32 timestamp).  DVS-128 addresses pack
# x = (addr >> 1) & 0x7F, y = (addr >> 8) & 0x7F, polarity in bit 0.

AEDAT_HEADER = b"#!AER-DAT2.0\r\n"
DVS128_SENSOR = (128, 128)


def _parse_aedat(data: bytes, label=None) -> EventStream:
    if not data.startswith(b"#"):
        raise EventParseError("missing AEDAT ASCII header", offset=0)
    offset = 0
    while offset < len(data) and data[offset : offset + 1] == b"#":
        nl = data.find(b"\n", offset)
        if nl < 0:
            raise EventParseError("unterminated AEDAT header line", offset=offset)
        offset = nl + 1
    body = data[offset:]
    if len(body) % 8 != 0:
        raise EventParseError(
            f"AEDAT event section length {len(body)} is not a multiple of 8",
            offset=offset + (len(body) // 8) * 8,
        )
    raw = np.frombuffer(body, dtype=">u4").reshape(-1, 2)
    addr, t = raw[:, 0], raw[:, 1]
    x = (addr >> 1) & 0x7F
    y = (addr >> 8) & 0x7F
    p = np.where(addr & 0x1, 1, -1).astype(np.int8)
    return EventStream.from_arrays(t, x, y, p, DVS128_SENSOR[0], DVS128_SENSOR[1], label)


def write_aedat(stream: EventStream) -> bytes:
    if stream.sensor_width > 128 or stream.sensor_height > 128:
        raise ValidationError("AEDAT 2.0 DVS-128 adapter addresses a 128x128 sensor")
    addr = (
        (stream.events["y"].astype(np.uint32) << 8)
        | (stream.events["x"].astype(np.uint32) << 1)
        | (stream.events["p"] > 0).astype(np.uint32)
    )
    raw = np.empty((len(stream), 2), dtype=">u4")
    raw[:, 0] = addr
    raw[:, 1] = stream.events["t"]
    return AEDAT_HEADER + raw.tobytes()
