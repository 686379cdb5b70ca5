"""Round trips and failure modes of the three event file formats."""

import numpy as np
import pytest

from evadapt.errors import EventParseError, ValidationError
from evadapt.events.io import (
    AEDAT_HEADER,
    HEADER_SIZE,
    parse_event_stream,
    write_aedat,
    write_canonical,
    write_ncaltech,
)
from evadapt.events.stream import EventStream


def make_stream(n, sensor=(64, 48), seed=0, max_t=100_000):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, max_t, n)).astype(np.uint64)
    x = rng.integers(0, sensor[0], n).astype(np.uint16)
    y = rng.integers(0, sensor[1], n).astype(np.uint16)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return EventStream.from_arrays(t, x, y, p, sensor[0], sensor[1])


class TestCanonical:
    def test_empty_round_trip(self):
        stream = EventStream.empty(32, 32)
        parsed = parse_event_stream(write_canonical(stream))
        assert len(parsed) == 0
        assert (parsed.sensor_width, parsed.sensor_height) == (32, 32)

    def test_single_event_round_trip(self):
        stream = EventStream.from_arrays([5], [3], [2], [1], 8, 8)
        parsed = parse_event_stream(write_canonical(stream))
        assert len(parsed) == 1
        ev = parsed.events[0]
        assert (int(ev["t"]), int(ev["x"]), int(ev["y"]), int(ev["p"])) == (5, 3, 2, 1)

    def test_large_round_trip_exact(self):
        stream = make_stream(5000)
        parsed = parse_event_stream(write_canonical(stream))
        assert np.array_equal(parsed.events, stream.events)

    def test_bad_magic_offset_zero(self):
        data = b"XXXX" + b"\0" * 12
        with pytest.raises(EventParseError) as err:
            parse_event_stream(data)
        assert err.value.offset == 0

    def test_truncated_header(self):
        with pytest.raises(EventParseError) as err:
            parse_event_stream(b"EVT1\0\0")
        assert err.value.offset == 6

    def test_record_count_mismatch_names_offset(self):
        stream = make_stream(3)
        data = write_canonical(stream)[:-8]  # clip half a record
        with pytest.raises(EventParseError) as err:
            parse_event_stream(data)
        assert err.value.offset == HEADER_SIZE + 2 * 16

    def test_coordinate_at_sensor_width_rejected(self):
        stream = make_stream(2, sensor=(16, 16))
        data = bytearray(write_canonical(stream))
        # x field of record 0 sits 8 bytes into the record
        data[HEADER_SIZE + 8 : HEADER_SIZE + 10] = (16).to_bytes(2, "little")
        with pytest.raises(ValidationError):
            parse_event_stream(bytes(data))

    def test_bad_polarity_rejected(self):
        stream = make_stream(1, sensor=(16, 16))
        data = bytearray(write_canonical(stream))
        data[HEADER_SIZE + 12] = 3
        with pytest.raises(ValidationError):
            parse_event_stream(bytes(data))

    def test_decreasing_timestamps_rejected(self):
        with pytest.raises(ValidationError):
            EventStream.from_arrays([10, 5], [0, 0], [0, 0], [1, 1], 4, 4)


class TestNCaltechBin:
    def test_round_trip(self):
        # public files keep coordinates within the format's 8-bit fields
        stream = make_stream(500, sensor=(240, 180), max_t=(1 << 23) - 1)
        stream = EventStream(stream.events, 304, 240)
        parsed = parse_event_stream(write_ncaltech(stream), "ncaltech_bin")
        assert np.array_equal(parsed.events, stream.events)
        assert (parsed.sensor_width, parsed.sensor_height) == (304, 240)

    def test_wide_coordinates_rejected_by_writer(self):
        stream = EventStream.from_arrays([1], [300], [0], [1], 304, 240)
        with pytest.raises(ValidationError):
            write_ncaltech(stream)

    def test_polarity_bit(self):
        stream = EventStream.from_arrays([1, 2], [0, 1], [0, 1], [1, -1], 304, 240)
        parsed = parse_event_stream(write_ncaltech(stream), "ncaltech_bin")
        assert list(parsed.events["p"]) == [1, -1]

    def test_ragged_payload_rejected(self):
        with pytest.raises(EventParseError) as err:
            parse_event_stream(b"\0" * 12, "ncaltech_bin")
        assert err.value.offset == 10

    def test_timestamp_too_wide_for_packing(self):
        stream = EventStream.from_arrays([1 << 23], [0], [0], [1], 304, 240)
        with pytest.raises(ValidationError):
            write_ncaltech(stream)


class TestAedat:
    def test_round_trip(self):
        stream = make_stream(300, sensor=(128, 128))
        parsed = parse_event_stream(write_aedat(stream), "aedat")
        assert np.array_equal(parsed.events, stream.events)
        assert (parsed.sensor_width, parsed.sensor_height) == (128, 128)

    def test_multi_line_header(self):
        stream = make_stream(4, sensor=(128, 128))
        data = write_aedat(stream)
        payload = data[len(AEDAT_HEADER):]
        data = AEDAT_HEADER + b"# recorded by nobody\r\n" + payload
        parsed = parse_event_stream(data, "aedat")
        assert np.array_equal(parsed.events, stream.events)

    def test_missing_header_rejected(self):
        with pytest.raises(EventParseError) as err:
            parse_event_stream(b"\0" * 16, "aedat")
        assert err.value.offset == 0

    def test_ragged_event_section(self):
        stream = make_stream(2, sensor=(128, 128))
        data = write_aedat(stream)[:-3]
        with pytest.raises(EventParseError):
            parse_event_stream(data, "aedat")


def test_unknown_format_rejected():
    with pytest.raises(ValidationError):
        parse_event_stream(b"", "mystery")
