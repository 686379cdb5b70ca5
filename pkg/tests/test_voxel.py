"""Count-grid construction: hand-traced cells, mass conservation, kernel parity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evadapt.errors import ValidationError
from evadapt.events import kernels
from evadapt.events.stream import EventStream, EventTensor
from evadapt.events.voxel import voxelize


def random_stream(seed, n, sensor_w, sensor_h):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 1_000_000, n)).astype(np.uint64)
    x = rng.integers(0, sensor_w, n).astype(np.uint16)
    y = rng.integers(0, sensor_h, n).astype(np.uint16)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return EventStream.from_arrays(t, x, y, p, sensor_w, sensor_h)


def test_empty_stream_gives_zero_tensor():
    tensor = voxelize(EventStream.empty(16, 16), 16, 16, 5)
    assert tensor.data.shape == (10, 16, 16)
    assert tensor.data.sum() == 0.0


def test_single_positive_event_hand_traced():
    # one event at (x=3, y=2), native resolution, one bin: exactly one count
    # in channel 0, row 2, column 3
    stream = EventStream.from_arrays([5], [3], [2], [1], 8, 8)
    tensor = voxelize(stream, 8, 8, 1)
    expected = np.zeros((2, 8, 8), np.float32)
    expected[0, 2, 3] = 1.0
    assert np.array_equal(tensor.data, expected)


def test_single_negative_event_lands_in_second_half():
    stream = EventStream.from_arrays([5], [3], [2], [-1], 8, 8)
    tensor = voxelize(stream, 8, 8, 4)
    assert tensor.data[4, 2, 3] == 1.0
    assert tensor.data.sum() == 1.0


def test_thousand_random_events_conserve_mass():
    stream = random_stream(0, 1000, 32, 32)
    assert voxelize(stream, 32, 32, 5).data.sum() == 1000.0


def test_time_binning_splits_first_and_last():
    stream = EventStream.from_arrays([0, 99], [0, 0], [0, 0], [1, 1], 4, 4)
    tensor = voxelize(stream, 4, 4, 3)
    assert tensor.data[0, 0, 0] == 1.0  # t_min -> first bin
    assert tensor.data[2, 0, 0] == 1.0  # t_max -> clipped into last bin


def test_identical_timestamps_fall_in_bin_zero():
    stream = EventStream.from_arrays([7, 7, 7], [0, 1, 2], [0, 0, 0], [1, 1, 1], 4, 4)
    tensor = voxelize(stream, 4, 4, 4)
    assert tensor.data[0].sum() == 3.0


def test_spatial_rescaling_nearest_integer():
    # sensor 64 -> grid 32: x=10 maps to round(10 * 32/64) = 5
    stream = EventStream.from_arrays([1], [10], [20], [1], 64, 64)
    tensor = voxelize(stream, 32, 32, 1)
    assert tensor.data[0, 10, 5] == 1.0


def test_invalid_bins_rejected():
    with pytest.raises(ValidationError):
        voxelize(EventStream.empty(8, 8), 8, 8, 0)


@given(
    n=st.integers(0, 300),
    seed=st.integers(0, 10_000),
    sensor=st.sampled_from([(16, 16), (64, 48), (304, 240)]),
    grid=st.sampled_from([8, 32]),
    bins=st.integers(1, 6),
)
@settings(max_examples=120, deadline=None)
def test_mass_conservation_property(n, seed, sensor, grid, bins):
    stream = random_stream(seed, n, sensor[0], sensor[1])
    tensor = voxelize(stream, grid, grid, bins)
    assert tensor.data.sum() == float(n)
    assert tensor.data.min() >= 0.0


@given(n=st.integers(0, 400), seed=st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_kernel_flavours_agree_bitwise(n, seed):
    stream = random_stream(seed, n, 48, 40)
    args = (
        stream.events["t"],
        stream.events["x"].astype(np.int64),
        stream.events["y"].astype(np.int64),
        stream.events["p"],
        48,
        40,
        5,
        32,
        32,
    )
    assert np.array_equal(
        kernels.accumulate_counts_numpy(*args), kernels.accumulate_counts_numba(*args)
    )


class TestEventTensorNormalization:
    def test_unit_max(self):
        stream = random_stream(1, 200, 16, 16)
        tensor = voxelize(stream, 16, 16, 2).normalized("unit_max")
        assert tensor.data.max() == 1.0
        assert tensor.normalization == "unit_max"

    def test_standardized(self):
        stream = random_stream(2, 200, 16, 16)
        tensor = voxelize(stream, 16, 16, 2).normalized("standardized")
        assert abs(tensor.data.mean()) < 1e-5
        assert abs(tensor.data.std() - 1.0) < 1e-4

    def test_channel_count_invariant(self):
        with pytest.raises(ValidationError):
            EventTensor(np.zeros((3, 4, 4), np.float32), bins=2)

    def test_negative_raw_counts_rejected(self):
        with pytest.raises(ValidationError):
            EventTensor(-np.ones((4, 4, 4), np.float32), bins=2)
