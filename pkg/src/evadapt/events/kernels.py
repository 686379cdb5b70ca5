"""Hot numeric kernels, JIT-compiled with numba when available.

Two inner loops dominate event processing time: binning raw events into
count grids, and turning rendered intensity sequences into threshold-crossing
events for the synthetic benchmark.  Both ship in two interchangeable
flavours:

* a numba ``@njit`` version (default), and
* a pure-numpy version, selected by setting ``EVADAPT_NUMBA=0`` in the
  environment (also used automatically when numba is not importable).

The two flavours are written against the same index math and emit events in
the same canonical order, so their outputs are bit-identical; the test suite
asserts this and ``benchmarks/bench_kernels.py`` times them against each
other.
"""

import os

import numpy as np


def numba_requested() -> bool:
    flag = os.environ.get("EVADAPT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


USING_NUMBA = False
if numba_requested():
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False

if not USING_NUMBA:

    def njit(*args, **kwargs):
        # identity decorator so the same source defines the numpy build
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# Event binning
# ---------------------------------------------------------------------------


def accumulate_counts_numpy(t, x, y, p, sensor_w, sensor_h, bins, height, width):
    """Vectorized reference path: one count per event, nearest-integer scaling."""
    grid = np.zeros((2 * bins, height, width), dtype=np.float32)
    n = len(t)
    if n == 0:
        return grid
    t = t.astype(np.float64)
    t0, t1 = t[0], t[-1]
    span = t1 - t0
    if span <= 0:
        bin_idx = np.zeros(n, dtype=np.int64)
    else:
        bin_idx = np.minimum(((t - t0) / span * bins).astype(np.int64), bins - 1)
    col = np.minimum((x.astype(np.float64) * width / sensor_w + 0.5).astype(np.int64), width - 1)
    row = np.minimum((y.astype(np.float64) * height / sensor_h + 0.5).astype(np.int64), height - 1)
    chan = np.where(p > 0, bin_idx, bins + bin_idx)
    np.add.at(grid, (chan, row, col), np.float32(1.0))
    return grid


@njit(cache=True)
def _accumulate_counts_jit(t, x, y, p, sensor_w, sensor_h, bins, height, width):  # pragma: no cover - numba
    grid = np.zeros((2 * bins, height, width), dtype=np.float32)
    n = len(t)
    if n == 0:
        return grid
    t0 = np.float64(t[0])
    span = np.float64(t[-1]) - t0
    for i in range(n):
        if span <= 0:
            b = 0
        else:
            b = int((np.float64(t[i]) - t0) / span * bins)
            if b > bins - 1:
                b = bins - 1
        col = int(np.float64(x[i]) * width / sensor_w + 0.5)
        if col > width - 1:
            col = width - 1
        row = int(np.float64(y[i]) * height / sensor_h + 0.5)
        if row > height - 1:
            row = height - 1
        if p[i] > 0:
            grid[b, row, col] += np.float32(1.0)
        else:
            grid[bins + b, row, col] += np.float32(1.0)
    return grid


def accumulate_counts_numba(t, x, y, p, sensor_w, sensor_h, bins, height, width):
    return _accumulate_counts_jit(
        np.ascontiguousarray(t, dtype=np.uint64),
        np.ascontiguousarray(x, dtype=np.int64),
        np.ascontiguousarray(y, dtype=np.int64),
        np.ascontiguousarray(p, dtype=np.int8),
        sensor_w,
        sensor_h,
        bins,
        height,
        width,
    )


# ---------------------------------------------------------------------------
# Threshold crossings for the synthetic event generator
# ---------------------------------------------------------------------------
#
# Per pixel, track the index of the last-crossed log-intensity level on the
# fixed grid {k * theta}.  A step from l_prev to l_cur crosses
# floor(l_cur/theta) - floor(l_prev/theta) levels; each crossing emits one
# event whose polarity is the sign of the change and whose timestamp is the
# linear interpolation of the crossing point inside the step interval.
# Anchoring levels on a fixed grid (rather than on each pixel's first value)
# makes the emitted polarity multiset flip exactly when a trajectory is
# reversed.


def level_crossing_events_numpy(log_frames, theta, t_start_us, dt_us):
    frames = np.asarray(log_frames, dtype=np.float64)
    levels = np.floor(frames / theta).astype(np.int64)
    counts = levels[1:] - levels[:-1]  # signed crossings per (step, y, x)

    total = int(np.abs(counts).sum())
    out_t = np.empty(total, dtype=np.uint64)
    out_x = np.empty(total, dtype=np.uint16)
    out_y = np.empty(total, dtype=np.uint16)
    out_p = np.empty(total, dtype=np.int8)
    if total == 0:
        return out_t, out_x, out_y, out_p

    # np.nonzero walks cells in the same step-major, row-major order as the
    # jit loop, so both flavours emit identical event sequences
    step_idx, yy, xx = np.nonzero(counts)
    cell_counts = np.abs(counts[step_idx, yy, xx])
    rep = np.repeat(np.arange(len(step_idx)), cell_counts)
    # ordinal of each event within its cell: 1..|n|
    ordinal = np.arange(total) - np.repeat(np.cumsum(cell_counts) - cell_counts, cell_counts) + 1

    sgn = np.sign(counts[step_idx, yy, xx])[rep]
    base = levels[step_idx, yy, xx][rep]
    lev = np.where(sgn > 0, base + ordinal, base - ordinal + 1)

    lp = frames[step_idx, yy, xx][rep]
    lc = frames[step_idx + 1, yy, xx][rep]
    frac = (lev * theta - lp) / (lc - lp)
    out_t[:] = (t_start_us + step_idx[rep] * dt_us + (frac * dt_us).astype(np.int64)).astype(
        np.uint64
    )
    out_x[:] = xx[rep].astype(np.uint16)
    out_y[:] = yy[rep].astype(np.uint16)
    out_p[:] = sgn.astype(np.int8)
    return out_t, out_x, out_y, out_p


@njit(cache=True)
def _level_crossing_events_jit(frames, theta, t_start_us, dt_us):  # pragma: no cover - numba
    steps = frames.shape[0] - 1
    h, w = frames.shape[1], frames.shape[2]

    total = 0
    for k in range(steps):
        for yy in range(h):
            for xx in range(w):
                n = int(np.floor(frames[k + 1, yy, xx] / theta)) - int(
                    np.floor(frames[k, yy, xx] / theta)
                )
                total += n if n > 0 else -n

    out_t = np.empty(total, dtype=np.uint64)
    out_x = np.empty(total, dtype=np.uint16)
    out_y = np.empty(total, dtype=np.uint16)
    out_p = np.empty(total, dtype=np.int8)

    idx = 0
    for k in range(steps):
        for yy in range(h):
            for xx in range(w):
                lp = frames[k, yy, xx]
                lc = frames[k + 1, yy, xx]
                base = int(np.floor(lp / theta))
                n = int(np.floor(lc / theta)) - base
                if n == 0:
                    continue
                mag = n if n > 0 else -n
                for i in range(1, mag + 1):
                    if n > 0:
                        lev = base + i
                        pol = 1
                    else:
                        lev = base - i + 1
                        pol = -1
                    frac = (lev * theta - lp) / (lc - lp)
                    out_t[idx] = np.uint64(t_start_us + k * dt_us + int(frac * dt_us))
                    out_x[idx] = np.uint16(xx)
                    out_y[idx] = np.uint16(yy)
                    out_p[idx] = np.int8(pol)
                    idx += 1
    return out_t, out_x, out_y, out_p


def level_crossing_events_numba(log_frames, theta, t_start_us, dt_us):
    return _level_crossing_events_jit(
        np.ascontiguousarray(log_frames, dtype=np.float64), float(theta), int(t_start_us), int(dt_us)
    )


if USING_NUMBA:
    accumulate_counts = accumulate_counts_numba
    level_crossing_events = level_crossing_events_numba
else:
    accumulate_counts = accumulate_counts_numpy
    level_crossing_events = level_crossing_events_numpy
