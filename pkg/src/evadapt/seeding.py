"""Deterministic sub-seed derivation.

Every stochastic choice in the package (augmentation draws, batch order,
weight init, toy-data noise) is a pure function of a root seed plus a few
string/int tags.  Deriving streams this way keeps replays and
checkpoint-resume bit-compatible without threading RNG state around.
"""

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


def derive_seed(root_seed: int, *tags) -> int:
    """Collapse (root_seed, tags...) into a single 63-bit seed."""
    ss = np.random.SeedSequence([int(root_seed)] + [_tag_to_int(t) for t in tags])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def rng_for(root_seed: int, *tags) -> np.random.Generator:
    """A fresh generator keyed by (root_seed, tags...)."""
    ss = np.random.SeedSequence([int(root_seed)] + [_tag_to_int(t) for t in tags])
    return np.random.default_rng(ss)
