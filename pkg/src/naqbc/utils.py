"""Seeding and input-validation helpers shared across the package."""
from __future__ import annotations

import zlib

import numpy as np
from sklearn.utils import check_array

from .exceptions import ShapeError


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    if key is None:
        return 0
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(*keys) -> int:
    """Stable 64-bit seed from a tuple of ints/strings.

    Uses :class:`numpy.random.SeedSequence`, so the mapping is identical on every
    platform and numpy release that keeps the SeedSequence algorithm.
    """
    entropy = [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(seed, *keys) -> np.random.Generator:
    """Philox-backed generator (counter-based, Random123 reference sequence)."""
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("cannot derive sub-keys from an existing Generator")
        return seed
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_2d(x, n_features=None, name="X") -> np.ndarray:
    """Validate ``x`` as a finite float64 matrix; a 1-D vector becomes one row."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    arr = check_array(arr, dtype=np.float64, ensure_min_samples=0,
                      ensure_all_finite=True, input_name=name)
    if n_features is not None and arr.shape[1] != n_features:
        raise ShapeError(f"{name} has {arr.shape[1]} columns, expected {n_features}")
    return arr


def targets_2d(y, n_rows=None) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"targets must be 1-D or 2-D, got shape {arr.shape}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ShapeError(f"{arr.shape[0]} target rows for {n_rows} inputs")
    return arr
