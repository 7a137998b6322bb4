"""Input validation and random stream helpers shared by the estimators."""

from __future__ import annotations

import zlib

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DataError


def substream(seed, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named component derived from ``seed``.

    Changing how one component consumes randomness never shifts the stream
    seen by another.  ``seed=None`` draws fresh OS entropy.
    """
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *map(int, extra)])


def check_lengths(lengths, n_samples: int) -> np.ndarray:
    if lengths is None:
        return np.array([n_samples], dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64).ravel()
    if lengths.size == 0 or np.any(lengths < 1):
        raise DataError("every sequence must have at least one token")
    if lengths.sum() != n_samples:
        raise DataError(
            f"lengths sum to {int(lengths.sum())} but there are {n_samples} samples"
        )
    return lengths


def check_sequences(X, lengths=None, *, dtype="numeric", ensure_2d=True):
    """Validate a flat ``(n_tokens, ...)`` array and its sequence lengths."""
    X = check_array(X, dtype=dtype, ensure_2d=ensure_2d)
    return X, check_lengths(lengths, X.shape[0])


def concat_sequences(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of per-sequence arrays into ``(X, lengths)``."""
    seqs = [np.asarray(s) for s in seqs]
    if not seqs:
        raise DataError("no sequences given")
    return np.concatenate(seqs), np.array([len(s) for s in seqs], dtype=np.int64)


def split_sequences(flat, lengths) -> list[np.ndarray]:
    return np.split(np.asarray(flat), np.cumsum(lengths)[:-1])
