"""Memory bank of one unit-norm embedding per video.

Rows move by momentum-weighted interpolation toward fresh embeddings and are
re-normalized after every update, so the bank is always a set of points on
the unit sphere. The bank also owns the generator used for negative sampling,
which makes sampled-denominator training reproducible and resumable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .util import rng

_INIT_STREAM = 11
_SAMPLE_STREAM = 12


@dataclass
class EmbeddingBank:
    entries: np.ndarray  # (N, E) float64, unit-norm rows
    update_momentum: float  # fraction of the new embedding mixed in
    sampler: np.random.Generator


def init_bank(
    num_entries: int, dim: int, update_momentum: float, seed: int
) -> EmbeddingBank:
    if num_entries < 1 or dim < 1:
        raise ConfigError("bank needs at least one entry and one dimension")
    if not 0.0 <= update_momentum <= 1.0:
        raise ConfigError("update_momentum must lie in [0, 1]")
    r = rng(seed, _INIT_STREAM)
    entries = r.standard_normal((num_entries, dim))
    norms = np.linalg.norm(entries, axis=1, keepdims=True)
    if norms.min() == 0.0:
        raise NumericError("zero-norm row drawn at bank init")
    entries /= norms
    return EmbeddingBank(entries, float(update_momentum), rng(seed, _SAMPLE_STREAM))


def update(bank: EmbeddingBank, index: int, embedding: np.ndarray) -> None:
    """Move one row toward a fresh unit embedding and re-normalize.

    momentum 0 leaves the row untouched; momentum 1 replaces it exactly.
    """
    n = bank.entries.shape[0]
    if not 0 <= index < n:
        raise InputError(f"index {index} out of range for bank of size {n}")
    d = np.asarray(embedding, dtype=np.float64)
    if d.shape != (bank.entries.shape[1],):
        raise InputError("embedding dimension does not match bank")
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise InputError("embedding must be unit-norm")
    lam = bank.update_momentum
    if lam == 0.0:
        return
    if lam == 1.0:
        bank.entries[index] = d
        return
    mixed = (1.0 - lam) * bank.entries[index] + lam * d
    norm = np.linalg.norm(mixed)
    if norm == 0.0:
        raise NumericError(f"row {index}: interpolation cancelled to the zero vector")
    bank.entries[index] = mixed / norm


def sample_negatives(bank: EmbeddingBank, exclude, count: int) -> np.ndarray:
    """Uniform sample, without replacement, from indices outside ``exclude``."""
    n = bank.entries.shape[0]
    mask = np.ones(n, dtype=bool)
    excl = np.asarray(exclude, dtype=np.int64)
    if excl.size and (excl.min() < 0 or excl.max() >= n):
        raise InputError("exclude indices out of range")
    mask[excl] = False
    pool = np.flatnonzero(mask)
    if count > pool.size:
        raise ConfigError(
            f"cannot draw {count} negatives from a pool of {pool.size}"
        )
    return bank.sampler.choice(pool, size=count, replace=False)


def sampler_state(bank: EmbeddingBank) -> str:
    """Negative-sampler state as a JSON string (for checkpoints)."""
    return json.dumps(bank.sampler.bit_generator.state)


def restore_sampler(bank: EmbeddingBank, state: str) -> None:
    bank.sampler.bit_generator.state = json.loads(state)
