"""Small shared helpers: seed derivation, atomic file writes, config hashing."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np


def derive_seed(*keys: int) -> int:
    """Collapse a tuple of integer keys into one 64-bit seed.

    Every random stream in the library is seeded through this, so a single
    top-level seed fans out into decorrelated per-purpose streams.
    """
    seq = np.random.SeedSequence(list(keys))
    return int(seq.generate_state(1, np.uint64)[0])


def rng(*keys: int) -> np.random.Generator:
    """Generator seeded from a tuple of integer keys."""
    return np.random.default_rng(list(keys))


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write a file via temp-then-rename so no partial file is ever visible."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def config_hash(obj) -> str:
    """sha256 of a canonical JSON rendering; used to pair checkpoints with configs."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
