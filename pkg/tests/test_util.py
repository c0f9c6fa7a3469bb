"""Seed derivation, keyed generators, atomic writes, config hashing."""

import os

import numpy as np
import pytest

from trajclust.util import (
    atomic_write_bytes,
    atomic_write_text,
    config_hash,
    derive_seed,
    rng,
)


def test_derive_seed_deterministic():
    assert derive_seed(3, 14, 15) == derive_seed(3, 14, 15)


def test_derive_seed_distinguishes_keys():
    # distinct leading keys and distinct stream tags give distinct seeds
    # (trailing zero keys are absorbed by the underlying seed sequence,
    # which is why every stream tag in the library is a nonzero constant)
    seeds = {
        derive_seed(0),
        derive_seed(1),
        derive_seed(0, 1),
        derive_seed(0, 2),
        derive_seed(1, 2),
        derive_seed(2, 1),
    }
    assert len(seeds) == 6


def test_derive_seed_is_order_sensitive():
    assert derive_seed(1, 2) != derive_seed(2, 1)


def test_derive_seed_range():
    for keys in [(0,), (2**62, 5), (1, 2, 3, 4)]:
        s = derive_seed(*keys)
        assert 0 <= s < 2**64


def test_rng_reproducible():
    a = rng(9, 1).standard_normal(16)
    b = rng(9, 1).standard_normal(16)
    assert np.array_equal(a, b)


def test_rng_streams_decorrelated():
    a = rng(9, 1).standard_normal(16)
    b = rng(9, 2).standard_normal(16)
    assert not np.array_equal(a, b)


def test_atomic_write_bytes_round_trip(tmp_path):
    path = str(tmp_path / "blob.bin")
    atomic_write_bytes(path, b"\x00\x01payload")
    with open(path, "rb") as fh:
        assert fh.read() == b"\x00\x01payload"
    leftovers = [n for n in os.listdir(tmp_path) if n != "blob.bin"]
    assert leftovers == []


def test_atomic_write_overwrites_existing(tmp_path):
    path = str(tmp_path / "blob.bin")
    atomic_write_bytes(path, b"old")
    atomic_write_bytes(path, b"new")
    with open(path, "rb") as fh:
        assert fh.read() == b"new"


def test_atomic_write_failure_leaves_no_partial_file(tmp_path, monkeypatch):
    path = str(tmp_path / "blob.bin")

    def boom(src, dst):
        raise OSError("simulated rename failure")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write_bytes(path, b"data")
    monkeypatch.undo()
    assert os.listdir(tmp_path) == []


def test_atomic_write_text(tmp_path):
    path = str(tmp_path / "note.txt")
    atomic_write_text(path, "line\n")
    with open(path) as fh:
        assert fh.read() == "line\n"


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [2, 3]}) == config_hash({"b": [2, 3], "a": 1})


def test_config_hash_sees_value_changes():
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_config_hash_is_hex_sha256():
    h = config_hash({"a": 1})
    assert len(h) == 64
    int(h, 16)
