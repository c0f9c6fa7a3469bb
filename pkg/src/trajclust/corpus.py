"""Synthetic trajectory-descriptor corpora with independent appearance and motion factors.

A video is a bag of descriptors plus one pooled raw feature. Descriptors carry
both latent factors at full strength; the pooled feature attenuates the motion
block, so a network trained on pooled features sees an appearance-dominant view
while the descriptor bags stay motion-rich. That asymmetry is what makes the
descriptor-space cluster prior informative.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateDataError, FormatError, InputError
from .util import rng

CORPUS_MAGIC = b"TJC1"

_CENTER_STREAM = 1


@dataclass(frozen=True)
class LatentSpec:
    """Generator settings for a synthetic corpus."""

    num_appearance_classes: int = 8
    num_motion_classes: int = 8
    appearance_dim: int = 12
    motion_dim: int = 12
    appearance_scale: float = 1.0
    motion_scale: float = 3.0
    noise_sigma: float = 0.3
    trajectories_per_video: tuple[int, int] = (48, 96)
    seed: int = 12345
    motion_attenuation: float = 0.1

    @property
    def descriptor_dim(self) -> int:
        return self.appearance_dim + self.motion_dim

    def validate(self) -> None:
        if self.num_appearance_classes < 2 or self.num_motion_classes < 2:
            raise ConfigError("class counts must be at least 2")
        if self.appearance_dim < 1 or self.motion_dim < 1:
            raise ConfigError("block dimensions must be positive")
        if not (self.appearance_scale > 0 and self.motion_scale > 0):
            raise ConfigError("block scales must be strictly positive")
        if not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be strictly positive")
        lo, hi = self.trajectories_per_video
        if not 1 <= lo <= hi:
            raise ConfigError("trajectories_per_video must satisfy 1 <= lo <= hi")
        if not 0 <= self.seed < 2**63:
            raise ConfigError("seed must be a non-negative 63-bit integer")
        if not 0.0 <= self.motion_attenuation <= 1.0:
            raise ConfigError("motion_attenuation must lie in [0, 1]")


@dataclass(frozen=True)
class DescriptorBag:
    """All trajectory descriptors of one video, with its latent labels."""

    video_id: int
    descriptors: np.ndarray  # (T, descriptor_dim) float32
    appearance_label: int
    motion_label: int


@dataclass(frozen=True)
class RawVideoFeature:
    """Pooled per-video feature: descriptor mean with the motion block attenuated."""

    video_id: int
    feature: np.ndarray  # (descriptor_dim,) float32


def class_centers(spec: LatentSpec) -> tuple[np.ndarray, np.ndarray]:
    """Latent class centers, deterministic in the spec seed."""
    r = rng(spec.seed, _CENTER_STREAM)
    appearance = spec.appearance_scale * r.standard_normal(
        (spec.num_appearance_classes, spec.appearance_dim)
    )
    motion = spec.motion_scale * r.standard_normal(
        (spec.num_motion_classes, spec.motion_dim)
    )
    return appearance, motion


def _min_pairwise_distance(centers: np.ndarray) -> float:
    diffs = centers[:, None, :] - centers[None, :, :]
    d = np.sqrt((diffs**2).sum(axis=2))
    n = centers.shape[0]
    return float(d[~np.eye(n, dtype=bool)].min())


def generate_corpus(
    spec: LatentSpec, num_videos: int
) -> tuple[list[DescriptorBag], list[RawVideoFeature]]:
    """Draw a corpus of descriptor bags and pooled features.

    Each video gets its own generator seeded by ``spec.seed ^ video_id``, so
    videos can be regenerated independently and in any order.
    """
    spec.validate()
    min_videos = spec.num_appearance_classes * spec.num_motion_classes
    if num_videos < min_videos:
        raise ConfigError(
            f"num_videos must be at least {min_videos} "
            "(one per appearance/motion class pair)"
        )
    a_centers, m_centers = class_centers(spec)
    if _min_pairwise_distance(m_centers) <= 0.0:
        raise DegenerateDataError("motion class centers are not pairwise distinct")

    lo, hi = spec.trajectories_per_video
    split = spec.appearance_dim
    bags: list[DescriptorBag] = []
    raws: list[RawVideoFeature] = []
    for i in range(num_videos):
        r = np.random.default_rng(spec.seed ^ i)
        app = int(r.integers(spec.num_appearance_classes))
        mot = int(r.integers(spec.num_motion_classes))
        count = int(r.integers(lo, hi + 1))
        center = np.concatenate([a_centers[app], m_centers[mot]])
        descriptors = center + spec.noise_sigma * r.standard_normal(
            (count, spec.descriptor_dim)
        )
        pooled = descriptors.mean(axis=0)
        pooled[split:] *= spec.motion_attenuation
        feature = pooled + spec.noise_sigma * r.standard_normal(spec.descriptor_dim)
        bags.append(
            DescriptorBag(i, descriptors.astype(np.float32), app, mot)
        )
        raws.append(RawVideoFeature(i, feature.astype(np.float32)))
    return bags, raws


def feature_matrix(raws: list[RawVideoFeature]) -> np.ndarray:
    """Stack pooled features into an (N, dim) float64 matrix ordered by position."""
    if not raws:
        raise InputError("empty corpus")
    return np.stack([r.feature for r in raws]).astype(np.float64)


def label_arrays(bags: list[DescriptorBag]) -> tuple[np.ndarray, np.ndarray]:
    """(appearance_labels, motion_labels) as int64 arrays ordered by position."""
    if not bags:
        raise InputError("empty corpus")
    app = np.array([b.appearance_label for b in bags], dtype=np.int64)
    mot = np.array([b.motion_label for b in bags], dtype=np.int64)
    return app, mot


def write_corpus(
    path: str, bags: list[DescriptorBag], raws: list[RawVideoFeature]
) -> None:
    """Serialize a corpus; little-endian, float32 payloads, round-trips bit-exactly."""
    if len(bags) != len(raws):
        raise InputError("bag and feature lists differ in length")
    if not bags:
        raise InputError("refusing to write an empty corpus")
    desc_dim = bags[0].descriptors.shape[1]
    raw_dim = raws[0].feature.shape[0]
    out = bytearray()
    out += CORPUS_MAGIC
    out += struct.pack("<III", len(bags), desc_dim, raw_dim)
    for bag, raw in zip(bags, raws):
        if bag.video_id != raw.video_id:
            raise InputError("bag/feature video ids out of step")
        if bag.descriptors.shape[1] != desc_dim or raw.feature.shape[0] != raw_dim:
            raise InputError("inconsistent dimensions across videos")
        out += struct.pack(
            "<IIII",
            bag.video_id,
            bag.descriptors.shape[0],
            bag.appearance_label,
            bag.motion_label,
        )
        out += np.ascontiguousarray(raw.feature, dtype="<f4").tobytes()
        out += np.ascontiguousarray(bag.descriptors, dtype="<f4").tobytes()
    from .util import atomic_write_bytes

    atomic_write_bytes(path, bytes(out))


def read_corpus(path: str) -> tuple[list[DescriptorBag], list[RawVideoFeature]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CORPUS_MAGIC:
        raise FormatError(f"{path}: bad magic, not a corpus file")
    try:
        num, desc_dim, raw_dim = struct.unpack_from("<III", blob, 4)
        off = 16
        bags: list[DescriptorBag] = []
        raws: list[RawVideoFeature] = []
        for _ in range(num):
            vid, count, app, mot = struct.unpack_from("<IIII", blob, off)
            off += 16
            feat = np.frombuffer(blob, dtype="<f4", count=raw_dim, offset=off).copy()
            off += 4 * raw_dim
            desc = np.frombuffer(
                blob, dtype="<f4", count=count * desc_dim, offset=off
            ).copy()
            off += 4 * count * desc_dim
            bags.append(DescriptorBag(vid, desc.reshape(count, desc_dim), app, mot))
            raws.append(RawVideoFeature(vid, feat))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated corpus file") from exc
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes after corpus payload")
    return bags, raws
