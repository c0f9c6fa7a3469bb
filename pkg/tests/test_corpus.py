"""Synthetic corpus generation and the corpus file format."""

import numpy as np
import pytest

import trajclust.corpus as corpus_mod
from trajclust.corpus import (
    DescriptorBag,
    LatentSpec,
    RawVideoFeature,
    class_centers,
    feature_matrix,
    generate_corpus,
    label_arrays,
    read_corpus,
    write_corpus,
)
from trajclust.errors import (
    ConfigError,
    DegenerateDataError,
    FormatError,
    InputError,
)

SPEC = LatentSpec(
    num_appearance_classes=3,
    num_motion_classes=3,
    appearance_dim=5,
    motion_dim=4,
    trajectories_per_video=(6, 11),
    seed=99,
)


def test_fixed_seed_reproduces_the_corpus():
    bags_a, raws_a = generate_corpus(SPEC, 12)
    bags_b, raws_b = generate_corpus(SPEC, 12)
    for a, b in zip(bags_a, bags_b):
        assert a.video_id == b.video_id
        assert np.array_equal(a.descriptors, b.descriptors)
        assert (a.appearance_label, a.motion_label) == (
            b.appearance_label,
            b.motion_label,
        )
    for a, b in zip(raws_a, raws_b):
        assert np.array_equal(a.feature, b.feature)


def test_videos_are_independent_of_corpus_size():
    # each video has its own generator, so a prefix of a larger corpus
    # matches the smaller corpus bit for bit
    small, _ = generate_corpus(SPEC, 9)
    large, _ = generate_corpus(SPEC, 18)
    for a, b in zip(small, large):
        assert np.array_equal(a.descriptors, b.descriptors)


def test_video_replay_oracle():
    # re-derive one video from the documented per-video stream
    bags, raws = generate_corpus(SPEC, 12)
    a_centers, m_centers = class_centers(SPEC)
    i = 7
    r = np.random.default_rng(SPEC.seed ^ i)
    app = int(r.integers(SPEC.num_appearance_classes))
    mot = int(r.integers(SPEC.num_motion_classes))
    lo, hi = SPEC.trajectories_per_video
    count = int(r.integers(lo, hi + 1))
    center = np.concatenate([a_centers[app], m_centers[mot]])
    desc = center + SPEC.noise_sigma * r.standard_normal(
        (count, SPEC.descriptor_dim)
    )
    pooled = desc.mean(axis=0)
    pooled[SPEC.appearance_dim :] *= SPEC.motion_attenuation
    feat = pooled + SPEC.noise_sigma * r.standard_normal(SPEC.descriptor_dim)

    assert bags[i].appearance_label == app
    assert bags[i].motion_label == mot
    assert np.array_equal(bags[i].descriptors, desc.astype(np.float32))
    assert np.array_equal(raws[i].feature, feat.astype(np.float32))


def test_trajectory_counts_stay_in_range():
    bags, _ = generate_corpus(SPEC, 30)
    lo, hi = SPEC.trajectories_per_video
    counts = [b.descriptors.shape[0] for b in bags]
    assert min(counts) >= lo and max(counts) <= hi


def test_labels_stay_in_range():
    bags, _ = generate_corpus(SPEC, 30)
    for b in bags:
        assert 0 <= b.appearance_label < SPEC.num_appearance_classes
        assert 0 <= b.motion_label < SPEC.num_motion_classes


def test_same_class_pair_still_differs_in_descriptors():
    bags, _ = generate_corpus(SPEC, 60)
    by_pair = {}
    for b in bags:
        by_pair.setdefault((b.appearance_label, b.motion_label), []).append(b)
    twins = next(v for v in by_pair.values() if len(v) >= 2)
    assert not np.array_equal(
        twins[0].descriptors[:1], twins[1].descriptors[:1]
    )


def test_motion_block_is_attenuated_in_pooled_features():
    spec = LatentSpec(
        num_appearance_classes=2,
        num_motion_classes=2,
        appearance_dim=6,
        motion_dim=6,
        appearance_scale=1.0,
        motion_scale=1.0,
        noise_sigma=0.01,
        motion_attenuation=0.1,
        seed=4,
    )
    bags, raws = generate_corpus(spec, 16)
    feats = feature_matrix(raws)
    app_energy = float((feats[:, :6] ** 2).mean())
    mot_energy = float((feats[:, 6:] ** 2).mean())
    assert mot_energy < app_energy * 0.25


def test_too_few_videos_is_rejected():
    with pytest.raises(ConfigError):
        generate_corpus(SPEC, SPEC.num_appearance_classes * SPEC.num_motion_classes - 1)


def test_degenerate_motion_centers_are_rejected(monkeypatch):
    a_centers, m_centers = class_centers(SPEC)
    broken = m_centers.copy()
    broken[1] = broken[0]

    monkeypatch.setattr(
        corpus_mod, "class_centers", lambda spec: (a_centers, broken)
    )
    with pytest.raises(DegenerateDataError):
        generate_corpus(SPEC, 9)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"num_appearance_classes": 1},
        {"num_motion_classes": 1},
        {"appearance_dim": 0},
        {"motion_dim": 0},
        {"appearance_scale": 0.0},
        {"motion_scale": -1.0},
        {"noise_sigma": 0.0},
        {"trajectories_per_video": (0, 5)},
        {"trajectories_per_video": (9, 3)},
        {"seed": -1},
        {"motion_attenuation": 1.5},
    ],
)
def test_latent_spec_validation(kwargs):
    spec = LatentSpec(**kwargs)
    with pytest.raises(ConfigError):
        spec.validate()


def test_feature_matrix_and_labels_align():
    bags, raws = generate_corpus(SPEC, 12)
    feats = feature_matrix(raws)
    app, mot = label_arrays(bags)
    assert feats.shape == (12, SPEC.descriptor_dim)
    assert feats.dtype == np.float64
    assert app.shape == mot.shape == (12,)
    assert app[3] == bags[3].appearance_label


def test_feature_matrix_rejects_empty():
    with pytest.raises(InputError):
        feature_matrix([])
    with pytest.raises(InputError):
        label_arrays([])


def test_corpus_file_round_trip(tmp_path):
    bags, raws = generate_corpus(SPEC, 12)
    path = str(tmp_path / "c.tjc")
    write_corpus(path, bags, raws)
    bags2, raws2 = read_corpus(path)
    assert len(bags2) == len(bags)
    for a, b in zip(bags, bags2):
        assert a.video_id == b.video_id
        assert a.appearance_label == b.appearance_label
        assert a.motion_label == b.motion_label
        assert a.descriptors.dtype == b.descriptors.dtype == np.float32
        assert np.array_equal(a.descriptors, b.descriptors)
    for a, b in zip(raws, raws2):
        assert np.array_equal(a.feature, b.feature)


def test_corpus_file_bad_magic(tmp_path):
    path = str(tmp_path / "c.tjc")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError):
        read_corpus(path)


def test_corpus_file_truncated(tmp_path):
    bags, raws = generate_corpus(SPEC, 9)
    path = str(tmp_path / "c.tjc")
    write_corpus(path, bags, raws)
    with open(path, "rb") as fh:
        blob = fh.read()
    with open(path, "wb") as fh:
        fh.write(blob[: len(blob) // 2])
    with pytest.raises(FormatError):
        read_corpus(path)


def test_corpus_file_trailing_bytes(tmp_path):
    bags, raws = generate_corpus(SPEC, 9)
    path = str(tmp_path / "c.tjc")
    write_corpus(path, bags, raws)
    with open(path, "ab") as fh:
        fh.write(b"extra")
    with pytest.raises(FormatError):
        read_corpus(path)


def test_write_corpus_rejects_bad_input(tmp_path):
    bags, raws = generate_corpus(SPEC, 9)
    path = str(tmp_path / "c.tjc")
    with pytest.raises(InputError):
        write_corpus(path, bags, raws[:-1])
    with pytest.raises(InputError):
        write_corpus(path, [], [])
    swapped = [raws[1], raws[0]] + raws[2:]
    with pytest.raises(InputError):
        write_corpus(path, bags, swapped)


def test_write_corpus_rejects_inconsistent_dims(tmp_path):
    bags, raws = generate_corpus(SPEC, 9)
    odd = DescriptorBag(
        bags[1].video_id,
        np.zeros((4, SPEC.descriptor_dim + 1), dtype=np.float32),
        0,
        0,
    )
    with pytest.raises(InputError):
        write_corpus(str(tmp_path / "c.tjc"), [bags[0], odd], raws[:2])
