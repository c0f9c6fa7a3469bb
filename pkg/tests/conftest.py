"""Shared fixtures: one small corpus and codebook reused across test modules."""

import numpy as np
import pytest

from trajclust.corpus import LatentSpec, generate_corpus
from trajclust.fisher import CodebookConfig, encode_corpus, fit_codebook


SMALL_SPEC = LatentSpec(
    num_appearance_classes=4,
    num_motion_classes=4,
    appearance_dim=8,
    motion_dim=8,
    trajectories_per_video=(24, 40),
    seed=202,
)

SMALL_CODEBOOK_CONFIG = CodebookConfig(
    gmm_components=4,
    sketch_dim=64,
    fit_videos=24,
    fit_descriptors=32,
    seed=5,
)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SMALL_SPEC, 48)


@pytest.fixture(scope="session")
def small_codebook(small_corpus):
    bags, _ = small_corpus
    return fit_codebook(bags, SMALL_CODEBOOK_CONFIG)


@pytest.fixture(scope="session")
def small_encoded(small_corpus, small_codebook):
    bags, _ = small_corpus
    return encode_corpus(bags, small_codebook)


@pytest.fixture()
def r():
    return np.random.default_rng(7)
