"""Fisher-vector encoding of descriptor bags, with count-sketch compression.

Stages, in order: PCA projection of raw descriptors, soft assignment under a
diagonal-covariance Gaussian mixture, per-trajectory Fisher encoding, bag
averaging, signed power normalization, l2 normalization, count sketch, and a
final l2 normalization of the sketched vector.

For mixture component k with weight w_k, mean mu_k and per-dimension standard
deviation sigma_k, a trajectory x contributes

    block_k(x) = gamma_k(x) / sqrt(w_k) * [ z,  (z^2 - 1) / sqrt(2) ]

where z = (x - mu_k) / sigma_k elementwise and gamma_k(x) is the posterior
responsibility of component k. Concatenating the K blocks gives a vector of
exactly 2*K*D entries whose per-component layout is D first-order values
followed by D second-order values.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .clustering import kmeans
from .corpus import DescriptorBag
from .errors import (
    ConfigError,
    DegenerateDataError,
    FitError,
    FormatError,
    InputError,
    NormalizationError,
)
from .util import atomic_write_bytes, derive_seed, rng

ENCODED_MAGIC = b"TJF1"

_FIT_STREAM = 21
_SKETCH_STREAM = 22
_GMM_STREAM = 23

_VAR_FLOOR_SCALE = 1e-4
_COLLAPSE_MASS = 1e-8
_MAX_RESEEDS = 5


# ---------------------------------------------------------------- PCA


@dataclass
class PcaModel:
    mean: np.ndarray  # (raw_dim,)
    basis: np.ndarray  # (D, raw_dim), orthonormal rows, decreasing variance
    retained_fraction: float

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.basis.T


def fit_pca(sample: np.ndarray, variance_fraction: float) -> PcaModel:
    """PCA keeping the smallest number of components whose cumulative
    explained variance reaches ``variance_fraction`` of the total."""
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("sample must be 2-d")
    n, d = x.shape
    if n <= d:
        raise ConfigError(f"need more samples ({n}) than dimensions ({d})")
    if not 0.0 < variance_fraction <= 1.0:
        raise ConfigError("variance_fraction must lie in (0, 1]")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    explained = svals**2 / (n - 1)
    if not explained[0] > 0.0:
        raise DegenerateDataError("no component with positive variance")
    cum = np.cumsum(explained)
    total = cum[-1]
    target = variance_fraction * total
    ncomp = int(np.searchsorted(cum, target - 1e-12 * total) + 1)
    ncomp = min(ncomp, d)
    return PcaModel(mean, vt[:ncomp].copy(), float(cum[ncomp - 1] / total))


# ---------------------------------------------------------------- GMM


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,), positive, sums to 1
    means: np.ndarray  # (K, D)
    stds: np.ndarray  # (K, D), floored away from zero
    log_likelihoods: np.ndarray  # total data log-likelihood per EM iteration


def _gmm_log_joint(
    x: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> np.ndarray:
    """log(w_k * N(x; mu_k, diag(var_k))), shape (n, K)."""
    d = x.shape[1]
    z2 = ((x[:, None, :] - means[None, :, :]) ** 2 / variances[None, :, :]).sum(axis=2)
    log_det = np.log(variances).sum(axis=1)
    return np.log(weights)[None, :] - 0.5 * (
        d * np.log(2.0 * np.pi) + log_det[None, :] + z2
    )


def fit_gmm(
    sample: np.ndarray,
    num_components: int,
    max_iters: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
) -> GmmModel:
    """Diagonal-covariance EM from a k-means start.

    Variances are floored at 1e-4 of the global per-dimension variance. A
    component whose responsibility mass falls below 1e-8 is re-seeded from the
    lowest-likelihood point; more than 5 re-seeds abort the fit.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("sample must be 2-d")
    n, d = x.shape
    if num_components < 1:
        raise ConfigError("num_components must be positive")
    if n < 10 * num_components:
        raise ConfigError(
            f"need at least {10 * num_components} points for {num_components} "
            f"components, got {n}"
        )
    global_var = x.var(axis=0)
    if np.any(global_var <= 0.0):
        raise DegenerateDataError("a sample dimension has zero variance")
    floor = _VAR_FLOOR_SCALE * global_var

    start = kmeans(x, num_components, seed=seed)
    counts = np.bincount(start.assignment, minlength=num_components)
    weights = counts / n
    means = start.centroids.copy()
    variances = np.empty((num_components, d))
    for k in range(num_components):
        members = x[start.assignment == k]
        variances[k] = np.maximum(members.var(axis=0), floor)

    history: list[float] = []
    prev_ll = -np.inf
    reseeds = 0
    for _ in range(max_iters):
        log_joint = _gmm_log_joint(x, weights, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        history.append(ll)
        if ll - prev_ll < tol:
            break
        prev_ll = ll

        resp = np.exp(log_joint - log_norm[:, None])
        mass = resp.sum(axis=0)
        collapsed = np.flatnonzero(mass < _COLLAPSE_MASS)
        if collapsed.size:
            reseeds += collapsed.size
            if reseeds > _MAX_RESEEDS:
                raise FitError(f"{reseeds} component re-seeds; mixture keeps collapsing")
            worst = np.argsort(log_norm)  # least-likely points first
            for j, k in enumerate(collapsed):
                means[k] = x[worst[j]]
                variances[k] = np.maximum(global_var, floor)
                weights[k] = 1.0 / n
            weights = weights / weights.sum()
            prev_ll = -np.inf  # comparison across a re-seed is meaningless
            continue

        weights = mass / n
        means = (resp.T @ x) / mass[:, None]
        second = (resp.T @ (x**2)) / mass[:, None]
        variances = np.maximum(second - means**2, floor)

    return GmmModel(weights, means, np.sqrt(variances), np.array(history))


def gmm_log_responsibilities(
    gmm: GmmModel, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(log responsibilities (n, K), per-point log-likelihood (n,))."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    log_joint = _gmm_log_joint(pts, gmm.weights, gmm.means, gmm.stds**2)
    log_norm = logsumexp(log_joint, axis=1)
    return log_joint - log_norm[:, None], log_norm


# ---------------------------------------------------------------- sketch


@dataclass(frozen=True)
class SketchProjection:
    """Signed-bucket linear map: out[b] = sum over j with bucket[j] == b of
    sign[j] * z[j]."""

    input_dim: int
    output_dim: int
    bucket: np.ndarray  # (input_dim,) int64 in [0, output_dim)
    sign: np.ndarray  # (input_dim,) int64 in {-1, +1}
    seed: int


def make_sketch(input_dim: int, output_dim: int, seed: int) -> SketchProjection:
    if input_dim < 1 or output_dim < 1:
        raise ConfigError("sketch dimensions must be positive")
    r = rng(seed, _SKETCH_STREAM)
    bucket = r.integers(0, output_dim, size=input_dim)
    sign = 2 * r.integers(0, 2, size=input_dim) - 1
    return SketchProjection(input_dim, output_dim, bucket, sign, seed)


def sketch_apply(z: np.ndarray, sketch: SketchProjection) -> np.ndarray:
    v = np.asarray(z, dtype=np.float64)
    if v.shape != (sketch.input_dim,):
        raise InputError(
            f"sketch expects input of dimension {sketch.input_dim}, got {v.shape}"
        )
    return np.bincount(
        sketch.bucket, weights=sketch.sign * v, minlength=sketch.output_dim
    )


# ---------------------------------------------------------------- encoding


def encode_trajectories(x: np.ndarray, gmm: GmmModel) -> np.ndarray:
    """Fisher blocks for a matrix of post-PCA descriptors, shape (n, 2*K*D)."""
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    log_resp, _ = gmm_log_responsibilities(gmm, pts)
    gamma = np.exp(log_resp)  # (n, K)
    z = (pts[:, None, :] - gmm.means[None, :, :]) / gmm.stds[None, :, :]
    second = (z**2 - 1.0) / np.sqrt(2.0)
    coeff = gamma / np.sqrt(gmm.weights)[None, :]
    blocks = coeff[:, :, None] * np.concatenate([z, second], axis=2)
    n = pts.shape[0]
    return blocks.reshape(n, 2 * gmm.means.shape[0] * gmm.means.shape[1])


def encode_trajectory(x: np.ndarray, gmm: GmmModel) -> np.ndarray:
    """Fisher encoding of one post-PCA descriptor, dimension exactly 2*K*D."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != gmm.means.shape[1]:
        raise InputError(
            f"descriptor must have dimension {gmm.means.shape[1]}, got {v.shape}"
        )
    return encode_trajectories(v[None, :], gmm)[0]


@dataclass
class FisherCodebook:
    """Everything needed to turn a descriptor bag into one fixed-length vector."""

    pca: PcaModel
    gmm: GmmModel
    power_alpha: float
    sketch: SketchProjection
    seed: int


@dataclass(frozen=True)
class CodebookConfig:
    variance_fraction: float = 0.9
    gmm_components: int = 16
    gmm_max_iters: int = 200
    gmm_tol: float = 1e-6
    power_alpha: float = 0.5
    sketch_dim: int = 256
    fit_videos: int = 64
    fit_descriptors: int = 64
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.variance_fraction <= 1.0:
            raise ConfigError("variance_fraction must lie in (0, 1]")
        if min(self.gmm_components, self.sketch_dim, self.fit_videos,
               self.fit_descriptors, self.gmm_max_iters) < 1:
            raise ConfigError("counts must be positive")
        if not 0.0 < self.power_alpha <= 1.0:
            raise ConfigError("power_alpha must lie in (0, 1]")


def fit_codebook(bags: list[DescriptorBag], config: CodebookConfig) -> FisherCodebook:
    """Fit PCA, the mixture, and the sketch on a subsample of the corpus."""
    config.validate()
    if not bags:
        raise InputError("empty corpus")
    r = rng(config.seed, _FIT_STREAM)
    chosen = r.choice(len(bags), size=min(config.fit_videos, len(bags)), replace=False)
    rows = []
    for j in chosen:
        bag = bags[int(j)]
        t = bag.descriptors.shape[0]
        take = min(config.fit_descriptors, t)
        sel = np.sort(r.choice(t, size=take, replace=False))
        rows.append(bag.descriptors[sel].astype(np.float64))
    sample = np.vstack(rows)
    pca = fit_pca(sample, config.variance_fraction)
    projected = pca.project(sample)
    gmm = fit_gmm(
        projected,
        config.gmm_components,
        max_iters=config.gmm_max_iters,
        tol=config.gmm_tol,
        seed=derive_seed(config.seed, _GMM_STREAM),
    )
    fisher_dim = 2 * gmm.means.shape[0] * gmm.means.shape[1]
    sketch = make_sketch(fisher_dim, config.sketch_dim, config.seed)
    return FisherCodebook(pca, gmm, config.power_alpha, sketch, config.seed)


def encode_bag(bag: DescriptorBag, codebook: FisherCodebook) -> np.ndarray:
    """One unit-norm sketched Fisher vector for a whole bag."""
    if bag.descriptors.size == 0:
        raise InputError(f"video {bag.video_id}: empty descriptor bag")
    if bag.descriptors.shape[1] != codebook.pca.mean.shape[0]:
        raise InputError(
            f"video {bag.video_id}: descriptor dimension "
            f"{bag.descriptors.shape[1]} does not match codebook"
        )
    # Averaging in floats is order sensitive, so fix a canonical row order
    # to make the encoding exactly independent of trajectory order.
    order = np.lexsort(bag.descriptors.T[::-1])
    projected = codebook.pca.project(bag.descriptors[order])
    pooled = encode_trajectories(projected, codebook.gmm).mean(axis=0)
    powered = np.sign(pooled) * np.abs(pooled) ** codebook.power_alpha
    norm = np.linalg.norm(powered)
    if norm == 0.0:
        raise NormalizationError(
            f"video {bag.video_id}: zero vector before l2 normalization"
        )
    sketched = sketch_apply(powered / norm, codebook.sketch)
    s_norm = np.linalg.norm(sketched)
    if s_norm == 0.0:
        raise NormalizationError(
            f"video {bag.video_id}: sketch collapsed the encoding to zero"
        )
    return sketched / s_norm


def encode_corpus(bags: list[DescriptorBag], codebook: FisherCodebook) -> np.ndarray:
    """Encode every bag; rows ordered by corpus position, float32.

    float32 here makes in-memory vectors bit-identical to a file round-trip.
    """
    if not bags:
        raise InputError("empty corpus")
    out = np.empty((len(bags), codebook.sketch.output_dim), dtype=np.float32)
    for pos, bag in enumerate(bags):
        out[pos] = encode_bag(bag, codebook).astype(np.float32)
    return out


# ---------------------------------------------------------------- files


def save_codebook(path: str, codebook: FisherCodebook) -> None:
    buf = io.BytesIO()
    np.savez(
        buf,
        **{
            "pca.mean": codebook.pca.mean,
            "pca.basis": codebook.pca.basis,
            "pca.retained": np.float64(codebook.pca.retained_fraction),
            "gmm.w": codebook.gmm.weights,
            "gmm.mu": codebook.gmm.means,
            "gmm.sigma": codebook.gmm.stds,
            "gmm.loglik": codebook.gmm.log_likelihoods,
            "sketch.bucket": codebook.sketch.bucket,
            "sketch.sign": codebook.sketch.sign,
            "alpha": np.float64(codebook.power_alpha),
            "seed": np.int64(codebook.seed),
            "dims": np.array(
                [
                    codebook.pca.mean.shape[0],
                    codebook.gmm.means.shape[1],
                    codebook.gmm.means.shape[0],
                    codebook.sketch.output_dim,
                ],
                dtype=np.int64,
            ),
        },
    )
    atomic_write_bytes(path, buf.getvalue())


def load_codebook(path: str) -> FisherCodebook:
    try:
        with np.load(path, allow_pickle=False) as data:
            dims = data["dims"]
            pca = PcaModel(
                data["pca.mean"], data["pca.basis"], float(data["pca.retained"])
            )
            gmm = GmmModel(
                data["gmm.w"], data["gmm.mu"], data["gmm.sigma"], data["gmm.loglik"]
            )
            sketch = SketchProjection(
                int(2 * dims[2] * dims[1]),
                int(dims[3]),
                data["sketch.bucket"],
                data["sketch.sign"],
                int(data["seed"]),
            )
            return FisherCodebook(pca, gmm, float(data["alpha"]), sketch, int(data["seed"]))
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"{path}: not a codebook file") from exc


def write_encoded(path: str, video_ids: np.ndarray, vectors: np.ndarray) -> None:
    """Serialize encoded vectors: header then (id, float32 row) records."""
    ids = np.asarray(video_ids, dtype=np.int64)
    vecs = np.ascontiguousarray(vectors, dtype="<f4")
    if ids.shape[0] != vecs.shape[0]:
        raise InputError("ids and vectors disagree on corpus size")
    out = bytearray()
    out += ENCODED_MAGIC
    out += struct.pack("<II", vecs.shape[0], vecs.shape[1])
    for vid, row in zip(ids, vecs):
        out += struct.pack("<I", int(vid))
        out += row.tobytes()
    atomic_write_bytes(path, bytes(out))


def read_encoded(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != ENCODED_MAGIC:
        raise FormatError(f"{path}: bad magic, not an encoded-corpus file")
    try:
        num, dim = struct.unpack_from("<II", blob, 4)
        ids = np.empty(num, dtype=np.int64)
        vecs = np.empty((num, dim), dtype=np.float32)
        off = 12
        for i in range(num):
            (vid,) = struct.unpack_from("<I", blob, off)
            ids[i] = vid
            off += 4
            vecs[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated encoded-corpus file") from exc
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes after encoded payload")
    ids_arr = ids
    return ids_arr, vecs
