"""Non-parametric contrastive objectives over a memory bank.

The probability of retrieving entry i for a query embedding d is a softmax
over bank rows at temperature tau:

    P(i | d) = exp(v_i . d / tau) / sum_j exp(v_j . d / tau)

The instance-recognition loss is -log P(i | d_i) for each batch element. The
local-aggregation loss scores the close neighbors of i against its background
neighbors:

    L_i = -log( P(C_i & B_i | d_i) / P(B_i | d_i) )

where the probability of a set is the sum of its members' probabilities. Both
set probabilities share one softmax denominator, so the denominator cancels;
the production path works entirely on the background logits and never forms
the full denominator. The reference path (`la_loss_reference`) keeps the
explicit denominator and exists to cross-check the cancellation.

With ``exact_denominator`` off, the denominator is estimated from a uniform
sample of M negatives scaled by N/M, plus exact terms for indices that must
appear (the positive; the whole background set for the aggregation loss).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bank import EmbeddingBank, sample_negatives
from .errors import ConfigError, InputError, TrainingError


@dataclass(frozen=True)
class IrConfig:
    """Shared knobs for both contrastive losses."""

    temperature: float = 0.07
    num_negatives: int = 128
    exact_denominator: bool = True

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ConfigError("temperature must be strictly positive")
        if self.num_negatives < 1:
            raise ConfigError("num_negatives must be positive")


@dataclass
class NeighborSets:
    """Per-video close (cluster-mates) and background (top dot-product) indices.

    Both lists hold sorted unique int64 arrays; every set contains its own
    video index.
    """

    close: list[np.ndarray]
    background: list[np.ndarray]

    def validate(self) -> None:
        if len(self.close) != len(self.background):
            raise InputError("close/background lists differ in length")
        for i, (c, b) in enumerate(zip(self.close, self.background)):
            if c.size == 0 or b.size == 0:
                raise InputError(f"video {i}: empty neighbor set")
            if i not in c or i not in b:
                raise InputError(f"video {i}: neighbor sets must contain the video")


def _check_embedding(embedding: np.ndarray, dim: int) -> np.ndarray:
    d = np.asarray(embedding, dtype=np.float64)
    if d.shape != (dim,):
        raise InputError(f"embedding must have shape ({dim},)")
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise InputError("embedding must be unit-norm")
    return d


def _log_denominator(
    logits: np.ndarray,
    bank: EmbeddingBank,
    cfg: IrConfig,
    mandatory: np.ndarray,
) -> float:
    """log of the (exact or estimated) softmax denominator.

    In sampled mode the mandatory indices contribute exactly and M uniformly
    sampled other indices stand in for the rest with weight N/M.
    """
    if cfg.exact_denominator:
        return float(logsumexp(logits))
    n = logits.shape[0]
    mand = np.unique(np.asarray(mandatory, dtype=np.int64))
    neg = sample_negatives(bank, mand, cfg.num_negatives)
    l_mand = logits[mand]
    l_neg = logits[neg]
    m = max(float(l_mand.max()), float(l_neg.max()))
    total = np.exp(l_mand - m).sum() + (n / cfg.num_negatives) * np.exp(l_neg - m).sum()
    return m + float(np.log(total))


def instance_prob(
    index: int,
    embedding: np.ndarray,
    bank: EmbeddingBank,
    cfg: IrConfig,
    mandatory=None,
) -> float:
    """P(index | embedding) under the bank softmax."""
    cfg.validate()
    n = bank.entries.shape[0]
    if not 0 <= index < n:
        raise InputError(f"index {index} out of range for bank of size {n}")
    d = _check_embedding(embedding, bank.entries.shape[1])
    logits = bank.entries @ d / cfg.temperature
    mand = np.array([index] if mandatory is None else list(mandatory) + [index])
    return float(np.exp(logits[index] - _log_denominator(logits, bank, cfg, mand)))


def set_prob(
    indices,
    embedding: np.ndarray,
    bank: EmbeddingBank,
    cfg: IrConfig,
    mandatory=None,
) -> float:
    """Probability of a set of entries: sum of member probabilities, one
    shared denominator evaluation."""
    cfg.validate()
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        raise InputError("empty index set")
    n = bank.entries.shape[0]
    if idx.min() < 0 or idx.max() >= n:
        raise InputError("set indices out of range")
    d = _check_embedding(embedding, bank.entries.shape[1])
    logits = bank.entries @ d / cfg.temperature
    mand = idx if mandatory is None else np.asarray(mandatory, dtype=np.int64)
    log_den = _log_denominator(logits, bank, cfg, np.append(mand, idx))
    return float(np.exp(logsumexp(logits[idx]) - log_den))


def ir_loss_and_grad(
    indices,
    embeddings: np.ndarray,
    bank: EmbeddingBank,
    cfg: IrConfig,
) -> tuple[float, np.ndarray]:
    """Mean instance-recognition loss over a batch and its gradient w.r.t.
    the batch embeddings.

    Bank rows are constants here; the gradient flows only through the query
    embeddings and is exact for whichever denominator mode is configured.
    """
    cfg.validate()
    d = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[0] != d.shape[0]:
        raise InputError("indices and embeddings disagree on batch size")
    entries = bank.entries
    n = entries.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InputError("batch indices out of range")
    batch = d.shape[0]
    tau = cfg.temperature

    if cfg.exact_denominator:
        logits = entries @ d.T / tau  # (N, B)
        log_z = logsumexp(logits, axis=0)
        losses = log_z - logits[idx, np.arange(batch)]
        probs = np.exp(logits - log_z[None, :])
        grad = (probs.T @ entries - entries[idx]) / tau / batch
        return float(losses.mean()), grad

    total = 0.0
    grad = np.zeros_like(d)
    for b in range(batch):
        i = int(idx[b])
        logits = entries @ d[b] / tau
        neg = sample_negatives(bank, np.array([i]), cfg.num_negatives)
        involved = np.concatenate([[i], neg])
        scale = np.concatenate([[1.0], np.full(neg.size, n / cfg.num_negatives)])
        l_inv = logits[involved]
        m = float(l_inv.max())
        weights = scale * np.exp(l_inv - m)
        z = weights.sum()
        total += (m + np.log(z)) - logits[i]
        grad[b] = ((weights / z) @ entries[involved] - entries[i]) / tau
    return float(total / batch), grad / batch


def la_loss_and_grad(
    indices,
    embeddings: np.ndarray,
    neighbors: NeighborSets,
    bank: EmbeddingBank,
    cfg: IrConfig,
) -> tuple[float, np.ndarray]:
    """Mean local-aggregation loss over a batch and its embedding gradient.

    Works on background logits only: the softmax denominator cancels in the
    ratio of set probabilities, so it is never computed. Independent of the
    denominator mode by construction.
    """
    cfg.validate()
    d = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[0] != d.shape[0]:
        raise InputError("indices and embeddings disagree on batch size")
    entries = bank.entries
    tau = cfg.temperature
    batch = d.shape[0]

    total = 0.0
    grad = np.zeros_like(d)
    for b in range(batch):
        i = int(idx[b])
        back = neighbors.background[i]
        mask = np.isin(back, neighbors.close[i], assume_unique=True)
        if not mask.any():
            raise TrainingError(
                f"video {i}: close and background neighbor sets are disjoint"
            )
        rows = entries[back]
        logits = rows @ d[b] / tau
        lse_back = logsumexp(logits)
        lse_close = logsumexp(logits[mask])
        total += lse_back - lse_close
        w_back = np.exp(logits - lse_back)
        w_close = np.exp(logits[mask] - lse_close)
        grad[b] = (w_back @ rows - w_close @ rows[mask]) / tau
    return float(total / batch), grad / batch


def la_loss_reference(
    indices,
    embeddings: np.ndarray,
    neighbors: NeighborSets,
    bank: EmbeddingBank,
    cfg: IrConfig,
) -> float:
    """Aggregation loss through explicit set probabilities.

    Keeps the full softmax denominator (exact or sampled, per the config),
    evaluated once per element and shared between numerator and denominator
    sets. Slower; exists to cross-check `la_loss_and_grad`.
    """
    cfg.validate()
    d = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    idx = np.asarray(indices, dtype=np.int64)
    entries = bank.entries
    tau = cfg.temperature

    total = 0.0
    for b in range(d.shape[0]):
        i = int(idx[b])
        back = neighbors.background[i]
        both = np.intersect1d(neighbors.close[i], back, assume_unique=True)
        if both.size == 0:
            raise TrainingError(
                f"video {i}: close and background neighbor sets are disjoint"
            )
        logits = entries @ d[b] / tau
        log_den = _log_denominator(logits, bank, cfg, back)
        log_p_back = float(logsumexp(logits[back])) - log_den
        log_p_both = float(logsumexp(logits[both])) - log_den
        total += -(log_p_both - log_p_back)
    return float(total / d.shape[0])
