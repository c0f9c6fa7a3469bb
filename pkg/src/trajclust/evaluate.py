"""Representation-quality reports: few-shot linear probes, clustering
agreement, nearest-neighbor retrieval.

The probe is a multinomial logistic regression trained by full-batch gradient
descent from zero init. Zero init matters: it makes the probe equivariant to
orthogonal rotations of the embedding space, so probe accuracy measures the
geometry of the representation, not its coordinate system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import normalized_mutual_info_score

from .errors import ConfigError, InputError
from .util import rng

_PROBE_STREAM = 41


@dataclass
class ProbeReport:
    shots: int
    accuracy: float  # mean over episodes
    episodes: int
    per_episode: np.ndarray


def _fit_softmax_classifier(
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    ridge: float,
    learning_rate: float,
    max_iters: int,
    grad_tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    w = np.zeros((num_classes, x.shape[1]))
    b = np.zeros(num_classes)
    rows = np.arange(n)
    for _ in range(max_iters):
        logits = x @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        p[rows, y] -= 1.0
        p /= n
        gw = p.T @ x + ridge * w
        gb = p.sum(axis=0)
        if max(np.abs(gw).max(), np.abs(gb).max()) < grad_tol:
            break
        w -= learning_rate * gw
        b -= learning_rate * gb
    return w, b


def linear_probe(
    embeddings: np.ndarray,
    labels: np.ndarray,
    shots: int,
    episodes: int = 20,
    seed: int = 0,
    ridge: float = 1e-3,
    learning_rate: float = 1.0,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
) -> ProbeReport:
    """Few-shot probe: per episode, ``shots`` training examples per class are
    drawn, a softmax classifier is trained to convergence, and accuracy is
    measured on the held-out remainder."""
    x = np.asarray(embeddings, dtype=np.float64)
    y_raw = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y_raw.shape[0]:
        raise InputError("embeddings and labels disagree on corpus size")
    if shots < 1 or episodes < 1:
        raise ConfigError("shots and episodes must be positive")
    classes, y = np.unique(y_raw, return_inverse=True)
    num_classes = classes.shape[0]
    if num_classes < 2:
        raise ConfigError("probe needs at least two classes")
    class_indices = [np.flatnonzero(y == c) for c in range(num_classes)]
    smallest = min(idx.size for idx in class_indices)
    if smallest <= shots:
        raise ConfigError(
            f"every class needs more than {shots} examples; smallest has {smallest}"
        )

    per_episode = np.empty(episodes)
    for ep in range(episodes):
        r = rng(seed, _PROBE_STREAM, ep)
        train_parts = [r.choice(idx, size=shots, replace=False) for idx in class_indices]
        train_idx = np.concatenate(train_parts)
        test_mask = np.ones(x.shape[0], dtype=bool)
        test_mask[train_idx] = False
        w, b = _fit_softmax_classifier(
            x[train_idx], y[train_idx], num_classes,
            ridge, learning_rate, max_iters, grad_tol,
        )
        pred = (x[test_mask] @ w.T + b).argmax(axis=1)
        per_episode[ep] = float((pred == y[test_mask]).mean())
    return ProbeReport(shots, float(per_episode.mean()), episodes, per_episode)


def clustering_metrics(assignment: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(normalized mutual information with arithmetic averaging, purity)."""
    a = np.asarray(assignment)
    l = np.asarray(labels)
    if a.size == 0 or a.shape != l.shape:
        raise InputError("assignment and labels must be equal-length and non-empty")
    nmi = float(
        normalized_mutual_info_score(l, a, average_method="arithmetic")
    )
    _, a_idx = np.unique(a, return_inverse=True)
    _, l_idx = np.unique(l, return_inverse=True)
    table = np.zeros((a_idx.max() + 1, l_idx.max() + 1))
    np.add.at(table, (a_idx, l_idx), 1.0)
    purity = float(table.max(axis=1).sum() / a.size)
    return nmi, purity


def retrieval_accuracy(embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of videos whose nearest neighbor (self excluded) shares the label."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InputError("embeddings and labels disagree on corpus size")
    if x.shape[0] < 2:
        raise InputError("retrieval needs at least two videos")
    sims = x @ x.T
    np.fill_diagonal(sims, -np.inf)
    nearest = sims.argmax(axis=1)
    return float((y[nearest] == y).mean())
