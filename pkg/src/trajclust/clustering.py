"""K-means clustering and the neighbor-set construction used by the aggregation loss.

Everything here is deterministic given its seed: k-means++ draws come from one
generator, argmin/argsort ties resolve to the lowest index, and reductions run
in fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FitError
from .objectives import NeighborSets


@dataclass
class KmeansResult:
    assignment: np.ndarray  # (N,) int64
    centroids: np.ndarray  # (K, F) float64
    objective: float  # sum of squared distances to assigned centroids
    history: np.ndarray  # objective after each assignment step, non-increasing


@dataclass
class ClusterModel:
    """Several independent k-means runs over the same points."""

    assignments: np.ndarray  # (m, N) int64
    centroids: list[np.ndarray]  # m arrays of shape (K, F)
    num_clusters: int
    objectives: np.ndarray  # (m,)


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (points**2).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plus_plus_init(points: np.ndarray, k: int, r: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(r.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(r.integers(n))  # all remaining mass on duplicates
        else:
            idx = int(r.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    points: np.ndarray,
    num_clusters: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-9,
) -> KmeansResult:
    """Lloyd's algorithm from a k-means++ start.

    Empty clusters are repaired during the update step by seizing the point
    farthest from its current centroid; the point joins the empty cluster and
    both affected means are recomputed, which keeps the objective monotone.
    Stops when the objective improves by less than ``tol`` (and the previous
    update needed no repair) or after ``max_iters`` assignment passes.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("points must be a non-empty 2-d array")
    n = x.shape[0]
    if not 1 <= num_clusters <= n:
        raise ConfigError(f"need 1 <= num_clusters <= {n}, got {num_clusters}")
    r = np.random.default_rng(seed)
    centroids = _plus_plus_init(x, num_clusters, r)

    history: list[float] = []
    prev_obj = np.inf
    repaired = False
    assignment = np.zeros(n, dtype=np.int64)
    obj = 0.0
    for _ in range(max_iters):
        d2 = _squared_distances(x, centroids)
        assignment = d2.argmin(axis=1).astype(np.int64)  # ties: lowest cluster id
        min_d2 = d2[np.arange(n), assignment]
        obj = float(min_d2.sum())
        history.append(obj)
        if not repaired and prev_obj - obj < tol:
            break
        prev_obj = obj

        counts = np.bincount(assignment, minlength=num_clusters).astype(np.float64)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, x)
        repaired = False
        for k_empty in np.flatnonzero(counts == 0):
            donors = counts[assignment] > 1
            if not donors.any():
                break
            cand = np.where(donors, min_d2, -np.inf)
            idx = int(cand.argmax())
            old = assignment[idx]
            counts[old] -= 1
            counts[k_empty] += 1
            sums[old] -= x[idx]
            sums[k_empty] += x[idx]
            assignment[idx] = k_empty
            min_d2[idx] = 0.0
            repaired = True
        centroids = sums / counts[:, None]
    else:
        # max_iters exhausted: re-derive a consistent final assignment
        d2 = _squared_distances(x, centroids)
        assignment = d2.argmin(axis=1).astype(np.int64)
        obj = float(d2[np.arange(n), assignment].sum())
        history.append(obj)

    return KmeansResult(assignment, centroids, obj, np.array(history))


def build_cluster_model(
    points: np.ndarray,
    num_clusters: int,
    num_runs: int,
    base_seed: int,
    max_iters: int = 100,
    tol: float = 1e-9,
) -> ClusterModel:
    """Run k-means ``num_runs`` times with seeds base_seed, base_seed+1, ..."""
    if num_runs < 1:
        raise ConfigError("num_runs must be positive")
    assignments = []
    centroids = []
    objectives = []
    for run in range(num_runs):
        res = kmeans(points, num_clusters, seed=base_seed + run, max_iters=max_iters, tol=tol)
        occupancy = np.bincount(res.assignment, minlength=num_clusters)
        if occupancy.min() == 0:
            raise FitError(f"run {run}: empty cluster in a finished run")
        assignments.append(res.assignment)
        centroids.append(res.centroids)
        objectives.append(res.objective)
    return ClusterModel(
        np.stack(assignments), centroids, num_clusters, np.array(objectives)
    )


def neighbor_sets(
    model: ClusterModel, embeddings: np.ndarray, background_k: int
) -> NeighborSets:
    """Close and background neighbors for every point.

    Close neighbors of i: everything sharing a cluster with i in any run
    (including i itself). Background neighbors: the ``background_k`` points
    with the largest dot product against embedding i, excluding i, plus i.
    Dot-product ties resolve to the lower index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    if model.assignments.shape[1] != n:
        raise ConfigError("cluster model and embeddings disagree on corpus size")
    if not 1 <= background_k <= n - 1:
        raise ConfigError(f"need 1 <= background_k <= {n - 1}, got {background_k}")

    close_sets: list[set[int]] = [set() for _ in range(n)]
    for run in model.assignments:
        for c in range(model.num_clusters):
            members = np.flatnonzero(run == c)
            member_list = members.tolist()
            for i in member_list:
                close_sets[i].update(member_list)

    sims = emb @ emb.T
    close = [np.array(sorted(s), dtype=np.int64) for s in close_sets]
    background = []
    for i in range(n):
        order = np.argsort(-sims[i], kind="stable")
        order = order[order != i][:background_k]
        background.append(np.unique(np.append(order, i)))
    return NeighborSets(close=close, background=background)


def export_assignments(model: ClusterModel, path: str) -> None:
    """Write (video id, run id, cluster id) rows as tab-separated text."""
    lines = ["video\trun\tcluster"]
    for run_id, run in enumerate(model.assignments):
        for vid, cluster in enumerate(run):
            lines.append(f"{vid}\t{run_id}\t{int(cluster)}")
    from .util import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")
