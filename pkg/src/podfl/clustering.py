"""Greedy grouping of client weight vectors and deniability geometry.

Clusters are built by repeatedly taking the lowest-id unassigned client
as a seed and attaching its nearest unassigned neighbours until the
target cluster count ``floor(N / k)`` is reached; anyone left over joins
the cluster whose seed is nearest. Ties always break toward the lower
client id, which makes the layout a pure function of the weights. The
radius bound ``delta`` is recorded and reported but never enforced at
construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import ClusteringError
from .models import METRICS, model_distance


@dataclass(frozen=True)
class ClusterParams:
    k: int
    delta: float
    metric: str = "l2"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ClusteringError(f"k must be >= 1, got {self.k}")
        if not self.delta > 0:
            raise ClusteringError(f"delta must be > 0, got {self.delta}")
        if self.metric not in METRICS:
            raise ClusteringError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class Cluster:
    """One group of clients; ``representative_id`` is always a member."""

    member_ids: tuple[int, ...]
    representative_id: int
    radius: float

    def __post_init__(self):
        if self.representative_id not in self.member_ids:
            raise ClusteringError(
                f"representative {self.representative_id} not in members {self.member_ids}"
            )


def cluster_radius(member_ids, representative_id, weights, metric) -> float:
    rep = weights[representative_id]
    return max(model_distance(rep, weights[m], metric) for m in member_ids)


def with_representative(cluster: Cluster, weights, representative_id: int, metric: str) -> Cluster:
    """Same members, new representative, radius recomputed around it."""
    return replace(
        cluster,
        representative_id=representative_id,
        radius=cluster_radius(cluster.member_ids, representative_id, weights, metric),
    )


def cluster_weights(weights: Mapping[int, np.ndarray], params: ClusterParams) -> list[Cluster]:
    """Group client weights into ``floor(N / k)`` clusters of size at least ``k``.

    Seeds are chosen in ascending id order among unassigned clients; each
    seed pulls in its ``k - 1`` nearest unassigned neighbours (distance
    ties resolved by lower id). Leftover clients are attached to the
    nearest seed, ties resolved by earlier-formed cluster. The initial
    representative is the seed; callers re-select it at random and rebuild
    the radius via :func:`with_representative`.
    """
    ids = sorted(weights)
    n, k = len(ids), params.k
    if n == 0:
        raise ClusteringError("no client weights to cluster")
    if n < k:
        raise ClusteringError(f"cannot form clusters of size {k} from {n} clients")
    unassigned = list(ids)
    groups: list[list[int]] = []
    seeds: list[int] = []
    for _ in range(n // k):
        seed = unassigned.pop(0)
        ranked = sorted(
            (model_distance(weights[seed], weights[other], params.metric), other)
            for other in unassigned
        )
        taken = [other for _, other in ranked[: k - 1]]
        groups.append([seed] + taken)
        seeds.append(seed)
        unassigned = [cid for cid in unassigned if cid not in taken]
    for cid in unassigned:
        _, best = min(
            (model_distance(weights[cid], weights[seed], params.metric), order)
            for order, seed in enumerate(seeds)
        )
        groups[best].append(cid)
    return [
        Cluster(
            member_ids=tuple(members),
            representative_id=members[0],
            radius=cluster_radius(members, members[0], weights, params.metric),
        )
        for members in groups
    ]


def select_representative(cluster: Cluster, seed: int) -> int:
    """Uniform seeded draw over the cluster's members."""
    rng = np.random.default_rng(seed)
    return cluster.member_ids[int(rng.integers(len(cluster.member_ids)))]


def deniability_count(
    cluster: Cluster,
    weights: Mapping[int, np.ndarray],
    target_id: int,
    delta: float,
    metric: str = "l2",
) -> int:
    """Number of cluster peers whose weights lie within ``delta`` of the target's.

    Boundary inclusive; the target itself never counts. Raises ``KeyError``
    if the target is not a member of the cluster.
    """
    if target_id not in cluster.member_ids:
        raise KeyError(f"client {target_id} is not a member of this cluster")
    target = weights[target_id]
    return sum(
        1
        for m in cluster.member_ids
        if m != target_id and model_distance(target, weights[m], metric) <= delta
    )


def pairwise_distances(member_ids, weights, metric) -> list[float]:
    """Condensed upper-triangular distances in member order (i < j)."""
    out = []
    for i, a in enumerate(member_ids):
        for b in member_ids[i + 1 :]:
            out.append(model_distance(weights[a], weights[b], metric))
    return out
