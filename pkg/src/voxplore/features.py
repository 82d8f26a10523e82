"""Cluster ranking, selection, and shell ("peel") extraction.

The shell operation runs the clustering twice: pass 1 with borders included
yields a cluster C, pass 2 re-clusters C's points alone and keeps only the
core points, peeling off the outermost layer.  Iterating the keep-core pass
``peel_depth`` times leaves the interior; the shell is C minus the interior.
For a solid object this produces a thin boundary skin whose point count is
a small fraction of the cluster's.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .volume import SparsePoints, lex_keys
from .wdbscan import CORE, ClusteringParams, ClusterResult, cluster

RANK_KEYS = ("size", "total_intensity", "max_intensity")


@dataclass(frozen=True)
class ClusterStats:
    id: int
    size: int
    core_count: int
    total_intensity: float
    max_intensity: float
    centroid: tuple[float, float, float]  # mean member position, index space
    bbox_min: tuple[int, int, int]
    bbox_max: tuple[int, int, int]

    def __post_init__(self):
        if self.core_count < 1:
            raise ValueError("a cluster has at least one core point")
        if self.size < self.core_count:
            raise ValueError("size cannot be below core_count")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "size": self.size,
            "core_count": self.core_count,
            "total_intensity": self.total_intensity,
            "max_intensity": self.max_intensity,
            "centroid": list(self.centroid),
            "bbox_min": list(self.bbox_min),
            "bbox_max": list(self.bbox_max),
        }


def cluster_stats(r: ClusterResult, points: SparsePoints) -> list[ClusterStats]:
    """Per-cluster statistics in cluster-id order."""
    if r.n_points != points.n:
        raise ValueError("result and points disagree on point count")
    order = np.argsort(r.labels, kind="stable")
    labs = r.labels[order]
    first = np.searchsorted(labs, 0)  # skip noise (-1)
    order, labs = order[first:], labs[first:]
    cuts = np.flatnonzero(np.diff(labs)) + 1
    stats = []
    for members in np.split(order, cuts) if order.size else []:
        idx = points.indices[members]
        inten = points.intensities[members]
        stats.append(
            ClusterStats(
                id=int(r.labels[members[0]]),
                size=int(members.size),
                core_count=int((r.flags[members] == CORE).sum()),
                total_intensity=float(inten.sum()),
                max_intensity=float(inten.max()),
                centroid=tuple(float(c) for c in idx.mean(axis=0)),
                bbox_min=tuple(int(c) for c in idx.min(axis=0)),
                bbox_max=tuple(int(c) for c in idx.max(axis=0)),
            )
        )
    return stats


def rank_clusters(r: ClusterResult, points: SparsePoints,
                  key: str = "size") -> list[ClusterStats]:
    """Stats sorted descending by ``key``; ties broken by id ascending."""
    if key not in RANK_KEYS:
        raise ValueError(f"key must be one of {RANK_KEYS}, got {key!r}")
    stats = cluster_stats(r, points)
    return sorted(stats, key=lambda s: (-getattr(s, key), s.id))


def select(r: ClusterResult, points: SparsePoints, ids) -> SparsePoints:
    """Member points of the chosen clusters, in canonical order."""
    if r.n_points != points.n:
        raise ValueError("result and points disagree on point count")
    wanted = sorted({int(i) for i in ids})
    for i in wanted:
        if not 0 <= i < r.n_clusters:
            raise ValueError(f"unknown cluster id {i}")
    if not wanted:
        return points.take(np.zeros(0, dtype=np.int64))
    mask = np.isin(r.labels, np.asarray(wanted, dtype=np.int32))
    return points.take(np.flatnonzero(mask))


@dataclass(frozen=True)
class ShellResult:
    shell: SparsePoints
    interior: SparsePoints
    reduction_factor: float  # |cluster| / |shell|; inf when the shell is empty
    cluster_id: int
    peel_depth: int
    cluster_size: int

    def __post_init__(self):
        if self.shell.n + self.interior.n != self.cluster_size:
            raise ValueError("shell and interior must partition the cluster")

    def stats_dict(self) -> dict:
        rf = self.reduction_factor
        return {
            "cluster_id": self.cluster_id,
            "size": self.cluster_size,
            "shell_size": self.shell.n,
            "interior_size": self.interior.n,
            "reduction_factor": None if np.isinf(rf) else rf,
            "peel_depth": self.peel_depth,
        }


def shell_extract(points: SparsePoints, params: ClusteringParams, cluster_id: int,
                  peel_depth: int = 1,
                  pass1: ClusterResult | None = None) -> ShellResult:
    """Peel ``peel_depth`` boundary layers off one cluster.

    Pass 1 clusters ``points`` with borders included (a cached result for
    exactly these points and parameters may be supplied as ``pass1``).  The
    keep-core pass is then iterated on the cluster's points alone: at each
    depth, points that are not core within the current remainder are peeled.
    Raises when the remainder vanishes before reaching ``peel_depth``, naming
    the last non-empty depth.
    """
    depth = int(peel_depth)
    if depth < 1:
        raise ValueError(f"peel_depth must be >= 1, got {peel_depth}")
    if pass1 is None:
        pass1 = cluster(points, replace(params, include_border=True))
    elif pass1.n_points != points.n:
        raise ValueError("pass1 result does not match the supplied points")
    if not 0 <= cluster_id < pass1.n_clusters:
        raise ValueError(f"unknown cluster id {cluster_id}")

    members = points.take(pass1.members(cluster_id))
    keep_core = replace(params, include_border=False)
    kept = members
    for t in range(1, depth + 1):
        sub = cluster(kept, keep_core)
        survivors = np.flatnonzero(sub.labels >= 0)
        if survivors.size == 0:
            raise ValueError(
                f"cluster {cluster_id} vanished at peel depth {t}; "
                f"last non-empty depth is {t - 1}"
            )
        if survivors.size == kept.n:
            break  # fixed point: deeper peels cannot change anything
        kept = kept.take(survivors)

    member_keys = lex_keys(members.indices, members.dims)
    kept_keys = lex_keys(kept.indices, kept.dims)
    in_interior = np.isin(member_keys, kept_keys, assume_unique=True)
    shell = members.take(np.flatnonzero(~in_interior))
    n_shell = shell.n
    factor = float(members.n) / n_shell if n_shell else float("inf")
    return ShellResult(
        shell=shell,
        interior=kept,
        reduction_factor=factor,
        cluster_id=int(cluster_id),
        peel_depth=depth,
        cluster_size=members.n,
    )
