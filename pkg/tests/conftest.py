"""Shared fixtures and reference helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from voxplore import SparsePoints, SolidSpec, synth_solid, to_sparse


def random_sparse(rng, max_n=2000, max_dim=40, min_dim=8) -> SparsePoints:
    """Random sparse instance: unique voxels, log-uniform intensities."""
    dims = tuple(int(d) for d in rng.integers(min_dim, max_dim + 1, size=3))
    n_req = int(rng.integers(1, max_n + 1))
    idx = np.stack([rng.integers(0, d, size=n_req) for d in dims], axis=1)
    idx = np.unique(idx, axis=0)
    inten = 10.0 ** rng.uniform(-3, 3, size=idx.shape[0])
    return SparsePoints.from_unsorted(dims, idx, inten)


def sphere_points(radius: float, dims=(64, 64, 64), fill=1.0, seed=0) -> SparsePoints:
    vol, _ = synth_solid(SolidSpec(shape="sphere", radius=radius, dims=dims, fill=fill), seed)
    return to_sparse(vol, fill / 2)


def undirected_edge_counts(triangles: np.ndarray):
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    return np.unique(np.sort(e, axis=1), axis=0, return_counts=True)


def is_watertight(triangles: np.ndarray) -> bool:
    """Every undirected edge shared by exactly two triangles."""
    if triangles.size == 0:
        return False
    _, counts = undirected_edge_counts(triangles)
    return bool((counts == 2).all())


def is_consistently_oriented(triangles: np.ndarray) -> bool:
    """No directed edge appears twice (neighbor triangles disagree on winding)."""
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    return np.unique(e, axis=0).shape[0] == e.shape[0]


def classical_dbscan(points: SparsePoints, eps: float, min_pts: int):
    """Textbook DBSCAN over the lattice points, unit weight per point.

    Independent machinery from the package: KD-tree range queries, core test
    |N_eps(p)| >= minPts with p counting itself, clusters grown from core
    points in index order, borders attached to their smallest core neighbor
    (the package's documented tie-break, which classical DBSCAN leaves
    order-dependent).  Returns (labels, is_core).
    """
    from scipy.spatial import cKDTree

    coords = points.indices.astype(np.float64)
    tree = cKDTree(coords)
    neighborhoods = tree.query_ball_point(coords, r=eps + 1e-9)
    n = points.n
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])
    labels = np.full(n, -1, dtype=np.int64)
    cid = 0
    for p in range(n):
        if not core[p] or labels[p] != -1:
            continue
        stack = [p]
        labels[p] = cid
        while stack:
            q = stack.pop()
            for r in neighborhoods[q]:
                if core[r] and labels[r] == -1:
                    labels[r] = cid
                    stack.append(r)
        cid += 1
    for p in range(n):
        if core[p]:
            continue
        core_nb = sorted(r for r in neighborhoods[p] if core[r] and r != p)
        if core_nb:
            labels[p] = labels[core_nb[0]]
    return labels, core


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of every run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") != "call":
                continue
            if "test_acceptance.py" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                rows.append((name, "PASS" if status == "passed" else "FAIL"))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}")
