"""Intensity-weighted DBSCAN over a sparse voxel lattice.

Classical DBSCAN counts the neighbors inside an eps-ball against minPts.
Here every point contributes its *intensity* instead of a unit count, so the
density of p is I_p plus the summed intensity of the lattice neighbors
within eps.  A point is core when that weighted density reaches
``min_weight`` (the weighted analog of minPts, in intensity units); clusters
are the connected components of core points under the stencil adjacency,
border points are non-core points adjacent to a core, everything else is
noise.

Because coordinates are voxel indices, the eps-ball is a fixed set of
integer offsets (the stencil): eps in [1, sqrt(2)) reaches the 6 face
neighbors, [sqrt(2), sqrt(3)) adds the 12 edge neighbors (18 in total; the
default eps of 1.7 lands here), and so on.

Labeling is canonical: cluster ids are assigned in order of the first core
point in lexicographic point order, and a border point adjacent to several
clusters joins the one of its lexicographically smallest core neighbor.
``brute_force_cluster`` is an independent O(n^2) reference implementation
used by the tests as an oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .volume import SparsePoints, lex_keys

DEFAULT_EPS = 1.7
BRUTE_FORCE_CAP = 10_000
# Above this many grid cells the dense scratch volumes (8 bytes/voxel) stop
# being worth it and neighbor lookups fall back to binary search on keys.
DENSE_CELL_CAP = 150_000_000

NOISE = np.uint8(0)
CORE = np.uint8(1)
BORDER = np.uint8(2)

FLAG_NAMES = {int(NOISE): "noise", int(CORE): "core", int(BORDER): "border"}


@dataclass(frozen=True, eq=False)
class NeighborStencil:
    """Nonzero integer offsets with squared norm <= eps^2, sorted lex."""

    eps: float
    offsets: np.ndarray  # (m, 3) int32

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.int32).reshape(-1, 3)
        if off.shape[0]:
            as_tuples = {tuple(o) for o in off.tolist()}
            if len(as_tuples) != off.shape[0] or (0, 0, 0) in as_tuples:
                raise ValueError("offsets must be unique and exclude the origin")
            if any(tuple(-c for c in o) not in as_tuples for o in as_tuples):
                raise ValueError("offsets must be closed under negation")
        off.flags.writeable = False
        object.__setattr__(self, "offsets", off)

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    def fits_unit_cube(self) -> bool:
        """True when every offset lies in {-1, 0, 1}^3 (eps < 2)."""
        return self.size == 0 or int(np.abs(self.offsets).max()) <= 1


def stencil(eps: float) -> NeighborStencil:
    """Exact eps-neighborhood on the lattice: offsets with |o|^2 <= eps^2."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = int(np.floor(eps))
    rng = np.arange(-r, r + 1, dtype=np.int32)
    if r == 0:
        return NeighborStencil(eps, np.empty((0, 3), dtype=np.int32))
    dx, dy, dz = np.meshgrid(rng, rng, rng, indexing="ij")
    off = np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)
    sq = (off.astype(np.int64) ** 2).sum(axis=1)
    off = off[(sq > 0) & (sq <= eps * eps)]
    order = np.lexsort((off[:, 2], off[:, 1], off[:, 0]))
    return NeighborStencil(eps, off[order])


@dataclass(frozen=True)
class ClusteringParams:
    """eps in voxel-index units, min_weight in intensity units."""

    min_weight: float
    eps: float = DEFAULT_EPS
    include_border: bool = True

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_weight <= 0:
            raise ValueError(f"min_weight must be positive, got {self.min_weight}")
        if self.eps < 1:
            warnings.warn(
                f"eps={self.eps} < 1 reaches no lattice neighbor: every point of"
                " self-weight >= min_weight becomes a singleton cluster",
                stacklevel=2,
            )

    def key(self) -> tuple:
        return (float(self.eps), float(self.min_weight), bool(self.include_border))


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Per-point labels (-1 noise, else cluster id), flags, and densities.

    Flags always report the intrinsic band for the parameters: a border
    point keeps flag BORDER even under ``include_border=False``, where its
    label is -1 because only cores are cluster members.
    """

    labels: np.ndarray  # int32
    flags: np.ndarray  # uint8: NOISE / CORE / BORDER
    n_clusters: int
    densities: np.ndarray  # float64, the weighted density of each point

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int32)
        flags = np.asarray(self.flags, dtype=np.uint8)
        densities = np.asarray(self.densities, dtype=np.float64)
        if not (labels.shape == flags.shape == densities.shape):
            raise ValueError("labels, flags, densities must have identical shape")
        labels.flags.writeable = False
        flags.flags.writeable = False
        densities.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "n_clusters", int(self.n_clusters))
        object.__setattr__(self, "densities", densities)

    @property
    def n_points(self) -> int:
        return self.labels.size

    @property
    def n_noise(self) -> int:
        return int((self.labels == -1).sum())

    def members(self, cluster_id: int) -> np.ndarray:
        """Positional indices of the cluster's points, in canonical order."""
        if not 0 <= cluster_id < self.n_clusters:
            raise ValueError(f"unknown cluster id {cluster_id}")
        return np.flatnonzero(self.labels == cluster_id)


def results_equal(a: ClusterResult, b: ClusterResult) -> bool:
    return (
        a.n_clusters == b.n_clusters
        and np.array_equal(a.labels, b.labels)
        and np.array_equal(a.flags, b.flags)
    )


def weighted_density(p, points: SparsePoints, s: NeighborStencil) -> float:
    """Density of the point at voxel ``p``: own intensity plus the summed
    intensity of its stencil neighbors present in ``points``."""
    p = np.asarray(p, dtype=np.int64).reshape(3)
    keys = lex_keys(points.indices, points.dims)
    own = np.searchsorted(keys, lex_keys(p[None, :], points.dims)[0])
    if own >= points.n or not (points.indices[own] == p).all():
        raise ValueError(f"point {tuple(p)} not present")
    total = float(points.intensities[own])
    if s.size == 0:
        return total
    nb = p[None, :] + s.offsets.astype(np.int64)
    dims = np.asarray(points.dims, dtype=np.int64)
    valid = ((nb >= 0) & (nb < dims)).all(axis=1)
    nb_keys = lex_keys(nb[valid], points.dims)
    pos = np.searchsorted(keys, nb_keys)
    pos = np.clip(pos, 0, points.n - 1)
    found = keys[pos] == nb_keys if points.n else np.zeros(0, bool)
    return total + float(points.intensities[pos[found]].sum())


def _empty_result() -> ClusterResult:
    z = np.zeros(0)
    return ClusterResult(z.astype(np.int32), z.astype(np.uint8), 0, z)


class _DenseIndex:
    """Neighbor lookups through scratch grids (fast for compact extents)."""

    def __init__(self, points: SparsePoints):
        self.points = points
        self.dims = points.dims
        self.idx = points.indices
        self._pid = None

    def densities(self, offsets: np.ndarray) -> np.ndarray:
        vol = np.zeros(self.dims, dtype=np.float64)
        coords = (self.idx[:, 0], self.idx[:, 1], self.idx[:, 2])
        vol[coords] = self.points.intensities
        acc = vol.copy()
        for dx, dy, dz in offsets.tolist():
            dst = tuple(
                slice(max(0, -d), n + min(0, -d)) for d, n in zip((dx, dy, dz), self.dims)
            )
            src = tuple(
                slice(max(0, d), n + min(0, d)) for d, n in zip((dx, dy, dz), self.dims)
            )
            acc[dst] += vol[src]
        dens = acc[coords]
        return dens

    def pid_grid(self) -> np.ndarray:
        if self._pid is None:
            pid = np.full(self.dims, -1, dtype=np.int32)
            pid[self.idx[:, 0], self.idx[:, 1], self.idx[:, 2]] = np.arange(
                self.points.n, dtype=np.int32
            )
            self._pid = pid
        return self._pid

    def neighbor_pids(self, positional: np.ndarray, offset) -> np.ndarray:
        """Point id of positional+offset, -1 when absent or out of bounds."""
        nb = self.idx[positional].astype(np.int64) + np.asarray(offset, dtype=np.int64)
        valid = ((nb >= 0) & (nb < np.asarray(self.dims, dtype=np.int64))).all(axis=1)
        out = np.full(positional.shape[0], -1, dtype=np.int64)
        v = np.flatnonzero(valid)
        g = self.pid_grid()
        out[v] = g[nb[v, 0], nb[v, 1], nb[v, 2]]
        return out


class _SparseIndex:
    """Neighbor lookups by binary search on lex keys (any extents)."""

    def __init__(self, points: SparsePoints):
        self.points = points
        self.dims = points.dims
        self.idx = points.indices
        self.keys = lex_keys(points.indices, points.dims)

    def densities(self, offsets: np.ndarray) -> np.ndarray:
        dens = self.points.intensities.copy()
        for off in offsets:
            pid = self.neighbor_pids(np.arange(self.points.n), off)
            hit = pid >= 0
            dens[hit] += self.points.intensities[pid[hit]]
        return dens

    def neighbor_pids(self, positional: np.ndarray, offset) -> np.ndarray:
        nb = self.idx[positional].astype(np.int64) + np.asarray(offset, dtype=np.int64)
        valid = ((nb >= 0) & (nb < np.asarray(self.dims, dtype=np.int64))).all(axis=1)
        out = np.full(positional.shape[0], -1, dtype=np.int64)
        v = np.flatnonzero(valid)
        if v.size == 0 or self.points.n == 0:
            return out
        nb_keys = lex_keys(nb[v], self.dims)
        pos = np.searchsorted(self.keys, nb_keys)
        pos = np.clip(pos, 0, self.points.n - 1)
        found = self.keys[pos] == nb_keys
        out[v[found]] = pos[found]
        return out


def _core_components_label_grid(index: _DenseIndex, core_mask: np.ndarray,
                                offsets: np.ndarray) -> np.ndarray:
    """Component ids of core points via 3^3-structure grid labeling."""
    grid = np.zeros(index.dims, dtype=bool)
    cidx = index.idx[core_mask]
    grid[cidx[:, 0], cidx[:, 1], cidx[:, 2]] = True
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1, 1, 1] = True
    for dx, dy, dz in offsets.tolist():
        structure[dx + 1, dy + 1, dz + 1] = True
    lab, _ = ndimage.label(grid, structure=structure)
    comp = np.full(index.points.n, -1, dtype=np.int64)
    pos = np.flatnonzero(core_mask)
    comp[pos] = lab[cidx[:, 0], cidx[:, 1], cidx[:, 2]].astype(np.int64) - 1
    return comp


def _core_components_graph(index, core_mask: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Component ids of core points via an explicit adjacency graph."""
    pos = np.flatnonzero(core_mask)
    local = np.full(index.points.n, -1, dtype=np.int64)
    local[pos] = np.arange(pos.size)
    src_parts, dst_parts = [], []
    # one direction per offset pair is enough for an undirected graph
    half = offsets[[tuple(o) > (0, 0, 0) for o in offsets.tolist()]]
    for off in half:
        pid = index.neighbor_pids(pos, off)
        ok = (pid >= 0) & core_mask[np.clip(pid, 0, None)]
        src_parts.append(local[pos[ok]])
        dst_parts.append(local[pid[ok]])
    comp = np.full(index.points.n, -1, dtype=np.int64)
    if pos.size:
        src = np.concatenate(src_parts) if src_parts else np.zeros(0, dtype=np.int64)
        dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, dtype=np.int64)
        graph = sparse.csr_matrix(
            (np.ones(src.size, dtype=np.int8), (src, dst)), shape=(pos.size, pos.size)
        )
        _, labels = csgraph.connected_components(graph, directed=False)
        comp[pos] = labels
    return comp


def cluster(points: SparsePoints, params: ClusteringParams,
            threads: int | None = None) -> ClusterResult:
    """Weighted DBSCAN over the lattice points.

    ``threads`` caps auxiliary parallelism; the pipeline is vectorized and
    its result never depends on the thread budget.
    """
    del threads  # reserved; results are thread-count independent by contract
    if points.n == 0:
        return _empty_result()
    st = stencil(params.eps)
    offsets = st.offsets
    cells = int(np.prod([int(d) for d in points.dims]))
    if cells <= DENSE_CELL_CAP:
        index: _DenseIndex | _SparseIndex = _DenseIndex(points)
    else:
        index = _SparseIndex(points)

    densities = index.densities(offsets)
    core_mask = densities >= params.min_weight

    if isinstance(index, _DenseIndex) and st.fits_unit_cube():
        comp = _core_components_label_grid(index, core_mask, offsets)
    else:
        comp = _core_components_graph(index, core_mask, offsets)

    # border points adopt the component of their lex-smallest core neighbor;
    # for a fixed point the neighbor lex order equals the offset lex order
    border_comp = np.full(points.n, -1, dtype=np.int64)
    if core_mask.any():
        unresolved = np.flatnonzero(~core_mask)
        for off in offsets:
            if unresolved.size == 0:
                break
            pid = index.neighbor_pids(unresolved, off)
            hit = (pid >= 0) & core_mask[np.clip(pid, 0, None)]
            border_comp[unresolved[hit]] = comp[pid[hit]]
            unresolved = unresolved[~hit]

    # canonical ids: order of first core point in lex point order
    core_comp = comp[core_mask]
    labels = np.full(points.n, -1, dtype=np.int32)
    flags = np.where(core_mask, CORE, NOISE).astype(np.uint8)
    if core_comp.size:
        uniq, first = np.unique(core_comp, return_index=True)
        canon = np.empty(uniq.size, dtype=np.int32)
        canon[np.argsort(first)] = np.arange(uniq.size, dtype=np.int32)
        remap = np.full(int(uniq.max()) + 1, -1, dtype=np.int32)
        remap[uniq] = canon
        labels[core_mask] = remap[core_comp]
        is_border = border_comp >= 0
        flags[is_border] = BORDER
        if params.include_border:
            labels[is_border] = remap[border_comp[is_border]]
        n_clusters = int(uniq.size)
    else:
        n_clusters = 0
    return ClusterResult(labels, flags, n_clusters, densities)


def brute_force_cluster(points: SparsePoints, params: ClusteringParams) -> ClusterResult:
    """Reference implementation: O(n^2) pairwise distances, no grid index.

    Capped at 10,000 points (BRUTE_FORCE_CAP); tests use it as the oracle.
    Neighbor intensities are summed in point order rather than the offset
    order :func:`cluster` uses, so densities can differ from the fast path
    in the last ulp: comparisons should not pick a min_weight exactly equal
    to an attained density.
    """
    n = points.n
    if n > BRUTE_FORCE_CAP:
        raise ValueError(
            f"brute_force_cluster is capped at {BRUTE_FORCE_CAP} points, got {n}"
        )
    if n == 0:
        return _empty_result()
    idx = points.indices.astype(np.int64)
    inten = points.intensities
    eps2 = float(params.eps) ** 2

    neighbors: list[np.ndarray] = []
    densities = np.empty(n, dtype=np.float64)
    block = 256
    for start in range(0, n, block):
        rows = idx[start : start + block]
        d2 = ((rows[:, None, :] - idx[None, :, :]) ** 2).sum(axis=2)
        close = (d2 <= eps2) & (d2 > 0)
        for r in range(rows.shape[0]):
            nb = np.flatnonzero(close[r])
            neighbors.append(nb)
            densities[start + r] = inten[start + r] + inten[nb].sum()

    core = densities >= params.min_weight
    labels = np.full(n, -1, dtype=np.int32)
    next_id = 0
    for p in range(n):
        if not core[p] or labels[p] != -1:
            continue
        queue = [p]
        labels[p] = next_id
        while queue:
            q = queue.pop()
            for r in neighbors[q]:
                if core[r] and labels[r] == -1:
                    labels[r] = next_id
                    queue.append(r)
        next_id += 1

    flags = np.where(core, CORE, NOISE).astype(np.uint8)
    for p in range(n):
        if core[p]:
            continue
        core_nb = [int(r) for r in neighbors[p] if core[r]]
        if core_nb:
            flags[p] = BORDER
            if params.include_border:
                labels[p] = labels[min(core_nb)]
    return ClusterResult(labels, flags, next_id, densities)


def save_labels(labels: np.ndarray, path) -> None:
    """Raw i32 little-endian array aligned to the SparsePoints order."""
    np.asarray(labels, dtype="<i4").tofile(path)


def load_labels(path, n_expected: int | None = None) -> np.ndarray:
    labels = np.fromfile(path, dtype="<i4")
    if n_expected is not None and labels.size != n_expected:
        raise ValueError(
            f"label file {path} holds {labels.size} entries, expected {n_expected}"
        )
    return labels
