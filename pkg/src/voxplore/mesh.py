"""Rendering-ready exports: decimated point clouds and iso-surface meshes.

Point clouds carry physical positions (origin + index * spacing), the raw
intensity, and an opacity in [0, 1]; the binary layout is a little-endian
u32 count followed by count records of five f32 values (x, y, z, intensity,
alpha).  Meshes are extracted by marching cubes over a dense volume and
written as ASCII OBJ with vertex and face lines only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .volume import DenseVolume, SparsePoints
from .wdbscan import ClusterResult

POINTCLOUD_VERSION = 1
MESH_VERSION = 1
_RECORD = 20  # 5 little-endian f32 per point

DECIMATE_MODES = ("stride", "importance")

# every cell edge is axis-aligned with unit length: identify it globally by
# its lower corner voxel plus the axis it runs along
_A = CORNER_OFFSETS[EDGE_CORNERS[:, 0]].astype(np.int64)
_B = CORNER_OFFSETS[EDGE_CORNERS[:, 1]].astype(np.int64)
EDGE_AXIS = np.argmax(np.abs(_B - _A), axis=1)
EDGE_BASE = np.minimum(_A, _B)
del _A, _B


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray  # (n, 3) f32, physical coordinates
    intensities: np.ndarray  # (n,) f32
    alphas: np.ndarray  # (n,) f32 in [0, 1]
    alpha_mode: str = "cluster"  # provenance of the alphas

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3)
        inten = np.ascontiguousarray(self.intensities, dtype=np.float32).reshape(-1)
        alpha = np.ascontiguousarray(self.alphas, dtype=np.float32).reshape(-1)
        if not (pos.shape[0] == inten.size == alpha.size):
            raise ValueError("positions, intensities, alphas must align")
        if alpha.size and (np.isnan(alpha).any() or alpha.min() < 0 or alpha.max() > 1):
            raise ValueError("alphas must lie in [0, 1]")
        for name, arr in (("positions", pos), ("intensities", inten), ("alphas", alpha)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def make_pointcloud(points: SparsePoints, alphas, origin=(0.0, 0.0, 0.0),
                    spacing=(1.0, 1.0, 1.0), alpha_mode: str = "cluster") -> PointCloud:
    origin = np.asarray(origin, dtype=np.float64)
    spacing = np.asarray(spacing, dtype=np.float64)
    positions = origin + points.indices.astype(np.float64) * spacing
    return PointCloud(positions.astype(np.float32),
                      points.intensities.astype(np.float32),
                      np.asarray(alphas, dtype=np.float32), alpha_mode)


def pointcloud_bytes(pc: PointCloud) -> bytes:
    buf = np.empty((pc.n, 5), dtype="<f4")
    buf[:, 0:3] = pc.positions
    buf[:, 3] = pc.intensities
    buf[:, 4] = pc.alphas
    return struct.pack("<I", pc.n) + buf.tobytes()


def pointcloud_from_bytes(data: bytes, alpha_mode: str = "cluster") -> PointCloud:
    if len(data) < 4:
        raise ValueError("point-cloud blob shorter than its 4-byte count")
    (n,) = struct.unpack_from("<I", data, 0)
    if len(data) != 4 + n * _RECORD:
        raise ValueError(
            f"point-cloud blob declares {n} records but holds {len(data) - 4} bytes"
        )
    buf = np.frombuffer(data, dtype="<f4", offset=4).reshape(n, 5)
    return PointCloud(buf[:, 0:3], buf[:, 3], buf[:, 4], alpha_mode)


def save_pointcloud(pc: PointCloud, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pointcloud_bytes(pc))


def load_pointcloud(path, alpha_mode: str = "cluster") -> PointCloud:
    with open(path, "rb") as fh:
        return pointcloud_from_bytes(fh.read(), alpha_mode)


def decimate_indices(points: SparsePoints, target: int, mode: str = "stride",
                     seed: int = 0) -> np.ndarray:
    """Positional indices (ascending) of the points a decimation keeps.

    Split out from decimate() so callers can subset parallel arrays
    (e.g. per-point alphas) consistently.
    """
    target = int(target)
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    if mode not in DECIMATE_MODES:
        raise ValueError(f"mode must be one of {DECIMATE_MODES}, got {mode!r}")
    n = points.n
    if target >= n:
        return np.arange(n, dtype=np.int64)
    if mode == "stride":
        step = -(-n // target)
        return np.arange(0, n, step, dtype=np.int64)
    # importance: weighted sampling without replacement; a point's key is
    # log(u)/w, and the `target` largest keys win (probability ∝ intensity)
    rng = np.random.default_rng(seed)
    keys = np.log1p(-rng.random(n)) / points.intensities
    chosen = np.argpartition(keys, n - target)[n - target:]
    return np.sort(chosen)


def decimate(points: SparsePoints, target: int, mode: str = "stride",
             seed: int = 0) -> SparsePoints:
    """At most ``target`` points, canonical order preserved."""
    return points.take(decimate_indices(points, target, mode, seed))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (m, 3) f64, physical coordinates
    triangles: np.ndarray  # (t, 3) vertex indices
    iso_value: float

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle indices out of range")
        verts.flags.writeable = False
        tris.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "iso_value", float(self.iso_value))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def area(self) -> float:
        a = self.vertices[self.triangles[:, 1]] - self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 2]] - self.vertices[self.triangles[:, 0]]
        return float(0.5 * np.linalg.norm(np.cross(a, b), axis=1).sum())


def _empty_mesh(iso: float) -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), iso)


def isosurface(v: DenseVolume, iso: float) -> TriangleMesh:
    """Marching-cubes surface at ``iso``.

    Case bit c is set when corner c is strictly below iso; the standard
    case tables then wind every triangle facing outward from the above-iso
    region.  Vertices are interpolated per lattice edge and shared between
    the cells touching the edge; NaN samples count as below-iso.  The mesh
    is watertight whenever the above-iso region stays clear of the volume
    faces.
    """
    if not np.isfinite(iso):
        raise ValueError(f"iso must be finite, got {iso}")
    iso = float(iso)
    nx, ny, nz = v.dims
    if min(nx, ny, nz) < 2:
        return _empty_mesh(iso)
    vals = v.values.astype(np.float64)
    finite = np.isfinite(vals)
    if not finite.all():
        if not finite.any():
            return _empty_mesh(iso)
        fill = min(vals[finite].min(), iso) - 1.0
        vals = np.where(finite, vals, fill)

    below = vals < iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint8)
    for c, (di, dj, dk) in enumerate(CORNER_OFFSETS.tolist()):
        corner = below[di : di + nx - 1, dj : dj + ny - 1, dk : dk + nz - 1]
        case |= corner.astype(np.uint8) << c

    ci, cj, ck = np.nonzero(EDGE_TABLE[case] != 0)
    if ci.size == 0:
        return _empty_mesh(iso)
    rows = TRI_TABLE[case[ci, cj, ck]]  # (cells, 16) edge ids, -1 padded
    slot = rows >= 0
    e = rows[slot].astype(np.int64)  # row-major: per cell, in table order
    cell = np.repeat(np.arange(ci.size), slot.sum(axis=1))
    base = np.stack([ci, cj, ck], axis=1)[cell] + EDGE_BASE[e]
    keys = ((base[:, 0] * ny + base[:, 1]) * nz + base[:, 2]) * 3 + EDGE_AXIS[e]
    uniq, inverse = np.unique(keys, return_inverse=True)
    tris = inverse.reshape(-1, 3)

    # interpolate one vertex per unique lattice edge
    axis = uniq % 3
    rest = uniq // 3
    k0 = rest % nz
    rest //= nz
    j0 = rest % ny
    i0 = rest // ny
    step = np.eye(3, dtype=np.int64)[axis]
    v0 = vals[i0, j0, k0]
    v1 = vals[i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]]
    t = (iso - v0) / (v1 - v0)
    pos = np.stack([i0, j0, k0], axis=1).astype(np.float64)
    pos[np.arange(uniq.size), axis] += t

    # an iso value hitting a sample exactly parks vertices of several edges
    # on the same corner; weld them so degeneracy checks see shared ids
    pos, remap = np.unique(pos, axis=0, return_inverse=True)
    tris = remap.reshape(-1)[tris]
    ok = (
        (tris[:, 0] != tris[:, 1])
        & (tris[:, 1] != tris[:, 2])
        & (tris[:, 0] != tris[:, 2])
    )
    tris = tris[ok]
    a = pos[tris[:, 1]] - pos[tris[:, 0]]
    b = pos[tris[:, 2]] - pos[tris[:, 0]]
    cross = np.cross(a, b)
    tris = tris[(cross * cross).sum(axis=1) > 0]
    if tris.size == 0:
        return _empty_mesh(iso)
    used, tris = np.unique(tris, return_inverse=True)
    physical = np.asarray(v.origin) + pos[used] * np.asarray(v.spacing)
    return TriangleMesh(physical, tris.reshape(-1, 3), iso)


def rasterize_cluster(points: SparsePoints, r: ClusterResult, cluster_id: int,
                      origin=(0.0, 0.0, 0.0), spacing=(1.0, 1.0, 1.0)) -> DenseVolume:
    """Dense volume of one cluster's bbox, padded by a voxel of zeros.

    ``origin``/``spacing`` describe the source lattice so the result stays
    physically registered with it.
    """
    members = r.members(cluster_id)
    idx = points.indices[members].astype(np.int64)
    lo = idx.min(axis=0) - 1
    hi = idx.max(axis=0) + 1
    dims = hi - lo + 1
    vals = np.zeros(tuple(int(d) for d in dims), dtype=np.float32)
    local = idx - lo
    vals[local[:, 0], local[:, 1], local[:, 2]] = points.intensities[members]
    new_origin = tuple(np.asarray(origin, dtype=np.float64) + lo * np.asarray(spacing, dtype=np.float64))
    return DenseVolume(vals, origin=new_origin, spacing=tuple(float(s) for s in spacing))


def obj_bytes(mesh: TriangleMesh) -> bytes:
    parts = []
    for x, y, z in mesh.vertices:
        parts.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.triangles + 1:
        parts.append(f"f {a} {b} {c}")
    return ("\n".join(parts) + "\n").encode("ascii") if parts else b""


def write_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "wb") as fh:
        fh.write(obj_bytes(mesh))


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and 0-based triangles from a v/f-only OBJ file."""
    verts, faces = [], []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            fields = line.split()
            if not fields:
                continue
            if fields[0] == "v":
                verts.append([float(f) for f in fields[1:4]])
            elif fields[0] == "f":
                faces.append([int(f.split("/")[0]) - 1 for f in fields[1:4]])
    return (np.asarray(verts, dtype=np.float64).reshape(-1, 3),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3))
