"""Dense volumes, sparse voxel point sets, and their on-disk formats.

A :class:`DenseVolume` is a regular 3D scalar grid with axis metadata.  NaN
marks voxels with no data; infinities are rejected.  A :class:`SparsePoints`
set holds the above-cutoff voxels of a volume as (index, intensity) records
sorted lexicographically by (i, j, k) -- the substrate for clustering.

The VVOL binary format (version 1):

    offset  size  field
    0       4     magic "VVOL"
    4       4     format version, u32 = 1
    8       24    nx, ny, nz as u64
    32      24    origin as 3 x f64
    56      24    spacing as 3 x f64
    80      24    three 8-byte space-padded ASCII axis labels
    104     -     nx*ny*nz scalars as f32, x-fastest (i varies fastest)

All fields little-endian.  The sparse exchange format is JSON-lines, one
object per point: {"i": ..., "j": ..., "k": ..., "v": ...}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

VVOL_MAGIC = b"VVOL"
VVOL_VERSION = 1
VVOL_HEADER_SIZE = 104

# Guard against absurd headers: dims whose voxel count cannot be addressed
# or whose payload could not possibly fit on disk.
MAX_VOXELS = 2**40


class VvolFormatError(ValueError):
    """Malformed VVOL file; ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _as_triple(x, dtype=float) -> tuple:
    t = tuple(dtype(v) for v in x)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t


@dataclass(frozen=True, eq=False)
class DenseVolume:
    """A 3D scalar grid.  ``values[i, j, k]`` is the sample at voxel (i, j, k).

    Values are float32 (matching on-disk precision); computations upcast to
    float64.  NaN means "no experimental data".  The array is marked
    read-only on construction.
    """

    values: np.ndarray
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    axis_labels: tuple[str, str, str] = ("X", "Y", "Z")

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValueError(f"values must be 3D, got shape {v.shape}")
        if min(v.shape) < 1:
            raise ValueError(f"dims must be positive, got {v.shape}")
        if np.isinf(v).any():
            raise ValueError("values may contain NaN but not infinities")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", _as_triple(self.origin))
        spacing = _as_triple(self.spacing)
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "spacing", spacing)
        labels = _as_triple(self.axis_labels, str)
        for lab in labels:
            if len(lab) > 8 or not lab.isascii():
                raise ValueError(f"axis label {lab!r} must be ASCII, at most 8 chars")
        object.__setattr__(self, "axis_labels", labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_voxels(self) -> int:
        return self.values.size

    def intensity_range(self) -> tuple[float, float]:
        """(min, max) over finite values; (nan, nan) if there are none."""
        finite = self.values[np.isfinite(self.values)]
        if finite.size == 0:
            return (float("nan"), float("nan"))
        return (float(finite.min()), float(finite.max()))


def volumes_equal(a: DenseVolume, b: DenseVolume) -> bool:
    """Bit-exact comparison, treating NaN as equal to NaN."""
    return (
        a.dims == b.dims
        and a.origin == b.origin
        and a.spacing == b.spacing
        and a.axis_labels == b.axis_labels
        and np.array_equal(a.values, b.values, equal_nan=True)
    )


def save_volume(v: DenseVolume, path) -> None:
    """Write ``v`` to ``path`` in VVOL format.  Round-trips bit-exactly."""
    nx, ny, nz = v.dims
    header = VVOL_MAGIC
    header += struct.pack("<I", VVOL_VERSION)
    header += struct.pack("<3Q", nx, ny, nz)
    header += struct.pack("<3d", *v.origin)
    header += struct.pack("<3d", *v.spacing)
    for lab in v.axis_labels:
        header += lab.ljust(8).encode("ascii")
    assert len(header) == VVOL_HEADER_SIZE
    with open(path, "wb") as f:
        f.write(header)
        # x-fastest: i varies fastest in the flat stream
        f.write(np.ascontiguousarray(v.values.ravel(order="F"), dtype="<f4").tobytes())


def load_volume(path) -> DenseVolume:
    """Read a VVOL file.  Values are preserved bit-exactly, NaN included."""
    with open(path, "rb") as f:
        header = f.read(VVOL_HEADER_SIZE)
        if len(header) < 4 or header[:4] != VVOL_MAGIC:
            raise VvolFormatError(f"bad magic {header[:4]!r}, expected {VVOL_MAGIC!r}", 0)
        if len(header) < VVOL_HEADER_SIZE:
            raise VvolFormatError(
                f"truncated header: {len(header)} of {VVOL_HEADER_SIZE} bytes", len(header)
            )
        (version,) = struct.unpack_from("<I", header, 4)
        if version != VVOL_VERSION:
            raise VvolFormatError(f"unsupported format version {version}", 4)
        nx, ny, nz = struct.unpack_from("<3Q", header, 8)
        if min(nx, ny, nz) < 1 or nx * ny * nz > MAX_VOXELS:
            raise VvolFormatError(f"dims {(nx, ny, nz)} out of range", 8)
        origin = struct.unpack_from("<3d", header, 32)
        spacing = struct.unpack_from("<3d", header, 56)
        if min(spacing) <= 0 or not all(np.isfinite(spacing)):
            raise VvolFormatError(f"non-positive spacing {spacing}", 56)
        try:
            labels = tuple(
                header[80 + 8 * a : 88 + 8 * a].decode("ascii").rstrip() for a in range(3)
            )
        except UnicodeDecodeError:
            raise VvolFormatError("axis labels are not ASCII", 80) from None
        n = nx * ny * nz
        payload = f.read(4 * n)
        if len(payload) < 4 * n:
            raise VvolFormatError(
                f"truncated payload: {len(payload)} of {4 * n} bytes",
                VVOL_HEADER_SIZE + len(payload),
            )
        if f.read(1):
            raise VvolFormatError("trailing bytes after payload", VVOL_HEADER_SIZE + 4 * n)
    flat = np.frombuffer(payload, dtype="<f4", count=n)
    values = flat.reshape((nx, ny, nz), order="F")
    return DenseVolume(values, origin=origin, spacing=spacing, axis_labels=labels)


@dataclass(frozen=True, eq=False)
class SparsePoints:
    """Above-cutoff voxels as (index, intensity) records.

    ``indices`` is (n, 3) int32 sorted lexicographically by (i, j, k) with no
    duplicates; ``intensities`` is (n,) float64, strictly positive and finite.
    """

    dims: tuple[int, int, int]
    indices: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"bad dims {dims}")
        idx = np.asarray(self.indices, dtype=np.int32).reshape(-1, 3)
        inten = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        if idx.shape[0] != inten.shape[0]:
            raise ValueError("indices and intensities length mismatch")
        if idx.shape[0]:
            if idx.min() < 0 or (idx >= np.array(dims, dtype=np.int64)).any():
                raise ValueError("voxel index out of bounds")
            keys = lex_keys(idx, dims)
            if not (np.diff(keys) > 0).all():
                raise ValueError("points must be lexicographically sorted and unique")
            if not np.isfinite(inten).all() or (inten <= 0).any():
                raise ValueError("intensities must be positive and finite")
        idx.flags.writeable = False
        inten.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "intensities", inten)

    @classmethod
    def from_unsorted(cls, dims, indices, intensities) -> "SparsePoints":
        idx = np.asarray(indices, dtype=np.int32).reshape(-1, 3)
        inten = np.asarray(intensities, dtype=np.float64).reshape(-1)
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
        return cls(tuple(dims), idx[order], inten[order])

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    def __len__(self) -> int:
        return self.n

    def take(self, positional: np.ndarray) -> "SparsePoints":
        """Subset by positional indices (must be in increasing order)."""
        return SparsePoints(self.dims, self.indices[positional], self.intensities[positional])


def lex_keys(indices: np.ndarray, dims) -> np.ndarray:
    """Linear voxel keys (i*ny + j)*nz + k; key order equals lex order."""
    _, ny, nz = (int(d) for d in dims)
    idx = indices.astype(np.int64, copy=False)
    return (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]


def points_equal(a: SparsePoints, b: SparsePoints) -> bool:
    return (
        a.dims == b.dims
        and np.array_equal(a.indices, b.indices)
        and np.array_equal(a.intensities, b.intensities)
    )


def to_sparse(v: DenseVolume, cutoff: float) -> SparsePoints:
    """Extract the voxels with value > cutoff (NaN never passes).

    Intensities must be positive, so negative cutoffs behave as cutoff 0.
    The result is sorted lexicographically (the natural scan order).
    """
    if not np.isfinite(cutoff):
        raise ValueError(f"cutoff must be finite, got {cutoff}")
    mask = v.values > max(float(cutoff), 0.0)  # NaN compares False
    ii, jj, kk = np.nonzero(mask)
    indices = np.empty((ii.size, 3), dtype=np.int32)
    indices[:, 0] = ii
    indices[:, 1] = jj
    indices[:, 2] = kk
    intensities = v.values[mask].astype(np.float64)
    return SparsePoints(v.dims, indices, intensities)


def slab(v: DenseVolume, axis: int, index: int, thickness: int = 1) -> np.ndarray:
    """2D cut perpendicular to ``axis``: mean over ``thickness`` planes.

    NaN samples are ignored in the mean; an all-NaN column stays NaN.
    """
    if axis not in (0, 1, 2):
        raise IndexError(f"axis must be 0, 1 or 2, got {axis}")
    if thickness < 1:
        raise IndexError(f"thickness must be positive, got {thickness}")
    dim = v.dims[axis]
    if index < 0 or index + thickness > dim:
        raise IndexError(
            f"slab [{index}, {index + thickness}) out of range for axis {axis} of extent {dim}"
        )
    sl = [np.s_[:], np.s_[:], np.s_[:]]
    sl[axis] = np.s_[index : index + thickness]
    block = v.values[tuple(sl)]
    count = np.sum(~np.isnan(block), axis=axis)
    total = np.nansum(block, axis=axis, dtype=np.float64)
    out = np.full(count.shape, np.nan)
    np.divide(total, count, out=out, where=count > 0)
    return out


def write_sparse_jsonl(points: SparsePoints, path) -> None:
    """One JSON object per point: {"i": ..., "j": ..., "k": ..., "v": ...}."""
    with open(path, "w") as f:
        for (i, j, k), v in zip(points.indices.tolist(), points.intensities.tolist()):
            f.write(f'{{"i": {i}, "j": {j}, "k": {k}, "v": {json.dumps(v)}}}\n')


def read_sparse_jsonl(path, dims: tuple[int, int, int] | None = None) -> SparsePoints:
    """Read the JSON-lines exchange format.

    When ``dims`` is not given it is inferred as max index + 1 per axis;
    cluster structure does not depend on the bounding extents.
    """
    ii, jj, kk, vv = [], [], [], []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ii.append(rec["i"])
                jj.append(rec["j"])
                kk.append(rec["k"])
                vv.append(rec["v"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}: bad point record on line {line_no}: {e}") from None
    indices = np.array([ii, jj, kk], dtype=np.int32).T.reshape(-1, 3)
    if dims is None:
        if indices.size == 0:
            dims = (1, 1, 1)
        else:
            dims = tuple(int(d) + 1 for d in indices.max(axis=0))
    return SparsePoints.from_unsorted(dims, indices, np.array(vv, dtype=np.float64))
