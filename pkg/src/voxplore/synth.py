"""Synthetic volume generators with voxel-level ground truth.

Real reduced datasets of this kind are facility-internal, so the test and
demo pipelines run on analogs: diffuse-scattering-like volumes (sharp
high-intensity peaks plus broad weak features over a faint uniform
background) and tomography-like solids (constant-fill objects plus
background noise and filament artifacts).

Every generator returns ``(DenseVolume, GroundTruth)`` where the ground
truth labels each voxel -1 (noise/background) or with the id of the feature
it belongs to.  Feature membership follows the analytic support rule: a
voxel belongs to a Gaussian feature iff its scaled radius is within the
truncation bound, and to a solid iff it is inside the shape predicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import DenseVolume

DESK_SCALE_VOXELS = 512**3


@dataclass(frozen=True)
class FeatureInfo:
    """One generated feature: its analytic parameters and voxel count."""

    kind: str  # "sharp" | "broad" | "solid"
    center: tuple[float, float, float]
    sigma: tuple[float, float, float]
    amplitude: float
    n_voxels: int


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-voxel class labels: -1 noise, else feature id."""

    labels: np.ndarray  # int32, volume dims
    features: tuple[FeatureInfo, ...]

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int32)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def n_features(self) -> int:
        return len(self.features)

    def mask(self, feature_id: int) -> np.ndarray:
        return self.labels == feature_id

    def signal_mask(self) -> np.ndarray:
        return self.labels >= 0


@dataclass(frozen=True)
class DiffuseSpec:
    """Parameters for diffuse-scattering-like volumes.

    Sharp peaks are near-voxel-size Gaussians of very high amplitude; broad
    features are wide, weak Gaussians (optionally ellipsoidal).  The whole
    grid carries uniform background noise in (0, noise_ceiling).  Feature
    support is truncated at ``truncate`` scaled radii; the truncated ball is
    the ground-truth mask.  ``min_gap`` is the minimum distance between the
    truncation boundaries of any two features (in voxels).
    """

    dims: tuple[int, int, int] = (64, 64, 64)
    n_sharp: int = 2
    n_broad: int = 1
    sharp_amplitude: tuple[float, float] = (1e3, 1e6)
    broad_amplitude: tuple[float, float] = (1e1, 1e2)
    sharp_sigma: tuple[float, float] = (0.8, 1.2)
    broad_sigma: tuple[float, float] = (5.0, 7.0)
    broad_axis_ratio: tuple[float, float] = (0.8, 1.25)
    noise_ceiling: float = 1e-3
    truncate: float = 3.0
    min_gap: float = 10.0

    def __post_init__(self):
        if int(np.prod([int(d) for d in self.dims])) > DESK_SCALE_VOXELS:
            raise ValueError(f"dims {self.dims} exceed desk scale ({DESK_SCALE_VOXELS} voxels)")
        if self.noise_ceiling < 0:
            raise ValueError("noise_ceiling must be non-negative")
        r_max = 0.0
        if self.n_sharp:
            r_max = self.truncate * self.sharp_sigma[1]
        if self.n_broad:
            r_max = max(r_max, self.truncate * self.broad_sigma[1] * self.broad_axis_ratio[1])
        if r_max and 2 * r_max + 3 > min(int(d) for d in self.dims):
            raise ValueError(
                f"largest truncated feature (radius {r_max:.1f}) cannot fit in dims"
                f" {self.dims}; shrink sigma/truncate or enlarge the volume"
            )

    def signal_floor(self) -> float:
        """Smallest value any feature voxel can take (at the truncation edge)."""
        lo = min(self.sharp_amplitude[0] if self.n_sharp else np.inf,
                 self.broad_amplitude[0] if self.n_broad else np.inf)
        return float(lo * np.exp(-0.5 * self.truncate**2))


def _place_centers(rng, dims, radii, min_gap, tries_per_feature=2000, restarts=50):
    """Rejection-sample feature centers with pairwise boundary gaps.

    Centers stay far enough from the faces that the whole truncated support
    fits.  Largest features are placed first (restored to input order on
    return); a dead end restarts the whole placement with fresh draws.
    """
    extent = np.asarray([int(d) for d in dims], dtype=np.float64)
    order = np.argsort([-r for r in radii], kind="stable")
    for _ in range(restarts):
        centers: dict[int, np.ndarray] = {}
        placed_r: list[tuple[np.ndarray, float]] = []
        for fi in order:
            r = radii[fi]
            lo, hi = r + 1.0, extent - r - 2.0
            if (hi <= lo).any():
                raise ValueError(
                    f"feature radius {r:.1f} does not fit in dims {tuple(int(d) for d in dims)}"
                )
            done = False
            for _ in range(tries_per_feature):
                c = rng.uniform(lo, hi)
                if all(np.linalg.norm(c - c2) >= r + r2 + min_gap for c2, r2 in placed_r):
                    centers[fi] = c
                    placed_r.append((c, r))
                    done = True
                    break
            if not done:
                break
        else:
            return [centers[fi] for fi in range(len(radii))]
    raise ValueError(
        f"could not place {len(radii)} features with min_gap {min_gap} in dims"
        f" {tuple(int(d) for d in dims)}; reduce feature count/size or the gap"
    )


def _add_gaussian(values, labels, contrib_best, center, sigma, amplitude, truncate, fid):
    """Add one truncated Gaussian; claim voxels where it dominates."""
    dims = values.shape
    lo = [max(0, int(np.floor(center[a] - truncate * sigma[a]))) for a in range(3)]
    hi = [min(dims[a], int(np.ceil(center[a] + truncate * sigma[a])) + 1) for a in range(3)]
    if any(l >= h for l, h in zip(lo, hi)):
        return 0
    ax = [np.arange(lo[a], hi[a], dtype=np.float64) for a in range(3)]
    rho2 = (
        ((ax[0] - center[0]) / sigma[0])[:, None, None] ** 2
        + ((ax[1] - center[1]) / sigma[1])[None, :, None] ** 2
        + ((ax[2] - center[2]) / sigma[2])[None, None, :] ** 2
    )
    inside = rho2 <= truncate**2
    contrib = np.where(inside, amplitude * np.exp(-0.5 * rho2), 0.0)
    box = np.s_[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    values[box] += contrib.astype(np.float32)
    # overlapping features: the larger contribution owns the voxel
    claim = inside & (contrib > contrib_best[box])
    contrib_best[box] = np.where(claim, contrib, contrib_best[box])
    labels[box] = np.where(claim, fid, labels[box])
    return int(inside.sum())


def synth_diffuse(spec: DiffuseSpec, seed: int) -> tuple[DenseVolume, GroundTruth]:
    """Deterministic diffuse-scattering analog for a given seed."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in spec.dims)

    sigmas: list[np.ndarray] = []
    amps: list[float] = []
    kinds: list[str] = []
    for _ in range(spec.n_sharp):
        s = rng.uniform(*spec.sharp_sigma)
        sigmas.append(np.array([s, s, s]))
        amps.append(10 ** rng.uniform(np.log10(spec.sharp_amplitude[0]),
                                      np.log10(spec.sharp_amplitude[1])))
        kinds.append("sharp")
    for _ in range(spec.n_broad):
        s = rng.uniform(*spec.broad_sigma)
        ratios = rng.uniform(*spec.broad_axis_ratio, size=3)
        sigmas.append(s * ratios)
        amps.append(10 ** rng.uniform(np.log10(spec.broad_amplitude[0]),
                                      np.log10(spec.broad_amplitude[1])))
        kinds.append("broad")

    radii = [spec.truncate * float(s.max()) for s in sigmas]
    centers = _place_centers(rng, dims, radii, spec.min_gap) if sigmas else []

    if spec.noise_ceiling > 0:
        values = rng.uniform(0.0, spec.noise_ceiling, size=dims).astype(np.float32)
    else:
        values = np.zeros(dims, dtype=np.float32)
    labels = np.full(dims, -1, dtype=np.int32)
    contrib_best = np.zeros(dims, dtype=np.float64)

    feats = []
    for fid, (c, s, a, kind) in enumerate(zip(centers, sigmas, amps, kinds)):
        n_vox = _add_gaussian(values, labels, contrib_best, c, s, a, spec.truncate, fid)
        feats.append(FeatureInfo(kind, tuple(c), tuple(s), float(a), n_vox))
    # recount after overlap resolution
    if feats:
        counts = np.bincount(labels[labels >= 0], minlength=len(feats))
        feats = [FeatureInfo(f.kind, f.center, f.sigma, f.amplitude, int(counts[i]))
                 for i, f in enumerate(feats)]
    return DenseVolume(values, axis_labels=("H", "K", "L")), GroundTruth(labels, tuple(feats))


@dataclass(frozen=True)
class SolidSpec:
    """Parameters for tomography-like solid objects.

    ``shape`` is one of "sphere", "cuboid", "turbine" (a hub cylinder with
    radial blades).  The object has constant ``fill`` intensity; background
    noise is uniform in (0, noise); ``n_filaments`` random low-intensity line
    segments mimic reconstruction relics.
    """

    shape: str = "sphere"
    dims: tuple[int, int, int] = (64, 64, 64)
    fill: float = 1.0
    noise: float = 0.0
    radius: float = 20.0
    half_extents: tuple[float, float, float] = (16.0, 12.0, 20.0)
    hub_radius: float = 6.0
    hub_height: float = 30.0
    n_blades: int = 5
    blade_length: float = 20.0
    blade_thickness: float = 3.0
    blade_height: float = 18.0
    n_filaments: int = 0
    filament_intensity: float = 0.05

    def __post_init__(self):
        if int(np.prod([int(d) for d in self.dims])) > DESK_SCALE_VOXELS:
            raise ValueError(f"dims {self.dims} exceed desk scale ({DESK_SCALE_VOXELS} voxels)")
        if self.shape not in ("sphere", "cuboid", "turbine"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.fill <= 0:
            raise ValueError("fill must be positive")


def _solid_mask(spec: SolidSpec) -> np.ndarray:
    nx, ny, nz = (int(d) for d in spec.dims)
    c = (np.array([nx, ny, nz], dtype=np.float64) - 1.0) / 2.0
    x = (np.arange(nx, dtype=np.float32) - c[0])[:, None, None]
    y = (np.arange(ny, dtype=np.float32) - c[1])[None, :, None]
    z = (np.arange(nz, dtype=np.float32) - c[2])[None, None, :]
    if spec.shape == "sphere":
        return x * x + y * y + z * z <= np.float32(spec.radius) ** 2
    if spec.shape == "cuboid":
        hx, hy, hz = spec.half_extents
        return (np.abs(x) <= hx) & (np.abs(y) <= hy) & (np.abs(z) <= hz)
    # turbine: hub cylinder along z plus n_blades radial slabs
    mask = (x * x + y * y <= np.float32(spec.hub_radius) ** 2) & (
        np.abs(z) <= spec.hub_height / 2
    )
    for b in range(spec.n_blades):
        theta = 2 * np.pi * b / spec.n_blades
        u = x * np.cos(theta) + y * np.sin(theta)  # along the blade
        w = -x * np.sin(theta) + y * np.cos(theta)  # across the blade
        mask |= (
            (u >= 0)
            & (u <= spec.blade_length)
            & (np.abs(w) <= spec.blade_thickness / 2)
            & (np.abs(z) <= spec.blade_height / 2)
        )
    return mask


def _stamp_filaments(values, mask, spec: SolidSpec, rng) -> None:
    """Random line segments of low intensity, outside the object only."""
    nx, ny, nz = values.shape
    dims = np.array([nx, ny, nz], dtype=np.float64)
    for _ in range(spec.n_filaments):
        a = rng.uniform(0, dims - 1)
        b = rng.uniform(0, dims - 1)
        n_steps = max(2, int(np.ceil(np.linalg.norm(b - a) * 2)))
        t = np.linspace(0.0, 1.0, n_steps)[:, None]
        pts = np.round(a + t * (b - a)).astype(np.int64)
        pts = np.unique(pts, axis=0)
        sel = (pts[:, 0], pts[:, 1], pts[:, 2])
        outside = ~mask[sel]
        sel = tuple(s[outside] for s in sel)
        values[sel] = np.maximum(values[sel], np.float32(spec.filament_intensity))


def synth_solid(spec: SolidSpec, seed: int) -> tuple[DenseVolume, GroundTruth]:
    """Deterministic solid-object analog for a given seed."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in spec.dims)
    mask = _solid_mask(spec)
    if spec.noise > 0:
        values = rng.uniform(0.0, spec.noise, size=dims).astype(np.float32)
    else:
        values = np.zeros(dims, dtype=np.float32)
    _stamp_filaments(values, mask, spec, rng)
    values[mask] = np.float32(spec.fill)
    labels = np.where(mask, np.int32(0), np.int32(-1))
    n_vox = int(mask.sum())
    c = tuple((np.array(dims, dtype=np.float64) - 1.0) / 2.0)
    feats = (FeatureInfo("solid", c, (0.0, 0.0, 0.0), float(spec.fill), n_vox),) if n_vox else ()
    return DenseVolume(values), GroundTruth(labels, feats)
