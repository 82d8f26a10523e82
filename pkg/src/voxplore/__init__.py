"""Exploration toolkit for large volumetric scalar datasets.

Workflow: load or synthesize a volume, inspect its intensity histogram to
pick a cutoff, sparsify, cluster with intensity-weighted DBSCAN, rank and
select clusters, peel shells, and export point clouds or iso-surface meshes
for interactive viewing.
"""

from .volume import (
    DenseVolume,
    SparsePoints,
    VvolFormatError,
    lex_keys,
    load_volume,
    points_equal,
    read_sparse_jsonl,
    save_volume,
    slab,
    to_sparse,
    volumes_equal,
    write_sparse_jsonl,
)
from .intensity import (
    Histogram,
    TransferFunction,
    alpha,
    cluster_alpha,
    detect_cusp,
    histogram,
    smooth_counts,
)
from .wdbscan import (
    BORDER,
    BRUTE_FORCE_CAP,
    CORE,
    DEFAULT_EPS,
    NOISE,
    ClusteringParams,
    ClusterResult,
    NeighborStencil,
    brute_force_cluster,
    cluster,
    load_labels,
    results_equal,
    save_labels,
    stencil,
    weighted_density,
)
from .features import (
    RANK_KEYS,
    ClusterStats,
    ShellResult,
    cluster_stats,
    rank_clusters,
    select,
    shell_extract,
)
from .mesh import (
    PointCloud,
    TriangleMesh,
    decimate,
    decimate_indices,
    isosurface,
    load_pointcloud,
    make_pointcloud,
    obj_bytes,
    pointcloud_bytes,
    pointcloud_from_bytes,
    rasterize_cluster,
    read_obj,
    save_pointcloud,
    write_obj,
)
from .synth import (
    DiffuseSpec,
    FeatureInfo,
    GroundTruth,
    SolidSpec,
    synth_diffuse,
    synth_solid,
)

__version__ = "0.1.0"

__all__ = [
    "DenseVolume", "SparsePoints", "VvolFormatError", "lex_keys",
    "load_volume", "save_volume", "volumes_equal", "points_equal",
    "to_sparse", "slab", "read_sparse_jsonl", "write_sparse_jsonl",
    "Histogram", "histogram", "smooth_counts", "detect_cusp",
    "TransferFunction", "alpha", "cluster_alpha",
    "NOISE", "CORE", "BORDER",
    "BRUTE_FORCE_CAP", "DEFAULT_EPS", "NeighborStencil", "stencil",
    "ClusteringParams", "ClusterResult", "cluster", "brute_force_cluster",
    "results_equal", "weighted_density", "save_labels", "load_labels",
    "RANK_KEYS", "ClusterStats", "ShellResult", "cluster_stats",
    "rank_clusters", "select", "shell_extract",
    "PointCloud", "TriangleMesh", "make_pointcloud", "decimate",
    "decimate_indices", "isosurface", "rasterize_cluster",
    "pointcloud_bytes", "pointcloud_from_bytes",
    "save_pointcloud", "load_pointcloud",
    "obj_bytes", "write_obj", "read_obj",
    "DiffuseSpec", "SolidSpec", "FeatureInfo", "GroundTruth",
    "synth_diffuse", "synth_solid",
    "__version__",
]
