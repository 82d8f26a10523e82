"""Batch pipeline driver.

Each subcommand performs one stage (generate, inspect, filter, cluster,
rank, peel, export, serve) and communicates with the others only through
the documented file formats, so any chain of stages can be rerun or
restarted from its files.  Every invocation prints one machine-readable
JSON summary to stdout and writes a ``<artifact>.prov.json`` provenance
sidecar next to each artifact it produces.

Exit codes: 0 success, 1 data error (JSON error object on stdout),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .features import rank_clusters, shell_extract
from .intensity import TransferFunction, alpha, cluster_alpha, detect_cusp, histogram
from .mesh import (
    MESH_VERSION,
    POINTCLOUD_VERSION,
    decimate_indices,
    isosurface,
    make_pointcloud,
    rasterize_cluster,
    save_pointcloud,
    write_obj,
)
from .synth import DiffuseSpec, SolidSpec, synth_diffuse, synth_solid
from .volume import (
    VVOL_VERSION,
    load_volume,
    read_sparse_jsonl,
    save_volume,
    to_sparse,
    write_sparse_jsonl,
)
from .wdbscan import BORDER, CORE, ClusteringParams, cluster, load_labels, save_labels

SCHEMA = "voxplore/1"
PROV_SCHEMA = "voxplore.prov/1"
THREADS_ENV = "VOXPLORE_THREADS"

FORMAT_VERSIONS = {
    "vvol": VVOL_VERSION,
    "sparse_jsonl": 1,
    "labels": 1,
    "pointcloud": POINTCLOUD_VERSION,
    "mesh_obj": MESH_VERSION,
}


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _dims_arg(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError(f"dims must be three positive ints, got {text!r}")
    return tuple(parts)


def _triple_arg(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated reals, got {text!r}")
    return tuple(parts)


def _write_prov(artifact: str, command: str, config: dict) -> None:
    record = {
        "schema": PROV_SCHEMA,
        "tool_version": __version__,
        "command": command,
        "config": config,
        "format_versions": FORMAT_VERSIONS,
    }
    with open(f"{artifact}.prov.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_cutoff(raw: str, volume) -> float:
    """A literal value, or "auto" for the detected histogram cusp."""
    if raw != "auto":
        return float(raw)
    cusp = detect_cusp(histogram(volume))
    if cusp is None:
        raise ValueError(
            "no cusp detected in the intensity histogram; pass an explicit --cutoff"
        )
    return cusp


def _params_from(args) -> ClusteringParams:
    return ClusteringParams(
        min_weight=args.min_weight, eps=args.eps, include_border=args.include_border
    )


def _cmd_synth(args) -> dict:
    dims = args.dims
    if args.kind == "diffuse":
        spec = DiffuseSpec(dims=dims, n_sharp=args.n_sharp, n_broad=args.n_broad,
                           noise_ceiling=args.noise)
        vol, truth = synth_diffuse(spec, args.seed)
    else:
        spec = SolidSpec(shape=args.shape, dims=dims, fill=args.fill, noise=args.noise,
                         radius=args.radius, n_filaments=args.filaments)
        vol, truth = synth_solid(spec, args.seed)
    save_volume(vol, args.out)
    config = {
        "kind": args.kind, "dims": list(dims), "seed": args.seed,
        "noise": args.noise, "out": args.out,
    }
    if args.kind == "solid":
        config.update(shape=args.shape, fill=args.fill, radius=args.radius,
                      filaments=args.filaments)
    else:
        config.update(n_sharp=args.n_sharp, n_broad=args.n_broad)
    _write_prov(args.out, "synth", config)
    if args.truth_out:
        # dense int32 labels, same x-fastest order as the volume payload
        truth.labels.ravel(order="F").astype("<i4").tofile(args.truth_out)
        _write_prov(args.truth_out, "synth", config)
    return {
        "command": "synth", "out": args.out, "dims": list(dims),
        "n_features": truth.n_features,
        "feature_voxels": int(truth.signal_mask().sum()),
        "seed": args.seed,
    }


def _cmd_hist(args) -> dict:
    vol = load_volume(args.input)
    h = histogram(vol, n_bins=args.bins)
    cusp = detect_cusp(h)
    payload = h.to_json_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")
        _write_prov(args.out, "hist", {"input": args.input, "bins": args.bins})
    return {
        "command": "hist", "input": args.input, "bins": args.bins,
        "histogram": payload, "cusp": cusp,
    }


def _cmd_filter(args) -> dict:
    vol = load_volume(args.input)
    cutoff = _resolve_cutoff(args.cutoff, vol)
    points = to_sparse(vol, cutoff)
    write_sparse_jsonl(points, args.out)
    config = {"input": args.input, "cutoff": cutoff, "cutoff_arg": args.cutoff,
              "dims": [int(d) for d in vol.dims], "out": args.out}
    _write_prov(args.out, "filter", config)
    return {
        "command": "filter", "out": args.out, "cutoff": cutoff,
        "n_points": points.n, "dims": [int(d) for d in vol.dims],
    }


def _cmd_cluster(args) -> dict:
    points = read_sparse_jsonl(args.input, dims=args.dims)
    params = _params_from(args)
    result = cluster(points, params, threads=args.threads)
    save_labels(result.labels, args.labels_out)
    config = {
        "input": args.input, "eps": args.eps, "min_weight": args.min_weight,
        "include_border": args.include_border, "labels_out": args.labels_out,
        "threads": args.threads,
    }
    _write_prov(args.labels_out, "cluster", config)
    return {
        "command": "cluster", "labels_out": args.labels_out,
        "n_points": points.n, "n_clusters": result.n_clusters,
        "n_core": int((result.flags == CORE).sum()),
        "n_border": int((result.flags == BORDER).sum()),
        "n_noise": result.n_noise,
    }


def _cmd_rank(args) -> dict:
    points = read_sparse_jsonl(args.input, dims=args.dims)
    params = _params_from(args)
    result = cluster(points, params, threads=args.threads)
    ranked = rank_clusters(result, points, key=args.key)
    if args.top is not None:
        ranked = ranked[: args.top]
    return {
        "command": "rank", "key": args.key, "n_clusters": result.n_clusters,
        "clusters": [s.to_json_dict() for s in ranked],
    }


def _cmd_shell(args) -> dict:
    points = read_sparse_jsonl(args.input, dims=args.dims)
    params = _params_from(args)
    res = shell_extract(points, params, args.cluster, peel_depth=args.depth)
    config = {
        "input": args.input, "cluster": args.cluster, "depth": args.depth,
        "eps": args.eps, "min_weight": args.min_weight,
    }
    if args.shell_out:
        write_sparse_jsonl(res.shell, args.shell_out)
        _write_prov(args.shell_out, "shell", config)
    if args.interior_out:
        write_sparse_jsonl(res.interior, args.interior_out)
        _write_prov(args.interior_out, "shell", config)
    summary = {"command": "shell"}
    summary.update(res.stats_dict())
    return summary


def _cmd_export(args) -> dict:
    points = read_sparse_jsonl(args.input, dims=args.dims)
    params = _params_from(args)
    result = cluster(points, params, threads=args.threads)
    if not 0 <= args.cluster < result.n_clusters:
        raise ValueError(f"unknown cluster id {args.cluster}")
    config = {
        "input": args.input, "cluster": args.cluster, "mode": args.mode,
        "eps": args.eps, "min_weight": args.min_weight, "out": args.out,
    }

    if args.mode == "mesh":
        vol = rasterize_cluster(points, result, args.cluster,
                                origin=args.origin, spacing=args.spacing)
        mesh = isosurface(vol, args.iso)
        write_obj(mesh, args.out)
        config["iso"] = args.iso
        _write_prov(args.out, "export", config)
        return {
            "command": "export", "mode": "mesh", "out": args.out,
            "cluster": args.cluster, "iso": args.iso,
            "n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles,
        }

    member_pos = result.members(args.cluster)
    sub = points.take(member_pos)
    if args.alpha == "cluster":
        alphas = cluster_alpha(sub.intensities)
        alpha_mode = "cluster"
    else:
        tf = TransferFunction(args.cusp, args.threshold)
        alphas = alpha(tf, sub.intensities)
        alpha_mode = f"tf:{args.cusp}:{args.threshold}"
    keep = decimate_indices(sub, args.target, mode=args.decimate, seed=args.seed)
    pc = make_pointcloud(sub.take(keep), alphas[keep], origin=args.origin,
                         spacing=args.spacing, alpha_mode=alpha_mode)
    save_pointcloud(pc, args.out)
    config.update(alpha=alpha_mode, target=args.target, decimate=args.decimate,
                  seed=args.seed)
    _write_prov(args.out, "export", config)
    return {
        "command": "export", "mode": "pointcloud", "out": args.out,
        "cluster": args.cluster, "n_points": pc.n, "alpha": alpha_mode,
    }


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service import create_app

    app = create_app(threads=args.threads)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"command": "serve", "host": args.host, "port": args.port}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxplore",
        description="Explore volumetric scalar data: synthesize, histogram, "
                    "filter, cluster, peel, export, serve.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"parallelism cap (default: ${THREADS_ENV} or CPU count)")

    def add_cluster_params(p):
        p.add_argument("--eps", type=float, default=1.7)
        p.add_argument("--min-weight", type=float, required=True)
        p.add_argument("--include-border", action=argparse.BooleanOptionalAction,
                       default=True)
        p.add_argument("--dims", type=_dims_arg, default=None,
                       help="lattice dims i,j,k (default: inferred from input)")

    p = sub.add_parser("synth", help="generate a synthetic volume")
    p.add_argument("--kind", choices=["diffuse", "solid"], default="diffuse")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_dims_arg, default=(64, 64, 64))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=1e-3,
                   help="background noise ceiling (diffuse) or level (solid)")
    p.add_argument("--n-sharp", type=int, default=2)
    p.add_argument("--n-broad", type=int, default=1)
    p.add_argument("--shape", choices=["sphere", "cuboid", "turbine"], default="sphere")
    p.add_argument("--fill", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--filaments", type=int, default=0)
    p.add_argument("--truth-out", default=None,
                   help="write dense int32 ground-truth labels (x-fastest order)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("hist", help="intensity histogram and detected cusp")
    p.add_argument("--input", required=True)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--out", default=None, help="also write histogram JSON here")
    p.set_defaults(func=_cmd_hist)

    p = sub.add_parser("filter", help="sparsify a volume above a cutoff")
    p.add_argument("--input", required=True)
    p.add_argument("--cutoff", required=True,
                   help='intensity cutoff, or "auto" for the detected cusp')
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("cluster", help="weighted DBSCAN over sparse points")
    p.add_argument("--input", required=True, help="sparse points JSON-lines")
    add_cluster_params(p)
    p.add_argument("--labels-out", required=True)
    add_threads(p)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("rank", help="rank clusters by a statistic")
    p.add_argument("--input", required=True)
    add_cluster_params(p)
    p.add_argument("--key", choices=["size", "total_intensity", "max_intensity"],
                   default="size")
    p.add_argument("--top", type=int, default=None)
    add_threads(p)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("shell", help="peel boundary layers off one cluster")
    p.add_argument("--input", required=True)
    add_cluster_params(p)
    p.add_argument("--cluster", type=int, required=True)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--shell-out", default=None)
    p.add_argument("--interior-out", default=None)
    add_threads(p)
    p.set_defaults(func=_cmd_shell)

    p = sub.add_parser("export", help="export a cluster as point cloud or mesh")
    p.add_argument("--input", required=True)
    add_cluster_params(p)
    p.add_argument("--cluster", type=int, required=True)
    p.add_argument("--mode", choices=["pointcloud", "mesh"], default="pointcloud")
    p.add_argument("--out", required=True)
    p.add_argument("--origin", type=_triple_arg, default=(0.0, 0.0, 0.0))
    p.add_argument("--spacing", type=_triple_arg, default=(1.0, 1.0, 1.0))
    p.add_argument("--target", type=int, default=50_000,
                   help="decimation budget for point clouds")
    p.add_argument("--decimate", choices=["stride", "importance"], default="importance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", choices=["cluster", "tf"], default="cluster")
    p.add_argument("--cusp", type=float, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--iso", type=float, default=0.5)
    add_threads(p)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1",
                   help="bind address (default localhost only)")
    p.add_argument("--port", type=int, default=8000)
    add_threads(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "export" and args.alpha == "tf" and (
        args.cusp is None or args.threshold is None
    ):
        parser.error("--alpha tf requires --cusp and --threshold")
    try:
        summary = {"schema": SCHEMA}
        summary.update(args.func(args))
    except (ValueError, OSError) as exc:
        error = {"schema": SCHEMA, "error": {
            "type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(error))
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
