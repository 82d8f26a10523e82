"""Local HTTP service steering the pipeline for the interactive viewer.

Volumes are loaded by path, clustering runs execute asynchronously under a
job id (one job per exact parameter tuple; repeats return the cached run),
and completed runs serve ranked cluster stats, decimated binary point
clouds, shell peels, and OBJ meshes.  A run id is its job id.  Completed
responses are immutable: the same URL and parameters always stream the
same bytes.

Single-machine tool: no auth, no persistence, nothing is ever evicted
within a session.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field

from .features import ShellResult, cluster_stats, shell_extract
from .intensity import cluster_alpha, detect_cusp, histogram
from .mesh import (
    MESH_VERSION,
    POINTCLOUD_VERSION,
    decimate_indices,
    isosurface,
    make_pointcloud,
    obj_bytes,
    pointcloud_bytes,
    rasterize_cluster,
)
from .volume import DenseVolume, SparsePoints, VvolFormatError, load_volume, to_sparse
from .wdbscan import ClusteringParams, ClusterResult, cluster

RANK_KEYS = ("size", "total_intensity", "max_intensity")


class VolumeIn(BaseModel):
    path: str


class ClusterIn(BaseModel):
    cutoff: float
    min_weight: float
    eps: float = 1.7
    include_border: bool = True


class ShellIn(BaseModel):
    cluster_id: int = Field(ge=0)
    depth: int = Field(default=1, ge=1)


@dataclass
class _VolumeEntry:
    volume_id: str
    path: str
    volume: DenseVolume
    sparse_cache: dict[float, SparsePoints] = field(default_factory=dict)


@dataclass
class _Job:
    job_id: str
    volume_id: str
    tuple_key: tuple
    request: dict
    status: str = "pending"  # pending | running | done | failed
    error: str | None = None
    points: SparsePoints | None = None
    result: ClusterResult | None = None
    stats: list | None = None
    shells: dict[tuple[int, int], ShellResult] = field(default_factory=dict)


class _State:
    def __init__(self, threads: int | None = None):
        self.threads = threads
        self.lock = threading.Lock()
        self.volumes: dict[str, _VolumeEntry] = {}
        self.jobs: dict[str, _Job] = {}
        self.by_tuple: dict[tuple, str] = {}
        self._counter = 0

    def next_id(self, prefix: str) -> str:
        with self.lock:
            self._counter += 1
            return f"{prefix}-{self._counter}"


def _job_payload(job: _Job) -> dict:
    out = {
        "job_id": job.job_id,
        "run_id": job.job_id,
        "volume_id": job.volume_id,
        "status": job.status,
        "params": job.request,
    }
    if job.error is not None:
        out["error"] = job.error
    if job.status == "done" and job.result is not None:
        out["n_clusters"] = job.result.n_clusters
        out["n_points"] = job.result.n_points
        out["n_noise"] = job.result.n_noise
    return out


def _run_job(state: _State, job: _Job, entry: _VolumeEntry, params: ClusteringParams,
             cutoff: float) -> None:
    try:
        with state.lock:
            job.status = "running"
            points = entry.sparse_cache.get(cutoff)
        if points is None:
            points = to_sparse(entry.volume, cutoff)
            with state.lock:
                entry.sparse_cache[cutoff] = points
        result = cluster(points, params, threads=state.threads)
        stats = cluster_stats(result, points)
        # publish everything in one step: pollers never see partial data
        with state.lock:
            job.points = points
            job.result = result
            job.stats = stats
            job.status = "done"
    except Exception as exc:  # a failed run keeps its error for inspection
        with state.lock:
            job.error = f"{type(exc).__name__}: {exc}"
            job.status = "failed"


def create_app(threads: int | None = None) -> FastAPI:
    app = FastAPI(title="voxplore service", version="1")
    state = _State(threads=threads)
    app.state.vox = state

    def get_volume(volume_id: str) -> _VolumeEntry:
        with state.lock:
            entry = state.volumes.get(volume_id)
        if entry is None:
            raise HTTPException(404, f"unknown volume id {volume_id!r}")
        return entry

    def get_job(job_id: str) -> _Job:
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job id {job_id!r}")
        return job

    def get_run(run_id: str) -> _Job:
        job = get_job(run_id)
        with state.lock:
            status = job.status
            error = job.error
        if status in ("pending", "running"):
            raise HTTPException(409, f"run {run_id!r} is still {status}")
        if status == "failed":
            raise HTTPException(500, f"run {run_id!r} failed: {error}")
        return job

    def run_cluster_or_404(job: _Job, cluster_id: int) -> np.ndarray:
        if not 0 <= cluster_id < job.result.n_clusters:
            raise HTTPException(404, f"unknown cluster id {cluster_id}")
        return job.result.members(cluster_id)

    @app.post("/volumes")
    def post_volume(body: VolumeIn) -> dict:
        try:
            volume = load_volume(body.path)
        except (OSError, VvolFormatError) as exc:
            raise HTTPException(422, f"cannot load volume: {exc}") from exc
        entry = _VolumeEntry(state.next_id("vol"), body.path, volume)
        with state.lock:
            state.volumes[entry.volume_id] = entry
        lo, hi = volume.intensity_range()
        return {
            "volume_id": entry.volume_id,
            "dims": [int(d) for d in volume.dims],
            "intensity_range": [lo, hi],
        }

    @app.get("/volumes/{volume_id}/histogram")
    def get_histogram(volume_id: str, bins: int = Query(default=256, ge=2)) -> dict:
        entry = get_volume(volume_id)
        try:
            h = histogram(entry.volume, n_bins=bins)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"histogram": h.to_json_dict(), "cusp": detect_cusp(h)}

    @app.post("/volumes/{volume_id}/cluster")
    def post_cluster(volume_id: str, body: ClusterIn) -> dict:
        entry = get_volume(volume_id)
        try:
            params = ClusteringParams(min_weight=body.min_weight, eps=body.eps,
                                      include_border=body.include_border)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        key = (volume_id, float(body.cutoff), params.key())
        with state.lock:
            existing_id = state.by_tuple.get(key)
            existing = state.jobs.get(existing_id) if existing_id else None
            if existing is not None and existing.status in ("pending", "running"):
                raise HTTPException(
                    409, f"parameter tuple already running as job {existing_id!r}"
                )
            if existing is not None:
                return {"job_id": existing_id, "status": existing.status, "cached": True}
        job = _Job(
            job_id=state.next_id("run"),
            volume_id=volume_id,
            tuple_key=key,
            request={
                "cutoff": float(body.cutoff), "eps": params.eps,
                "min_weight": params.min_weight,
                "include_border": params.include_border,
            },
        )
        with state.lock:
            state.jobs[job.job_id] = job
            state.by_tuple[key] = job.job_id
        worker = threading.Thread(
            target=_run_job, args=(state, job, entry, params, float(body.cutoff)),
            daemon=True,
        )
        worker.start()
        return {"job_id": job.job_id, "status": job.status, "cached": False}

    @app.get("/jobs/{job_id}")
    def poll_job(job_id: str) -> dict:
        job = get_job(job_id)
        with state.lock:
            return _job_payload(job)

    @app.get("/runs/{run_id}/clusters")
    def list_clusters(run_id: str, key: str = Query(default="size")) -> dict:
        job = get_run(run_id)
        if key not in RANK_KEYS:
            raise HTTPException(422, f"key must be one of {RANK_KEYS}")
        ranked = sorted(job.stats, key=lambda s: (-getattr(s, key), s.id))
        return {
            "run_id": run_id,
            "key": key,
            "n_clusters": job.result.n_clusters,
            "n_points": job.result.n_points,
            "n_noise": job.result.n_noise,
            "clusters": [s.to_json_dict() for s in ranked],
        }

    def _points_response(points: SparsePoints, subset: np.ndarray, entry: _VolumeEntry,
                         target: int, mode: str, seed: int) -> Response:
        sub = points.take(subset)
        alphas = cluster_alpha(sub.intensities) if sub.n else np.zeros(0)
        try:
            keep = decimate_indices(sub, target, mode=mode, seed=seed)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        pc = make_pointcloud(sub.take(keep), alphas[keep],
                             origin=entry.volume.origin, spacing=entry.volume.spacing)
        blob = pointcloud_bytes(pc)
        return Response(
            content=blob,
            media_type="application/octet-stream",
            headers={
                "X-Format-Version": str(POINTCLOUD_VERSION),
                "X-Point-Count": str(pc.n),
            },
        )

    @app.get("/runs/{run_id}/clusters/{cluster_id}/points")
    def cluster_points(run_id: str, cluster_id: int,
                       target: int = Query(default=50_000, ge=1),
                       mode: str = Query(default="importance"),
                       seed: int = Query(default=0)) -> Response:
        job = get_run(run_id)
        members = run_cluster_or_404(job, cluster_id)
        entry = get_volume(job.volume_id)
        return _points_response(job.points, members, entry, target, mode, seed)

    @app.post("/runs/{run_id}/shell")
    def post_shell(run_id: str, body: ShellIn) -> dict:
        job = get_run(run_id)
        run_cluster_or_404(job, body.cluster_id)
        key = (body.cluster_id, body.depth)
        with state.lock:
            shell = job.shells.get(key)
        if shell is None:
            params = ClusteringParams(
                min_weight=job.request["min_weight"], eps=job.request["eps"],
                include_border=True,
            )
            try:
                shell = shell_extract(job.points, params, body.cluster_id,
                                      peel_depth=body.depth, pass1=job.result)
            except ValueError as exc:
                raise HTTPException(422, str(exc)) from exc
            with state.lock:
                job.shells[key] = shell
        return {"run_id": run_id, **shell.stats_dict()}

    @app.get("/runs/{run_id}/shell/points")
    def shell_points(run_id: str,
                     cluster_id: int = Query(ge=0),
                     depth: int = Query(default=1, ge=1),
                     target: int = Query(default=50_000, ge=1),
                     mode: str = Query(default="importance"),
                     seed: int = Query(default=0)) -> Response:
        job = get_run(run_id)
        with state.lock:
            shell = job.shells.get((cluster_id, depth))
        if shell is None:
            raise HTTPException(
                404, f"no shell computed for cluster {cluster_id} at depth {depth}"
            )
        entry = get_volume(job.volume_id)
        all_of_it = np.arange(shell.shell.n, dtype=np.int64)
        return _points_response(shell.shell, all_of_it, entry, target, mode, seed)

    @app.get("/runs/{run_id}/clusters/{cluster_id}/mesh")
    def cluster_mesh(run_id: str, cluster_id: int, iso: float = Query()) -> Response:
        job = get_run(run_id)
        run_cluster_or_404(job, cluster_id)
        entry = get_volume(job.volume_id)
        try:
            vol = rasterize_cluster(job.points, job.result, cluster_id,
                                    origin=entry.volume.origin,
                                    spacing=entry.volume.spacing)
            mesh = isosurface(vol, iso)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        return Response(
            content=obj_bytes(mesh),
            media_type="model/obj",
            headers={
                "X-Format-Version": str(MESH_VERSION),
                "X-Triangle-Count": str(mesh.n_triangles),
            },
        )

    return app
