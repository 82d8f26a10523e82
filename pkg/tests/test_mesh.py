"""Point-cloud export, decimation, and marching-cubes isosurfaces."""

from __future__ import annotations

import numpy as np
import pytest

from voxplore import (
    ClusteringParams,
    DenseVolume,
    SparsePoints,
    TriangleMesh,
    cluster,
    decimate,
    decimate_indices,
    isosurface,
    lex_keys,
    load_pointcloud,
    make_pointcloud,
    rasterize_cluster,
    save_pointcloud,
    write_obj,
)
from voxplore.mesh import obj_bytes, pointcloud_bytes, pointcloud_from_bytes, read_obj

from conftest import is_consistently_oriented, is_watertight, undirected_edge_counts
from test_wdbscan import block_points


def euler_characteristic(mesh: TriangleMesh) -> int:
    edges, _ = undirected_edge_counts(mesh.triangles)
    return mesh.n_vertices - edges.shape[0] + mesh.n_triangles


def signed_volume(mesh: TriangleMesh) -> float:
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def sphere_field(r0: float, dims=(24, 24, 24)) -> DenseVolume:
    """Smooth field r0 - |x - center|; the zero level set is a sphere."""
    c = (np.array(dims) - 1.0) / 2.0
    ii, jj, kk = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    d = np.sqrt((ii - c[0]) ** 2 + (jj - c[1]) ** 2 + (kk - c[2]) ** 2)
    return DenseVolume(r0 - d)


def ramp_points(n=100, dims=(128, 4, 4)):
    idx = np.stack([np.arange(n), np.zeros(n, int), np.zeros(n, int)], axis=1)
    return SparsePoints(dims, idx.astype(np.int32), np.linspace(1, 2, n))


class TestDecimate:
    def test_target_at_or_above_n_is_identity(self):
        p = ramp_points(50)
        np.testing.assert_array_equal(decimate_indices(p, 50), np.arange(50))
        np.testing.assert_array_equal(decimate_indices(p, 99), np.arange(50))

    def test_stride_is_every_kth(self):
        p = ramp_points(100)
        np.testing.assert_array_equal(
            decimate_indices(p, 10, mode="stride"), np.arange(0, 100, 10)
        )

    def test_stride_rounds_step_up(self):
        p = ramp_points(10)
        got = decimate_indices(p, 3, mode="stride")
        np.testing.assert_array_equal(got, [0, 4, 8])

    def test_importance_prefers_heavy_points(self):
        # 80 heavy + 120 light points; across seeds the 50 kept should be
        # heavy about always, and never below 70% on average
        idx = np.stack([np.arange(200), np.zeros(200, int), np.zeros(200, int)], axis=1)
        inten = np.r_[np.full(80, 100.0), np.full(120, 0.1)]
        p = SparsePoints((256, 2, 2), idx.astype(np.int32), inten)
        fracs = []
        for seed in range(100):
            keep = decimate_indices(p, 50, mode="importance", seed=seed)
            fracs.append((keep < 80).mean())
        assert np.mean(fracs) >= 0.70

    def test_importance_deterministic_per_seed(self):
        p = ramp_points(60)
        a = decimate_indices(p, 20, mode="importance", seed=5)
        b = decimate_indices(p, 20, mode="importance", seed=5)
        np.testing.assert_array_equal(a, b)

    def test_result_keeps_canonical_order(self):
        p = ramp_points(97)
        for mode in ("stride", "importance"):
            sub = decimate(p, 31, mode=mode)
            # stride keeps every k-th point so it may land under target;
            # importance draws exactly target
            assert 0 < sub.n <= 31
            if mode == "importance":
                assert sub.n == 31
            assert (np.diff(lex_keys(sub.indices, sub.dims)) > 0).all()
            # decimation only drops points, never invents them
            assert np.isin(lex_keys(sub.indices, sub.dims),
                           lex_keys(p.indices, p.dims)).all()

    def test_validation(self):
        p = ramp_points(10)
        with pytest.raises(ValueError, match="target"):
            decimate_indices(p, 0)
        with pytest.raises(ValueError, match="mode"):
            decimate_indices(p, 5, mode="random")


class TestPointCloud:
    def test_bytes_layout(self):
        p = ramp_points(3)
        pc = make_pointcloud(p, alphas=[0.0, 0.5, 1.0])
        blob = pointcloud_bytes(pc)
        assert len(blob) == 4 + 3 * 20
        assert int.from_bytes(blob[:4], "little") == 3
        rec = np.frombuffer(blob, dtype="<f4", offset=4).reshape(3, 5)
        np.testing.assert_allclose(rec[:, 0], [0, 1, 2])
        np.testing.assert_allclose(rec[:, 4], [0, 0.5, 1])

    def test_round_trip_bytes(self):
        p = ramp_points(7)
        pc = make_pointcloud(p, alphas=np.linspace(0, 1, 7), alpha_mode="tf:0.1:2")
        back = pointcloud_from_bytes(pointcloud_bytes(pc), alpha_mode=pc.alpha_mode)
        np.testing.assert_array_equal(back.positions, pc.positions)
        np.testing.assert_array_equal(back.intensities, pc.intensities)
        np.testing.assert_array_equal(back.alphas, pc.alphas)
        assert back.alpha_mode == "tf:0.1:2"

    def test_round_trip_file(self, tmp_path):
        p = ramp_points(5)
        pc = make_pointcloud(p, alphas=np.full(5, 0.25))
        path = tmp_path / "cloud.bin"
        save_pointcloud(pc, path)
        assert path.stat().st_size == 4 + 5 * 20
        back = load_pointcloud(path)
        np.testing.assert_array_equal(back.positions, pc.positions)

    def test_truncated_blob_rejected(self):
        p = ramp_points(4)
        blob = pointcloud_bytes(make_pointcloud(p, alphas=np.zeros(4)))
        with pytest.raises(ValueError, match="4 records"):
            pointcloud_from_bytes(blob[:-8])
        with pytest.raises(ValueError, match="count"):
            pointcloud_from_bytes(b"\x01")

    def test_alpha_range_enforced(self):
        p = ramp_points(2)
        with pytest.raises(ValueError, match="alphas"):
            make_pointcloud(p, alphas=[0.5, 1.5])

    def test_origin_and_spacing_applied(self):
        p = SparsePoints((4, 4, 4), np.array([[1, 2, 3]]), np.array([5.0]))
        pc = make_pointcloud(p, alphas=[1.0], origin=(10, 20, 30), spacing=(0.5, 2, 1))
        np.testing.assert_allclose(pc.positions[0], [10.5, 24.0, 33.0])


class TestIsosurface:
    def test_constant_volume_is_empty(self):
        mesh = isosurface(DenseVolume(np.zeros((5, 5, 5))), 0.5)
        assert mesh.n_vertices == 0
        assert mesh.n_triangles == 0

    def test_degenerate_dims_are_empty(self):
        mesh = isosurface(DenseVolume(np.ones((1, 5, 5))), 0.5)
        assert mesh.n_triangles == 0

    def test_non_finite_iso_rejected(self):
        with pytest.raises(ValueError, match="iso"):
            isosurface(DenseVolume(np.zeros((3, 3, 3))), float("nan"))

    def test_single_voxel_is_a_closed_surface(self):
        vals = np.zeros((5, 5, 5))
        vals[2, 2, 2] = 1.0
        mesh = isosurface(DenseVolume(vals), 0.5)
        assert mesh.n_triangles == 8  # an octahedron around the voxel
        assert is_watertight(mesh.triangles)
        assert is_consistently_oriented(mesh.triangles)
        assert euler_characteristic(mesh) == 2
        assert signed_volume(mesh) > 0

    def test_sphere_area_volume_and_topology(self):
        r0 = 8.0
        mesh = isosurface(sphere_field(r0), 0.0)
        assert is_watertight(mesh.triangles)
        assert is_consistently_oriented(mesh.triangles)
        assert euler_characteristic(mesh) == 2
        assert mesh.area() == pytest.approx(4 * np.pi * r0**2, rel=0.05)
        assert signed_volume(mesh) == pytest.approx(4 / 3 * np.pi * r0**3, rel=0.05)

    def test_vertex_count_scales_with_surface(self):
        m6 = isosurface(sphere_field(6.0), 0.0)
        m12 = isosurface(sphere_field(12.0, dims=(32, 32, 32)), 0.0)
        ratio = m12.n_vertices / m6.n_vertices
        assert 2.0 <= ratio <= 8.0  # surface law: ~4x, allow 2x slack

    def test_nan_region_away_from_surface_is_harmless(self):
        clean = sphere_field(8.0)
        vals = clean.values.copy()
        c = (np.array(vals.shape) - 1.0) / 2.0
        ii, jj, kk = np.meshgrid(*(np.arange(d) for d in vals.shape), indexing="ij")
        far = (ii - c[0]) ** 2 + (jj - c[1]) ** 2 + (kk - c[2]) ** 2 > 11.0**2
        vals[far] = np.nan
        mesh = isosurface(DenseVolume(vals), 0.0)
        ref = isosurface(clean, 0.0)
        assert mesh.n_vertices == ref.n_vertices
        assert mesh.area() == pytest.approx(ref.area(), rel=1e-6)

    def test_iso_exactly_on_lattice_values(self):
        # planar ramp; the level set passes through corner samples exactly
        dims = (10, 6, 7)
        vals = np.broadcast_to(
            np.arange(10, dtype=np.float64)[:, None, None], dims
        ).copy()
        mesh = isosurface(DenseVolume(vals), 3.0)
        assert mesh.n_triangles > 0
        np.testing.assert_allclose(mesh.vertices[:, 0], 3.0)
        assert mesh.area() == pytest.approx(5 * 6, rel=1e-9)

    def test_physical_registration(self):
        vals = np.zeros((5, 5, 5))
        vals[2, 2, 2] = 1.0
        v = DenseVolume(vals, origin=(100.0, 0.0, -4.0), spacing=(2.0, 1.0, 0.5))
        mesh = isosurface(v, 0.5)
        np.testing.assert_allclose(mesh.vertices.mean(axis=0), [104.0, 2.0, -3.0])

    def test_triangle_index_validation(self):
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((2, 3)), np.array([[0, 1, 5]]), iso_value=0.0)


class TestRasterize:
    def test_singleton_becomes_3_cube(self):
        p = SparsePoints((9, 9, 9), np.array([[4, 4, 4]]), np.array([7.0]))
        r = cluster(p, ClusteringParams(min_weight=5.0))
        v = rasterize_cluster(p, r, 0)
        assert v.dims == (3, 3, 3)
        assert v.values[1, 1, 1] == 7.0
        assert v.values.sum() == np.float32(7.0)
        assert v.origin == (3.0, 3.0, 3.0)

    def test_block_becomes_5_cube(self):
        b = block_points()
        r = cluster(b, ClusteringParams(min_weight=70.0))
        v = rasterize_cluster(b, r, 0)
        assert v.dims == (5, 5, 5)
        assert (v.values[1:4, 1:4, 1:4] == 10.0).all()
        assert v.values.sum() == np.float32(270.0)

    def test_origin_respects_source_geometry(self):
        p = SparsePoints((9, 9, 9), np.array([[4, 4, 4]]), np.array([7.0]))
        r = cluster(p, ClusteringParams(min_weight=5.0))
        v = rasterize_cluster(p, r, 0, origin=(1.0, 2.0, 3.0), spacing=(2.0, 1.0, 0.5))
        np.testing.assert_allclose(v.origin, (1 + 3 * 2.0, 2 + 3 * 1.0, 3 + 3 * 0.5))

    def test_block_mesh_pipeline(self):
        b = block_points()
        r = cluster(b, ClusteringParams(min_weight=70.0))
        mesh = isosurface(rasterize_cluster(b, r, 0), 5.0)
        assert is_watertight(mesh.triangles)
        assert is_consistently_oriented(mesh.triangles)
        assert euler_characteristic(mesh) == 2
        # encloses the 3^3 block but stays inside the padded 5^3 box
        assert 20.0 < signed_volume(mesh) < 64.0


class TestObjFormat:
    def test_round_trip(self, tmp_path):
        mesh = isosurface(sphere_field(6.0), 0.0)
        path = tmp_path / "m.obj"
        write_obj(mesh, path)
        verts, tris = read_obj(path)
        assert verts.shape == mesh.vertices.shape
        np.testing.assert_allclose(verts, mesh.vertices, rtol=1e-8, atol=1e-8)
        np.testing.assert_array_equal(tris, mesh.triangles)

    def test_obj_is_ascii_v_then_f(self, tmp_path):
        vals = np.zeros((4, 4, 4))
        vals[1, 1, 1] = 1.0
        mesh = isosurface(DenseVolume(vals), 0.5)
        text = obj_bytes(mesh).decode("ascii").splitlines()
        kinds = [line.split()[0] for line in text]
        assert set(kinds) == {"v", "f"}
        assert kinds == sorted(kinds, key=lambda k: k != "v")  # all v before f

    def test_empty_mesh_is_empty_bytes(self):
        mesh = isosurface(DenseVolume(np.zeros((3, 3, 3))), 0.5)
        assert obj_bytes(mesh) == b""
