"""Command-line interface: JSON summaries, exit codes, file composition."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from voxplore import (
    ClusteringParams,
    SolidSpec,
    cluster,
    isosurface,
    load_labels,
    load_volume,
    rank_clusters,
    rasterize_cluster,
    read_sparse_jsonl,
    select,
    shell_extract,
    synth_solid,
    to_sparse,
    write_sparse_jsonl,
)
from voxplore.cli import main
from voxplore.mesh import obj_bytes

from test_wdbscan import block_points


def run(capsys, *argv) -> tuple[int, dict]:
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()[-1]
    return code, json.loads(out)


@pytest.fixture
def sphere_chain(tmp_path, capsys):
    """synth -> filter chain shared by the composition tests."""
    vol_path = tmp_path / "s.vvol"
    pts_path = tmp_path / "s.jsonl"
    code, _ = run(
        capsys, "synth", "--kind", "solid", "--shape", "sphere", "--radius", 8,
        "--dims", "24,24,24", "--fill", 1.0, "--noise", 0.001,
        "--seed", 5, "--out", vol_path,
    )
    assert code == 0
    code, _ = run(capsys, "filter", "--input", vol_path, "--cutoff", 0.5,
                  "--out", pts_path)
    assert code == 0
    return vol_path, pts_path


class TestSynth:
    def test_summary_and_artifacts(self, tmp_path, capsys):
        out = tmp_path / "v.vvol"
        truth = tmp_path / "v.truth"
        code, summary = run(
            capsys, "synth", "--kind", "solid", "--shape", "sphere",
            "--radius", 6, "--dims", "20,20,20", "--noise", 0,
            "--seed", 1, "--out", out, "--truth-out", truth,
        )
        assert code == 0
        assert summary["schema"] == "voxplore/1"
        assert summary["dims"] == [20, 20, 20]
        assert out.exists() and truth.exists()
        # dense labels, int32, x-fastest: identical to the library output
        _, gt = synth_solid(
            SolidSpec(shape="sphere", radius=6.0, dims=(20, 20, 20), noise=0.0), 1
        )
        disk = np.fromfile(truth, dtype="<i4").reshape((20, 20, 20), order="F")
        np.testing.assert_array_equal(disk, gt.labels)
        assert summary["feature_voxels"] == int(gt.signal_mask().sum())

    def test_diffuse_kind(self, tmp_path, capsys):
        code, summary = run(
            capsys, "synth", "--kind", "diffuse", "--dims", "48,48,48",
            "--n-sharp", 1, "--n-broad", 0, "--seed", 2,
            "--out", tmp_path / "d.vvol",
        )
        assert code == 0
        assert summary["n_features"] == 1

    def test_prov_sidecar(self, tmp_path, capsys):
        out = tmp_path / "v.vvol"
        run(capsys, "synth", "--kind", "solid", "--dims", "16,16,16",
            "--seed", 0, "--out", out)
        prov = json.loads((tmp_path / "v.vvol.prov.json").read_text())
        assert prov["schema"] == "voxplore.prov/1"
        assert prov["command"] == "synth"
        assert prov["config"]["seed"] == 0
        assert prov["format_versions"]["vvol"] == 1
        import voxplore
        assert prov["tool_version"] == voxplore.__version__


class TestHist:
    def test_detects_cusp_and_writes_json(self, sphere_chain, tmp_path, capsys):
        vol_path, _ = sphere_chain
        hist_path = tmp_path / "h.json"
        code, summary = run(capsys, "hist", "--input", vol_path,
                            "--bins", 64, "--out", hist_path)
        assert code == 0
        assert summary["cusp"] is not None
        assert 0.001 < summary["cusp"] < 1.0  # between noise ceiling and fill
        on_disk = json.loads(hist_path.read_text())
        assert on_disk == summary["histogram"]
        assert len(on_disk["counts"]) == 64


class TestFilter:
    def test_auto_cutoff_uses_cusp(self, sphere_chain, tmp_path, capsys):
        vol_path, _ = sphere_chain
        out = tmp_path / "auto.jsonl"
        code, summary = run(capsys, "filter", "--input", vol_path,
                            "--cutoff", "auto", "--out", out)
        assert code == 0
        # the cusp separates noise (< 0.001) from the fill (1.0)
        vol = load_volume(vol_path)
        want = to_sparse(vol, summary["cutoff"])
        assert summary["n_points"] == want.n
        got = read_sparse_jsonl(out, dims=tuple(summary["dims"]))
        np.testing.assert_array_equal(got.indices, want.indices)

    def test_auto_without_cusp_aborts(self, tmp_path, capsys):
        vol_path = tmp_path / "flat.vvol"
        run(capsys, "synth", "--kind", "solid", "--shape", "sphere", "--radius", 5,
            "--dims", "16,16,16", "--noise", 0, "--seed", 0, "--out", vol_path)
        code, payload = run(capsys, "filter", "--input", vol_path,
                            "--cutoff", "auto", "--out", tmp_path / "x.jsonl")
        assert code == 1
        assert "error" in payload
        assert "--cutoff" in payload["error"]["message"]


class TestCluster:
    def test_block_fixture_summary(self, tmp_path, capsys):
        pts = tmp_path / "block.jsonl"
        write_sparse_jsonl(block_points(), pts)
        labels_out = tmp_path / "block.labels"
        code, summary = run(capsys, "cluster", "--input", pts, "--dims", "12,12,12",
                            "--min-weight", 70, "--labels-out", labels_out)
        assert code == 0
        assert summary["n_clusters"] == 1
        assert summary["n_points"] == 27
        assert summary["n_core"] == 27
        np.testing.assert_array_equal(load_labels(labels_out, 27), np.zeros(27))

    def test_border_accounting(self, tmp_path, capsys):
        pts = tmp_path / "block.jsonl"
        write_sparse_jsonl(block_points(), pts)
        code, summary = run(capsys, "cluster", "--input", pts, "--dims", "12,12,12",
                            "--min-weight", 71, "--labels-out", tmp_path / "l.bin")
        assert summary["n_core"] == 19
        assert summary["n_border"] == 8
        assert summary["n_noise"] == 0

    def test_threads_flag_does_not_change_labels(self, sphere_chain, tmp_path, capsys):
        _, pts_path = sphere_chain
        a, b = tmp_path / "a.labels", tmp_path / "b.labels"
        run(capsys, "cluster", "--input", pts_path, "--min-weight", 7,
            "--labels-out", a, "--threads", 1)
        run(capsys, "cluster", "--input", pts_path, "--min-weight", 7,
            "--labels-out", b, "--threads", 4)
        assert a.read_bytes() == b.read_bytes()


class TestComposition:
    """Artifacts piped between subcommands match the in-process pipeline."""

    def test_cluster_rank_shell_match_library(self, sphere_chain, tmp_path, capsys):
        vol_path, pts_path = sphere_chain
        points = read_sparse_jsonl(pts_path)
        params = ClusteringParams(min_weight=16.0)
        r = cluster(points, params)

        labels_out = tmp_path / "s.labels"
        code, _ = run(capsys, "cluster", "--input", pts_path, "--min-weight", 16,
                      "--labels-out", labels_out)
        assert code == 0
        np.testing.assert_array_equal(load_labels(labels_out, points.n), r.labels)

        code, ranked = run(capsys, "rank", "--input", pts_path,
                           "--min-weight", 16, "--key", "size", "--top", 3)
        assert code == 0
        want = [s.to_json_dict() for s in rank_clusters(r, points)[:3]]
        assert ranked["clusters"] == want

        code, sh = run(capsys, "shell", "--input", pts_path, "--min-weight", 16,
                       "--cluster", 0, "--depth", 1,
                       "--shell-out", tmp_path / "sh.jsonl",
                       "--interior-out", tmp_path / "in.jsonl")
        assert code == 0
        res = shell_extract(points, params, 0, peel_depth=1, pass1=r)
        d = res.stats_dict()
        for k, v in d.items():
            assert sh[k] == (pytest.approx(v) if isinstance(v, float) else v)
        shell_pts = read_sparse_jsonl(tmp_path / "sh.jsonl", dims=points.dims)
        np.testing.assert_array_equal(shell_pts.indices, res.shell.indices)
        interior_pts = read_sparse_jsonl(tmp_path / "in.jsonl", dims=points.dims)
        assert interior_pts.n == res.interior.n

    def test_export_mesh_matches_library(self, sphere_chain, tmp_path, capsys):
        _, pts_path = sphere_chain
        out = tmp_path / "m.obj"
        code, summary = run(capsys, "export", "--input", pts_path,
                            "--min-weight", 7, "--cluster", 0,
                            "--mode", "mesh", "--out", out, "--iso", 0.5)
        assert code == 0
        points = read_sparse_jsonl(pts_path)
        r = cluster(points, ClusteringParams(min_weight=7.0))
        mesh = isosurface(rasterize_cluster(points, r, 0), 0.5)
        assert out.read_bytes() == obj_bytes(mesh)
        assert summary["n_triangles"] == mesh.n_triangles

    def test_export_pointcloud_matches_library(self, sphere_chain, tmp_path, capsys):
        _, pts_path = sphere_chain
        out = tmp_path / "pc.bin"
        code, summary = run(capsys, "export", "--input", pts_path,
                            "--min-weight", 7, "--cluster", 0,
                            "--mode", "pointcloud", "--out", out,
                            "--target", 200, "--decimate", "stride")
        assert code == 0
        assert summary["n_points"] <= 200
        blob = out.read_bytes()
        n = int.from_bytes(blob[:4], "little")
        assert n == summary["n_points"]
        assert len(blob) == 4 + n * 20
        # kept points are a subset of the cluster, in canonical order
        points = read_sparse_jsonl(pts_path)
        r = cluster(points, ClusteringParams(min_weight=7.0))
        members = select(r, points, {0})
        rec = np.frombuffer(blob, dtype="<f4", offset=4).reshape(n, 5)
        rows = [tuple(p) for p in rec[:, :3].tolist()]
        assert rows == sorted(rows)
        assert set(rows) <= {tuple(map(float, p)) for p in members.indices.tolist()}
        assert n < members.n

    def test_export_tf_alpha_requires_both_params(self, sphere_chain, tmp_path, capsys):
        _, pts_path = sphere_chain
        with pytest.raises(SystemExit) as exc:
            main(["export", "--input", str(pts_path), "--min-weight", "7",
                  "--cluster", "0", "--mode", "pointcloud",
                  "--out", str(tmp_path / "x.bin"), "--alpha", "tf",
                  "--cusp", "0.01"])
        assert exc.value.code == 2


class TestExitCodes:
    def test_missing_file_is_json_error_exit_1(self, tmp_path, capsys):
        code, payload = run(capsys, "cluster", "--input", tmp_path / "nope.jsonl",
                            "--min-weight", 5, "--labels-out", tmp_path / "x")
        assert code == 1
        assert payload["schema"] == "voxplore/1"
        assert payload["error"]["type"] == "FileNotFoundError"

    def test_domain_error_exit_1(self, tmp_path, capsys):
        pts = tmp_path / "block.jsonl"
        write_sparse_jsonl(block_points(), pts)
        code, payload = run(capsys, "shell", "--input", pts, "--min-weight", 70,
                            "--cluster", 9)
        assert code == 1
        assert "unknown cluster id 9" in payload["error"]["message"]

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["cluster"])  # missing required arguments
        assert exc.value.code == 2

    def test_unknown_command_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 2


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "voxplore.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        import voxplore
        assert voxplore.__version__ in proc.stdout
