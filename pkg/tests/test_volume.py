"""Dense volume container, VVOL round-trips, sparse conversion, JSONL."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxplore import (
    DenseVolume,
    SparsePoints,
    VvolFormatError,
    lex_keys,
    load_volume,
    read_sparse_jsonl,
    save_volume,
    slab,
    to_sparse,
    volumes_equal,
    write_sparse_jsonl,
)

from conftest import random_sparse


def make_volume(rng, dims=(5, 6, 7), poke=None):
    vals = rng.normal(size=dims)
    if poke is not None:
        for at, v in poke:
            vals[at] = v
    return DenseVolume(
        vals,
        origin=(1.0, -2.0, 0.5),
        spacing=(0.1, 0.2, 0.3),
        axis_labels=("h", "k", "l"),
    )


class TestDenseVolume:
    def test_dims_follow_values(self, rng):
        assert make_volume(rng).dims == (5, 6, 7)

    def test_rejects_non_3d(self):
        with pytest.raises(ValueError, match="3D"):
            DenseVolume(np.zeros((4, 4)))

    def test_rejects_non_positive_spacing(self):
        with pytest.raises(ValueError, match="spacing"):
            DenseVolume(np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))

    def test_rejects_infinities(self):
        vals = np.zeros((2, 2, 2))
        vals[0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="infinit"):
            DenseVolume(vals)

    def test_nan_allowed(self):
        vals = np.zeros((2, 2, 2))
        vals[0, 0, 0] = np.nan
        v = DenseVolume(vals)
        assert np.isnan(v.values[0, 0, 0])

    def test_values_read_only(self, rng):
        v = make_volume(rng)
        with pytest.raises(ValueError):
            v.values[0, 0, 0] = 1.0

    def test_intensity_range_skips_nan(self):
        vals = np.array([[[np.nan, 2.0], [5.0, 3.0]], [[1.0, 1.0], [1.0, 1.0]]])
        assert DenseVolume(vals).intensity_range() == (1.0, 5.0)

    def test_long_axis_label_rejected(self):
        with pytest.raises(ValueError, match="label"):
            DenseVolume(np.zeros((2, 2, 2)), axis_labels=("waytoolong!", "y", "z"))


class TestVvolRoundTrip:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        v = make_volume(rng, poke=[((1, 2, 3), np.nan)])
        path = tmp_path / "vol.vvol"
        save_volume(v, path)
        w = load_volume(path)
        assert volumes_equal(v, w)
        assert np.isnan(w.values[1, 2, 3])

    def test_file_size_2x2x2(self, rng, tmp_path):
        # 104-byte header plus 8 voxels * 4 bytes
        path = tmp_path / "tiny.vvol"
        save_volume(DenseVolume(rng.normal(size=(2, 2, 2))), path)
        assert path.stat().st_size == 104 + 32

    def test_payload_is_x_fastest(self, tmp_path):
        vals = np.arange(8, dtype=np.float64).reshape(2, 2, 2)
        path = tmp_path / "order.vvol"
        save_volume(DenseVolume(vals), path)
        payload = np.frombuffer(path.read_bytes()[104:], dtype="<f4")
        np.testing.assert_array_equal(payload, vals.ravel(order="F"))

    def test_bad_magic_names_offset_zero(self, rng, tmp_path):
        path = tmp_path / "bad.vvol"
        save_volume(make_volume(rng), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(VvolFormatError, match="magic") as exc:
            load_volume(path)
        assert exc.value.offset == 0
        assert "byte 0" in str(exc.value)

    def test_truncated_payload_names_offset(self, rng, tmp_path):
        path = tmp_path / "short.vvol"
        save_volume(make_volume(rng), path)
        path.write_bytes(path.read_bytes()[: 104 + 10])
        with pytest.raises(VvolFormatError, match="truncated payload") as exc:
            load_volume(path)
        assert exc.value.offset == 104 + 10

    def test_truncated_header_names_offset(self, rng, tmp_path):
        path = tmp_path / "header.vvol"
        save_volume(make_volume(rng), path)
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(VvolFormatError, match="truncated header") as exc:
            load_volume(path)
        assert exc.value.offset == 50

    def test_unsupported_version(self, rng, tmp_path):
        path = tmp_path / "ver.vvol"
        save_volume(make_volume(rng), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(VvolFormatError, match="version 99"):
            load_volume(path)

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        path = tmp_path / "trail.vvol"
        save_volume(make_volume(rng), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(VvolFormatError, match="trailing"):
            load_volume(path)


class TestSparsePoints:
    def test_lex_order_enforced(self):
        idx = np.array([[1, 0, 0], [0, 0, 0]])
        with pytest.raises(ValueError, match="sorted"):
            SparsePoints(dims=(2, 2, 2), indices=idx, intensities=np.ones(2))

    def test_from_unsorted_sorts(self):
        idx = np.array([[1, 0, 0], [0, 0, 0], [0, 1, 0]])
        p = SparsePoints.from_unsorted((2, 2, 2), idx, np.array([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(p.indices, [[0, 0, 0], [0, 1, 0], [1, 0, 0]])
        np.testing.assert_array_equal(p.intensities, [1.0, 2.0, 3.0])

    def test_duplicate_voxels_rejected(self):
        idx = np.array([[0, 0, 0], [0, 0, 0]])
        with pytest.raises(ValueError):
            SparsePoints.from_unsorted((2, 2, 2), idx, np.ones(2))

    def test_non_positive_intensity_rejected(self):
        idx = np.array([[0, 0, 0]])
        with pytest.raises(ValueError, match="positive"):
            SparsePoints(dims=(2, 2, 2), indices=idx, intensities=np.zeros(1))

    def test_out_of_bounds_rejected(self):
        idx = np.array([[0, 0, 5]])
        with pytest.raises(ValueError, match="bounds"):
            SparsePoints(dims=(2, 2, 2), indices=idx, intensities=np.ones(1))

    def test_lex_keys_strictly_increase(self, rng):
        p = random_sparse(rng)
        assert (np.diff(lex_keys(p.indices, p.dims)) > 0).all()

    def test_take_keeps_sorted_order(self, rng):
        p = random_sparse(rng)
        sub = p.take(np.arange(0, p.n, 2))
        assert sub.n == (p.n + 1) // 2
        assert (np.diff(lex_keys(sub.indices, sub.dims)) > 0).all()


class TestToSparse:
    def test_all_nan_gives_empty(self):
        p = to_sparse(DenseVolume(np.full((3, 3, 3), np.nan)), 0.0)
        assert p.n == 0

    def test_single_voxel(self):
        vals = np.zeros((4, 4, 4))
        vals[1, 2, 3] = 7.5
        p = to_sparse(DenseVolume(vals), 1.0)
        assert p.n == 1
        np.testing.assert_array_equal(p.indices[0], [1, 2, 3])
        assert p.intensities[0] == 7.5

    def test_cutoff_is_strict(self):
        vals = np.zeros((2, 2, 2))
        vals[0, 0, 0] = 1.0
        vals[1, 1, 1] = 1.5
        p = to_sparse(DenseVolume(vals), 1.0)
        assert p.n == 1
        np.testing.assert_array_equal(p.indices[0], [1, 1, 1])

    def test_noise_floor_plus_signal(self):
        # 1e4 voxels at the cutoff stay out, 1e3 above it come through
        vals = np.zeros(30 * 30 * 30)
        vals[:10_000] = 1.0
        vals[10_000:11_000] = 2.0
        p = to_sparse(DenseVolume(vals.reshape(30, 30, 30)), 1.0)
        assert p.n == 1000
        assert (p.intensities == 2.0).all()

    def test_negative_cutoff_behaves_as_zero(self):
        vals = np.full((2, 2, 2), -3.0)
        vals[0, 0, 0] = 4.0
        p = to_sparse(DenseVolume(vals), -5.0)
        assert p.n == 1
        assert p.intensities[0] == 4.0

    def test_non_finite_cutoff_rejected(self, rng):
        with pytest.raises(ValueError, match="finite"):
            to_sparse(make_volume(rng), float("nan"))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), lo=st.floats(0.0, 5.0), hi=st.floats(0.0, 5.0))
    def test_monotone_in_cutoff(self, seed, lo, hi):
        r = np.random.default_rng(seed)
        v = DenseVolume(r.uniform(0, 5, size=(6, 6, 6)))
        lo, hi = min(lo, hi), max(lo, hi)
        keys_lo = lex_keys(to_sparse(v, lo).indices, v.dims)
        keys_hi = lex_keys(to_sparse(v, hi).indices, v.dims)
        assert np.isin(keys_hi, keys_lo).all()


class TestSlab:
    def test_single_plane_verbatim(self, rng):
        v = make_volume(rng)
        np.testing.assert_array_equal(slab(v, 2, 3), v.values[:, :, 3])

    def test_two_plane_mean(self, rng):
        v = make_volume(rng)
        want = v.values[:, :, 2:4].mean(axis=2, dtype=np.float64)
        np.testing.assert_allclose(slab(v, 2, 2, thickness=2), want, rtol=1e-6)

    def test_nan_ignored_in_mean(self, rng):
        v = make_volume(rng, poke=[((0, 0, 2), np.nan)])
        out = slab(v, 2, 2, thickness=2)
        assert out[0, 0] == pytest.approx(float(v.values[0, 0, 3]))

    def test_all_nan_column_stays_nan(self, rng):
        v = make_volume(rng, poke=[((0, 0, 2), np.nan), ((0, 0, 3), np.nan)])
        assert np.isnan(slab(v, 2, 2, thickness=2)[0, 0])

    def test_axis_zero(self, rng):
        v = make_volume(rng)
        np.testing.assert_array_equal(slab(v, 0, 1), v.values[1, :, :])

    def test_out_of_range_rejected(self, rng):
        v = make_volume(rng)
        with pytest.raises(IndexError):
            slab(v, 2, 6, thickness=2)
        with pytest.raises(IndexError):
            slab(v, 2, -1)
        with pytest.raises(IndexError):
            slab(v, 3, 0)


class TestJsonl:
    def test_round_trip(self, rng, tmp_path):
        p = random_sparse(rng)
        path = tmp_path / "pts.jsonl"
        write_sparse_jsonl(p, path)
        q = read_sparse_jsonl(path, dims=p.dims)
        np.testing.assert_array_equal(q.indices, p.indices)
        np.testing.assert_array_equal(q.intensities, p.intensities)
        assert q.dims == p.dims

    def test_dims_inferred_when_omitted(self, rng, tmp_path):
        p = random_sparse(rng)
        path = tmp_path / "pts.jsonl"
        write_sparse_jsonl(p, path)
        q = read_sparse_jsonl(path)
        assert q.dims == tuple(int(m) + 1 for m in p.indices.max(axis=0))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_sparse_jsonl(path, dims=(4, 4, 4)).n == 0

    def test_bad_record_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"i": 0, "j": 0, "k": 0, "v": 1.0}\n{"i": 1}\n')
        with pytest.raises(ValueError, match="line 2"):
            read_sparse_jsonl(path)
