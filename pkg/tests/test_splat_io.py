import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import splatavatar as sa
from splatavatar.errors import DecodeError, PlyFormatError, PlyLengthError, PlySchemaError
from splatavatar.splat_io import SH_C0, canonical_field_names
from splatavatar.synthetic import random_cloud


def raw_ply(rows, names=None):
    """Hand-rolled PLY bytes, independent of write_splat_ply."""
    rows = np.asarray(rows, dtype="<f4")
    names = names or canonical_field_names(0)
    header = "ply\nformat binary_little_endian 1.0\n"
    header += f"element vertex {rows.shape[0]}\n"
    header += "".join(f"property float {n}\n" for n in names)
    header += "end_header\n"
    return header.encode() + rows.tobytes()


IDENTITY_ROW = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0]  # x y z dc0..2 op s0..2 w x y z


class TestParse:
    def test_identity_raw_values(self):
        cloud = sa.parse_splat_ply(raw_ply([IDENTITY_ROW]))
        assert cloud.count == 1
        assert np.allclose(cloud.positions[0], [0, 0, 0])
        assert np.allclose(cloud.rotations[0], [0, 0, 0, 1])  # xyzw identity
        assert np.allclose(cloud.scales[0], [1, 1, 1])        # exp(0)
        assert cloud.opacities[0] == pytest.approx(0.5)       # logistic(0)
        assert np.allclose(cloud.colors[0], [0.5, 0.5, 0.5])  # 0.5 + C0*0

    def test_rotation_reordered_and_normalized(self):
        row = list(IDENTITY_ROW)
        row[10:14] = [2.0, 0.0, 0.0, 0.0]  # w=2 raw, unnormalized
        cloud = sa.parse_splat_ply(raw_ply([row]))
        assert np.allclose(cloud.rotations[0], [0, 0, 0, 1], atol=1e-7)
        assert abs(np.linalg.norm(cloud.rotations[0].astype(np.float64)) - 1) < 1e-4

    def test_w_canonicalized_nonnegative(self):
        row = list(IDENTITY_ROW)
        row[10:14] = [-1.0, 0.0, 0.6, 0.0]
        cloud = sa.parse_splat_ply(raw_ply([row]))
        assert cloud.rotations[0][3] >= 0

    def test_order_preserved(self):
        rows = []
        for i in range(20):
            row = list(IDENTITY_ROW)
            row[0] = float(i)
            rows.append(row)
        cloud = sa.parse_splat_ply(raw_ply(rows))
        assert np.array_equal(cloud.positions[:, 0], np.arange(20, dtype=np.float32))

    def test_missing_property_names_it(self):
        names = [n for n in canonical_field_names(0) if n != "scale_2"]
        rows = np.zeros((1, len(names)), dtype="<f4")
        rows[0, -4] = 1.0  # rot_0
        with pytest.raises(PlySchemaError, match="scale_2"):
            sa.parse_splat_ply(raw_ply(rows, names))

    def test_normals_tolerated(self):
        names = canonical_field_names(0)
        names = names[:3] + ["nx", "ny", "nz"] + names[3:]
        row = IDENTITY_ROW[:3] + [9.0, 9.0, 9.0] + IDENTITY_ROW[3:]
        cloud = sa.parse_splat_ply(raw_ply([row], names))
        assert cloud.count == 1
        assert np.allclose(cloud.positions[0], [0, 0, 0])

    def test_sh_rest_carried(self):
        names = canonical_field_names(9)
        row = IDENTITY_ROW[:6] + list(range(9)) + IDENTITY_ROW[6:]
        cloud = sa.parse_splat_ply(raw_ply([row], names))
        assert cloud.sh_degree == 1
        assert np.array_equal(cloud.sh_rest[0], np.arange(9, dtype=np.float32))

    def test_bad_sh_rest_count(self):
        names = canonical_field_names(0) + ["f_rest_0", "f_rest_1"]
        with pytest.raises(PlySchemaError, match="f_rest"):
            sa.parse_splat_ply(raw_ply(np.zeros((1, len(names))), names))

    def test_ascii_rejected(self):
        data = b"ply\nformat ascii 1.0\nelement vertex 1\nend_header\n"
        with pytest.raises(PlyFormatError, match="ascii"):
            sa.parse_splat_ply(data)

    def test_not_ply(self):
        with pytest.raises(PlyFormatError):
            sa.parse_splat_ply(b"plx\nformat binary_little_endian 1.0\nend_header\n")

    def test_malformed_line_named(self):
        data = (b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
                b"property float x\ngarbage line here\nend_header\n" + b"\0" * 4)
        with pytest.raises(PlyFormatError, match="garbage line here"):
            sa.parse_splat_ply(data)

    def test_truncated_body(self):
        data = raw_ply([IDENTITY_ROW])
        with pytest.raises(PlyLengthError) as exc:
            sa.parse_splat_ply(data[:-8])
        assert exc.value.expected == 14 * 4
        assert exc.value.actual == 14 * 4 - 8

    def test_zero_norm_rotation(self):
        row = list(IDENTITY_ROW)
        row[10:14] = [0.0, 0.0, 0.0, 0.0]
        with pytest.raises(DecodeError, match="zero-norm"):
            sa.parse_splat_ply(raw_ply([row]))

    def test_non_finite_rejected_with_index(self):
        rows = [list(IDENTITY_ROW), list(IDENTITY_ROW)]
        rows[1][6] = np.nan  # opacity of splat 1
        with pytest.raises(DecodeError, match="1"):
            sa.parse_splat_ply(raw_ply(rows))


class TestWrite:
    def test_roundtrip_file_bytes(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(50, 14)).astype("<f4")
        rows[:, 10] = np.abs(rows[:, 10]) + 0.1  # keep w dominant-ish, nonzero norm
        data = raw_ply(rows)
        cloud = sa.parse_splat_ply(data)
        assert sa.write_splat_ply(cloud) == data

    def test_header_property_count_degree0(self):
        cloud = random_cloud(3, seed=1)
        header = sa.write_splat_ply(cloud).split(b"end_header")[0]
        assert header.count(b"property float") == 14

    def test_deterministic(self):
        cloud = random_cloud(20, seed=2)
        assert sa.write_splat_ply(cloud) == sa.write_splat_ply(cloud)

    def test_empty_cloud_unconstructible(self):
        with pytest.raises(PlySchemaError):
            sa.SplatCloud.from_arrays(
                np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
                np.zeros(0), np.zeros((0, 3)),
            )


class TestRoundTrip:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 40))
    @settings(max_examples=80, deadline=None)
    def test_parse_write_parse_bit_exact(self, seed, n):
        cloud = random_cloud(n, seed=seed)
        again = sa.parse_splat_ply(sa.write_splat_ply(cloud))
        assert np.array_equal(cloud.payload, again.payload)
        for a, b in (
            (cloud.positions, again.positions),
            (cloud.rotations, again.rotations),
            (cloud.scales, again.scales),
            (cloud.opacities, again.opacities),
            (cloud.colors, again.colors),
        ):
            assert np.array_equal(a, b)

    def test_thousand_splat_roundtrip(self):
        cloud = random_cloud(1000, seed=9)
        again = sa.parse_splat_ply(sa.write_splat_ply(cloud))
        assert np.array_equal(cloud.payload, again.payload)


class TestDecode:
    def test_logistic_zero(self):
        opacity, scale, color = sa.decode_appearance(0.0, np.zeros(3), np.zeros(3))
        assert opacity == pytest.approx(0.5)
        assert np.allclose(scale, 1.0)
        assert np.allclose(color, 0.5)

    def test_color_saturates_at_known_raw(self):
        # independently derived: 0.5 + C0*x = 1  =>  x = 0.5 / C0
        x = 0.5 / SH_C0
        assert x == pytest.approx(1.77245385090, rel=1e-10)
        _, _, color = sa.decode_appearance(0.0, np.zeros(3), np.array([x, 0.0, -x]))
        assert color[0] == pytest.approx(1.0)
        assert color[1] == pytest.approx(0.5)
        assert color[2] == pytest.approx(0.0)

    def test_encode_decode_identity(self):
        rng = np.random.default_rng(3)
        opacity = rng.uniform(0.01, 0.99, 100)
        scale = np.exp(rng.uniform(-5, 1, (100, 3)))
        color = rng.uniform(0, 1, (100, 3))
        o2, s2, c2 = sa.decode_appearance(*sa.encode_appearance(opacity, scale, color))
        assert np.abs(o2 - opacity).max() < 1e-6
        assert np.abs(s2 / scale - 1).max() < 1e-6
        assert np.abs(c2 - color).max() < 1e-6

    def test_non_finite_decode_error(self):
        with pytest.raises(DecodeError):
            sa.decode_appearance(np.array([np.inf]), np.zeros((1, 3)), np.zeros((1, 3)))


class TestStats:
    def test_single_splat(self):
        cloud = sa.SplatCloud.from_arrays(
            [[1.0, 2.0, 3.0]], [[0, 0, 0, 1]], [[0.01] * 3], [0.7], [[0.5] * 3]
        )
        s = sa.cloud_stats(cloud)
        assert np.allclose(s.centroid, [1, 2, 3])
        assert np.allclose(s.aabb_min, s.aabb_max)

    def test_two_splat_symmetry(self):
        cloud = sa.SplatCloud.from_arrays(
            [[0.0, 0, 0], [2.0, 0, 0]], [[0, 0, 0, 1]] * 2, [[0.01] * 3] * 2,
            [0.5, 0.5], [[0.5] * 3] * 2
        )
        s = sa.cloud_stats(cloud)
        assert np.allclose(s.centroid, [1, 0, 0])
        assert np.allclose(s.opacity_weighted_centroid, [1, 0, 0])

    def test_against_independent_fold(self):
        import math
        cloud = random_cloud(1000, seed=4)
        s = sa.cloud_stats(cloud)
        pos = cloud.positions.astype(np.float64)
        opa = cloud.opacities.astype(np.float64)
        for axis in range(3):
            assert s.centroid[axis] == pytest.approx(math.fsum(pos[:, axis]) / 1000, rel=1e-12)
            ws = math.fsum(pos[i, axis] * opa[i] for i in range(1000))
            assert s.opacity_weighted_centroid[axis] == pytest.approx(ws / math.fsum(opa), rel=1e-10)
        assert np.array_equal(s.aabb_min, pos.min(axis=0))
        assert np.array_equal(s.aabb_max, pos.max(axis=0))


class TestImmutability:
    def test_arrays_read_only(self):
        cloud = random_cloud(5, seed=5)
        for arr in (cloud.payload, cloud.positions, cloud.rotations, cloud.scales):
            with pytest.raises(ValueError):
                arr[0] = 0


class TestParserRobustness:
    @given(st.binary(min_size=0, max_size=400))
    @settings(max_examples=200, deadline=None)
    def test_arbitrary_bytes_raise_library_errors(self, data):
        from splatavatar.errors import SplatAvatarError
        try:
            sa.parse_splat_ply(data)
        except SplatAvatarError:
            pass  # any documented error class is fine

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2000), st.integers(0, 255))
    @settings(max_examples=150, deadline=None)
    def test_mutated_valid_file_never_crashes(self, seed, pos, value):
        from splatavatar.errors import SplatAvatarError
        data = bytearray(sa.write_splat_ply(random_cloud(4, seed=seed % 50)))
        data[pos % len(data)] = value
        try:
            sa.parse_splat_ply(bytes(data))
        except SplatAvatarError:
            pass
