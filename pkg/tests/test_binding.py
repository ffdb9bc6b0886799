import numpy as np
import pytest

import splatavatar as sa
from splatavatar.binding import BUNDLE_MAGIC
from splatavatar.errors import BindingError, BundleFormatError
from splatavatar.fit import FitResult
from splatavatar.synthetic import sample_cloud_from_rig
from splatavatar.transforms import quat_distance

from conftest import brute_force_nn


class TestSpatialIndex:
    def test_single_point(self):
        idx = sa.build_vertex_index(np.array([[1.0, 2.0, 3.0]]))
        rng = np.random.default_rng(0)
        i, d = idx.query(rng.normal(size=3))
        assert i == 0

    def test_matches_brute_force_on_grid(self):
        g = np.linspace(0, 1, 10)
        pts = np.stack(np.meshgrid(g, g, g), axis=-1).reshape(-1, 3)
        rng = np.random.default_rng(1)
        queries = rng.uniform(-0.2, 1.2, size=(100, 3))
        idx = sa.build_vertex_index(pts)
        got_i, got_d = idx.query(queries)
        exp_i, exp_d = brute_force_nn(queries, pts)
        assert np.array_equal(got_i, exp_i)
        assert np.abs(got_d - exp_d).max() < 1e-12

    def test_duplicates_take_smaller_index(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        idx = sa.build_vertex_index(pts)
        i, _ = idx.query(np.array([1.05, 0, 0]))
        assert i == 1

    def test_randomized_instances_match_brute_force(self):
        rng = np.random.default_rng(2)
        for trial in range(25):
            n = int(rng.integers(5, 400))
            m = int(rng.integers(2, 120))
            pts = rng.normal(size=(m, 3))
            queries = rng.normal(size=(n, 3))
            got_i, _ = sa.build_vertex_index(pts).query(queries)
            exp_i, _ = brute_force_nn(queries, pts)
            assert np.array_equal(got_i, exp_i), trial

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sa.build_vertex_index(np.zeros((0, 3)))


class TestComputeBindings:
    def test_reconstruction_identity(self, template, identity_fit, bound_avatar):
        cloud, bindings, groups, bundle = bound_avatar
        pose = bundle.fit_pose(template)
        pos, rot = sa.update_splats(bundle, template, pose)
        expect_pos = cloud.positions[groups.permutation].astype(np.float64)
        expect_rot = cloud.rotations[groups.permutation].astype(np.float64)
        assert np.abs(pos - expect_pos).max() < 1e-5
        assert quat_distance(rot.astype(np.float64), expect_rot).max() < 1e-4

    def test_splat_exactly_at_vertex(self, template, identity_fit):
        v = 100
        pos = template.vertices[[v]]
        cloud = sa.SplatCloud.from_arrays(
            pos, [[0, 0, 0, 1.0]], [[0.01] * 3], [0.9], [[0.5] * 3])
        bindings = sa.compute_bindings(cloud, template, identity_fit)
        assert bindings.vertex[0] == v
        assert bindings.distances[0] < 1e-6
        # forward map returns the original position
        m = sa.blend_vertex_matrix(
            template, sa.compute_skin_matrices(template, identity_fit.to_pose(template)), v)
        back = m[:3, :3] @ bindings.rel_positions[0].astype(np.float64) + m[:3, 3]
        assert np.abs(back - pos[0]).max() < 1e-5

    def test_assignments_match_brute_force(self, template, identity_fit):
        cloud = sample_cloud_from_rig(template, 3000, seed=21)
        bindings = sa.compute_bindings(cloud, template, identity_fit)
        skinned = sa.skin_vertices(template, identity_fit.to_pose(template))
        exp_i, _ = brute_force_nn(cloud.positions.astype(np.float64), skinned)
        assert np.array_equal(bindings.vertex, exp_i)

    def test_scale_divided_by_fit_scale(self, template):
        fit = FitResult(yaw=0.3, translation=np.array([0.1, 0.0, 0.2]),
                        uniform_scale=1.25, limb_pose=sa.Pose.bind(template), objective=0.0)
        cloud = sample_cloud_from_rig(template, 500, seed=22, yaw=0.3, scale=1.25,
                                      translation=(0.1, 0.0, 0.2))
        bindings = sa.compute_bindings(cloud, template, fit)
        ratio = cloud.scales.astype(np.float64) / bindings.splat_scales.astype(np.float64)
        assert np.abs(ratio - 1.25).max() < 1e-3

    def test_posed_fit_reconstruction(self, template):
        """Binding under a non-trivial similarity + limb pose still reconstructs."""
        limb = sa.abduction_pose(template, left_shoulder_deg=60, right_hip_deg=12)
        fit = FitResult(yaw=2.1, translation=np.array([0.4, 0.02, -0.3]),
                        uniform_scale=0.93, limb_pose=limb, objective=0.0)
        cloud = sample_cloud_from_rig(template, 2000, seed=23, yaw=2.1, scale=0.93,
                                      translation=(0.4, 0.02, -0.3),
                                      left_shoulder_deg=60, right_hip_deg=12)
        bindings = sa.compute_bindings(cloud, template, fit)
        groups = sa.assign_groups(bindings, template)
        bundle = sa.build_bundle(bindings, groups, fit, cloud, template)
        pos, rot = sa.update_splats(bundle, template, bundle.fit_pose(template))
        assert np.abs(pos - cloud.positions[groups.permutation]).max() < 1e-5
        assert quat_distance(rot.astype(np.float64),
                             cloud.rotations[groups.permutation].astype(np.float64)).max() < 1e-4

    def test_singular_frame_rejected(self, template):
        fit = FitResult(yaw=0.0, translation=np.zeros(3), uniform_scale=1.0,
                        limb_pose=sa.Pose.bind(template), objective=0.0)
        cloud = sample_cloud_from_rig(template, 100, seed=24)

        class ZeroScaleFit:
            uniform_scale = 1.0

            @staticmethod
            def to_pose(rig):
                pose = fit.to_pose(rig)
                pose.root_uniform_scale = 1e-12
                return pose

        with pytest.raises((BindingError, ValueError)):
            sa.compute_bindings(cloud, template, ZeroScaleFit())


class TestGroups:
    def test_single_joint_rig_single_group(self):
        from splatavatar.rig import Joint
        joints = [Joint("only", None, np.array([0.0, 0, 0, 1]), np.zeros(3))]
        rng = np.random.default_rng(25)
        verts = rng.normal(size=(50, 3))
        rig = sa.SkinnedRig(verts, joints,
                            np.zeros((50, 4), dtype=np.int32),
                            np.hstack([np.ones((50, 1)), np.zeros((50, 3))]))
        fit = FitResult(yaw=0.0, translation=np.zeros(3), uniform_scale=1.0,
                        limb_pose=sa.Pose.bind(rig), objective=0.0)
        cloud = sa.SplatCloud.from_arrays(
            verts + 0.01, np.tile([0, 0, 0, 1.0], (50, 1)), np.full((50, 3), 0.01),
            np.full(50, 0.9), np.full((50, 3), 0.5))
        bindings = sa.compute_bindings(cloud, rig, fit)
        table = sa.assign_groups(bindings, rig)
        assert table.groups == [(0, 0, 50)]
        assert np.array_equal(table.permutation, np.arange(50))

    def test_two_bone_stable_partition(self):
        from splatavatar.rig import Joint
        joints = [
            Joint("a", None, np.array([0.0, 0, 0, 1]), np.zeros(3)),
            Joint("b", 0, np.array([0.0, 0, 0, 1]), np.array([0.0, 1.0, 0.0])),
        ]
        verts = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        rig = sa.SkinnedRig(verts, joints,
                            np.array([[0, 0, 0, 0], [1, 0, 0, 0]], dtype=np.int32),
                            np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]))
        fit = FitResult(yaw=0.0, translation=np.zeros(3), uniform_scale=1.0,
                        limb_pose=sa.Pose.bind(rig), objective=0.0)
        rng = np.random.default_rng(26)
        n = 40
        pos = np.where(rng.uniform(size=(n, 1)) < 0.5, [[0.0, 0.1, 0.0]], [[0.0, 0.9, 0.0]])
        pos = pos + rng.normal(scale=0.01, size=(n, 3))
        cloud = sa.SplatCloud.from_arrays(
            pos, np.tile([0, 0, 0, 1.0], (n, 1)), np.full((n, 3), 0.01),
            np.full(n, 0.9), np.full((n, 3), 0.5))
        bindings = sa.compute_bindings(cloud, rig, fit)
        table = sa.assign_groups(bindings, rig)
        assert len(table.groups) == 2
        sizes = [e - s for _, s, e in table.groups]
        assert sum(sizes) == n
        # stability: original order preserved within each group
        for g, (_, s, e) in enumerate(table.groups):
            segment = table.permutation[s:e]
            assert np.all(np.diff(segment) > 0)

    def test_template_groups_partition(self, template, bound_avatar):
        _, bindings, table, _ = bound_avatar
        assert len(table.groups) <= 17
        covered = np.zeros(bindings.count, dtype=bool)
        for _, s, e in table.groups:
            assert not covered[s:e].any()
            covered[s:e] = True
        assert covered.all()
        assert np.array_equal(np.sort(table.permutation), np.arange(bindings.count))

    def test_weight_tie_goes_to_smaller_joint(self):
        from splatavatar.binding import dominant_joints
        from splatavatar.rig import Joint
        joints = [
            Joint("a", None, np.array([0.0, 0, 0, 1]), np.zeros(3)),
            Joint("b", 0, np.array([0.0, 0, 0, 1]), np.array([0.0, 1.0, 0.0])),
        ]
        verts = np.array([[0.0, 0.5, 0.0], [0.0, 0.5, 0.0], [0.0, 1.0, 0.0]])
        rig = sa.SkinnedRig(
            verts, joints,
            np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=np.int32),
            np.array([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [1.0, 0, 0, 0]]))
        assert dominant_joints(rig).tolist() == [0, 0, 1]


class TestBundleFormat:
    def test_roundtrip_bit_exact(self, bound_avatar):
        *_, bundle = bound_avatar
        data = sa.export_bundle(bundle)
        back = sa.import_bundle(data)
        assert back.rig_hash == bundle.rig_hash
        assert back.fit_yaw == np.float32(bundle.fit_yaw)
        assert back.fit_scale == np.float32(bundle.fit_scale)
        for field in ("fit_translation", "fit_rotations", "vertex", "rel_positions",
                      "rel_rotations", "scales", "colors", "opacities",
                      "group_bones", "group_starts", "group_ends"):
            assert np.array_equal(getattr(back, field), getattr(bundle, field)), field
        assert sa.export_bundle(back) == data

    def test_many_random_roundtrips(self, template):
        rng = np.random.default_rng(27)
        fit = FitResult(yaw=0.1, translation=np.zeros(3), uniform_scale=1.0,
                        limb_pose=sa.Pose.bind(template), objective=0.0)
        for trial in range(30):
            n = int(rng.integers(1, 50))
            cloud = sample_cloud_from_rig(template, n, seed=trial + 100)
            bindings = sa.compute_bindings(cloud, template, fit)
            groups = sa.assign_groups(bindings, template)
            bundle = sa.build_bundle(bindings, groups, fit, cloud, template)
            data = sa.export_bundle(bundle)
            assert sa.export_bundle(sa.import_bundle(data)) == data, trial

    def test_bad_magic(self, bound_avatar):
        *_, bundle = bound_avatar
        data = bytearray(sa.export_bundle(bundle))
        data[:4] = b"NOPE"
        with pytest.raises(BundleFormatError, match="magic"):
            sa.import_bundle(bytes(data))

    def test_unsupported_version_names_max(self, bound_avatar):
        *_, bundle = bound_avatar
        data = bytearray(sa.export_bundle(bundle))
        data[4:8] = (999).to_bytes(4, "little")
        with pytest.raises(BundleFormatError, match="max supported 1"):
            sa.import_bundle(bytes(data))

    def test_truncation(self, bound_avatar):
        *_, bundle = bound_avatar
        data = sa.export_bundle(bundle)
        with pytest.raises(BundleFormatError, match="truncated"):
            sa.import_bundle(data[: len(data) // 2])

    def test_trailing_garbage(self, bound_avatar):
        *_, bundle = bound_avatar
        with pytest.raises(BundleFormatError, match="trailing"):
            sa.import_bundle(sa.export_bundle(bundle) + b"\0\0")

    def test_group_partition_validated(self, template):
        fit = FitResult(yaw=0.0, translation=np.zeros(3), uniform_scale=1.0,
                        limb_pose=sa.Pose.bind(template), objective=0.0)
        cloud = sample_cloud_from_rig(template, 10, seed=30)
        bindings = sa.compute_bindings(cloud, template, fit)
        groups = sa.assign_groups(bindings, template)
        bundle = sa.build_bundle(bindings, groups, fit, cloud, template)
        data = bytearray(sa.export_bundle(bundle))
        data[-4:] = (3).to_bytes(4, "little")  # corrupt last group end
        with pytest.raises(BundleFormatError, match="partition"):
            sa.import_bundle(bytes(data))

    def test_magic_constant(self):
        assert BUNDLE_MAGIC == b"GSAB"


class TestBundleRobustness:
    def test_mutated_bundles_raise_library_errors(self, bound_avatar):
        from splatavatar.errors import SplatAvatarError
        *_, bundle = bound_avatar
        good = sa.export_bundle(bundle)
        rng = np.random.default_rng(99)
        for _ in range(300):
            data = bytearray(good)
            for _ in range(int(rng.integers(1, 4))):
                data[int(rng.integers(0, len(data)))] = int(rng.integers(0, 256))
            try:
                sa.import_bundle(bytes(data))
            except SplatAvatarError:
                pass  # documented failure is fine; crashes are not

    def test_truncations_at_every_section(self, bound_avatar):
        from splatavatar.errors import BundleFormatError
        *_, bundle = bound_avatar
        good = sa.export_bundle(bundle)
        for cut in (0, 3, 4, 19, 20, 51, 52, 70, 150, len(good) - 1):
            with pytest.raises(BundleFormatError):
                sa.import_bundle(good[:cut])
