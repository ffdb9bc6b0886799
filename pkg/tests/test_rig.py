import json

import numpy as np
import pytest
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

import splatavatar as sa
from splatavatar import transforms as tf
from splatavatar.errors import AnimationError, RigError
from splatavatar.rig import Joint


def chain_rig(n_joints=3, seg=0.5):
    """Vertical chain: joint j at height j*seg, one vertex per joint + one
    blended vertex so every joint is referenced."""
    joints = [
        Joint(name=f"j{k}", parent=None if k == 0 else k - 1,
              bind_local_rotation=np.array([0.0, 0, 0, 1]),
              bind_local_translation=np.array([0.0, seg if k else 0.0, 0.0]))
        for k in range(n_joints)
    ]
    vertices = []
    skin_j = []
    skin_w = []
    for k in range(n_joints):
        vertices.append([0.1, k * seg + 0.2, 0.0])
        skin_j.append([k, 0, 0, 0])
        skin_w.append([1.0, 0, 0, 0])
    vertices.append([0.0, seg * 0.5, 0.1])
    skin_j.append([0, 1, 0, 0])
    skin_w.append([0.5, 0.5, 0, 0])
    sj = np.array(skin_j, dtype=np.int32)
    sw = np.array(skin_w, dtype=np.float64)
    return sa.SkinnedRig(np.array(vertices), joints, sj, sw)


def oracle_fk(rig, pose):
    """Independent forward kinematics using scipy Rotation, accumulating
    (rotation matrix, translation, scale) triples instead of 4x4s."""
    n = rig.joint_count
    R = [None] * n
    t = [None] * n
    s = [None] * n
    for j in range(n):
        rj = Rotation.from_quat(pose.rotations[j]).as_matrix()
        parent = rig.parents[j]
        if parent < 0:
            R[j] = rj
            t[j] = rig.bind_translations[j] + pose.root_translation
            s[j] = pose.root_uniform_scale
        else:
            R[j] = R[parent] @ rj
            t[j] = R[parent] @ (s[parent] * rig.bind_translations[j]) + t[parent]
            s[j] = s[parent]
    out = np.zeros((n, 4, 4))
    for j in range(n):
        out[j, :3, :3] = R[j] * s[j]
        out[j, :3, 3] = t[j]
        out[j, 3, 3] = 1.0
    return out


class TestTemplate:
    def test_contract(self, template):
        assert template.joint_count == 17
        v = template.vertices
        assert v[:, 1].min() == pytest.approx(0.0, abs=1e-9)
        assert v[:, 1].max() == pytest.approx(1.0, abs=1e-9)
        assert 3000 <= template.vertex_count <= 6000

    def test_height_scales(self):
        rig = sa.build_template_humanoid(1.8)
        ext = rig.vertices[:, 1].max() - rig.vertices[:, 1].min()
        assert 1.8 * 0.99 <= ext <= 1.8 * 1.01

    def test_height_range_enforced(self):
        with pytest.raises(ValueError):
            sa.build_template_humanoid(0.3)
        with pytest.raises(ValueError):
            sa.build_template_humanoid(3.0)

    def test_weights_partition_of_unity(self, template):
        sums = template.skin_weights.sum(axis=1)
        assert np.abs(sums - 1.0).max() < 1e-4

    def test_mirror_symmetry(self, template):
        mirrored = template.vertices * [-1.0, 1.0, 1.0]
        d, _ = cKDTree(template.vertices).query(mirrored)
        assert d.max() < 1e-3  # Hausdorff via exact NN

    def test_every_joint_referenced(self, template):
        used = set(template.skin_joints[template.skin_weights > 0].tolist())
        assert used == set(range(17))

    def test_inverse_bind_inverts_bind(self, template):
        prod = template.bind_globals @ template.inverse_bind
        assert np.abs(prod - np.eye(4)).max() < 1e-5


class TestRigValidation:
    def test_weight_sum_violation_is_error_not_repair(self):
        rig = chain_rig()
        sw = np.array(rig.skin_weights)
        sw[0, 0] = 0.5
        with pytest.raises(RigError, match="sum"):
            sa.SkinnedRig(rig.vertices, rig.joints, rig.skin_joints, sw)

    def test_negative_weight(self):
        rig = chain_rig()
        sw = np.array(rig.skin_weights)
        sw[0, :2] = [1.5, -0.5]
        with pytest.raises(RigError):
            sa.SkinnedRig(rig.vertices, rig.joints, rig.skin_joints, sw)

    def test_two_roots(self):
        joints = [
            Joint("a", None, np.array([0.0, 0, 0, 1]), np.zeros(3)),
            Joint("b", None, np.array([0.0, 0, 0, 1]), np.zeros(3)),
        ]
        with pytest.raises(RigError, match="root"):
            sa.SkinnedRig(np.zeros((1, 3)), joints,
                          np.array([[0, 1, 0, 0]], dtype=np.int32),
                          np.array([[0.5, 0.5, 0, 0]]))

    def test_parent_after_child(self):
        joints = [
            Joint("a", 1, np.array([0.0, 0, 0, 1]), np.zeros(3)),
            Joint("b", None, np.array([0.0, 0, 0, 1]), np.zeros(3)),
        ]
        with pytest.raises(RigError, match="precede"):
            sa.SkinnedRig(np.zeros((1, 3)), joints,
                          np.array([[0, 1, 0, 0]], dtype=np.int32),
                          np.array([[0.5, 0.5, 0, 0]]))

    def test_unreferenced_joint(self):
        rig = chain_rig()
        sj = np.array(rig.skin_joints)
        sj[sj == 2] = 1
        sw = np.array(rig.skin_weights)
        with pytest.raises(RigError, match="j2"):
            sa.SkinnedRig(rig.vertices, rig.joints, sj, sw)


class TestSkinning:
    def test_bind_pose_identity_matrices(self, template):
        S = sa.compute_skin_matrices(template, sa.Pose.bind(template))
        assert np.abs(S - np.eye(4)).max() < 1e-6

    def test_root_translation_is_pure_translation(self, template):
        pose = sa.Pose.bind(template)
        pose.root_translation = np.array([0.3, -0.1, 2.0])
        S = sa.compute_skin_matrices(template, pose)
        expect = np.eye(4)
        expect[:3, 3] = pose.root_translation
        assert np.abs(S - expect).max() < 1e-6

    def test_matches_fk_oracle_random_poses(self):
        rig = chain_rig(3)
        rng = np.random.default_rng(1)
        for trial in range(20):
            pose = sa.Pose(
                rotations=tf.quat_normalize(rng.normal(size=(3, 4))),
                root_translation=rng.normal(size=3),
                root_uniform_scale=float(rng.uniform(0.5, 2.0)),
            )
            S = sa.compute_skin_matrices(rig, pose)
            expect = oracle_fk(rig, pose) @ rig.inverse_bind
            assert np.abs(S - expect).max() < 1e-6, trial

    def test_template_random_pose_matches_oracle(self, template):
        rng = np.random.default_rng(2)
        pose = sa.Pose(
            rotations=tf.quat_normalize(rng.normal(size=(17, 4))),
            root_translation=rng.normal(size=3),
            root_uniform_scale=1.3,
        )
        S = sa.compute_skin_matrices(template, pose)
        expect = oracle_fk(template, pose) @ template.inverse_bind
        assert np.abs(S - expect).max() < 1e-6

    def test_blend_single_influence(self, template):
        S = np.tile(np.eye(4), (17, 1, 1))
        S[3, :3, 3] = [1, 2, 3]
        v = int(np.nonzero((template.skin_weights[:, 0] == 1.0)
                           & (template.skin_joints[:, 0] == 3))[0][0])
        assert np.array_equal(sa.blend_vertex_matrix(template, S, v), S[3])

    def test_blend_half_half_translations(self):
        rig = chain_rig()
        S = np.tile(np.eye(4), (3, 1, 1))
        S[0, :3, 3] = [1, 0, 0]
        S[1, :3, 3] = [0, 2, 0]
        m = sa.blend_vertex_matrix(rig, S, 3)  # the 0.5/0.5 vertex
        assert np.allclose(m[:3, :3], np.eye(3))
        assert np.allclose(m[:3, 3], [0.5, 1.0, 0.0])

    def test_blend_four_influences_matches_direct_sum(self):
        rng = np.random.default_rng(3)
        joints = [Joint("r", None, np.array([0.0, 0, 0, 1]), np.zeros(3))]
        joints += [Joint(f"c{k}", 0, np.array([0.0, 0, 0, 1]), np.array([0.1, 0.1, 0]))
                   for k in range(3)]
        w = rng.uniform(0.1, 1.0, 4)
        w /= w.sum()
        rig = sa.SkinnedRig(
            np.array([[0.0, 0.1, 0.0]]), joints,
            np.array([[0, 1, 2, 3]], dtype=np.int32), w[None, :])
        S = rng.normal(size=(4, 4, 4))
        expect = sum(w[k] * S[k] for k in range(4))
        assert np.abs(sa.blend_vertex_matrix(rig, S, 0) - expect).max() < 1e-12

    def test_skin_vertices_identity(self, template):
        out = sa.skin_vertices(template, sa.Pose.bind(template))
        assert np.abs(out - template.vertices).max() < 1e-6

    def test_rigid_motion_preserves_distances(self, template):
        pose = sa.Pose.bind(template)
        pose.rotations[0] = tf.quat_from_axis_angle([0, 1, 0], 1.1)
        pose.root_translation = np.array([0.5, 0.2, -0.3])
        out = sa.skin_vertices(template, pose)
        rng = np.random.default_rng(4)
        i = rng.integers(0, template.vertex_count, 300)
        j = rng.integers(0, template.vertex_count, 300)
        d0 = np.linalg.norm(template.vertices[i] - template.vertices[j], axis=1)
        d1 = np.linalg.norm(out[i] - out[j], axis=1)
        keep = d0 > 1e-6
        assert np.abs(d1[keep] / d0[keep] - 1.0).max() < 1e-5

    def test_lbs_root_equivariance(self, template):
        rng = np.random.default_rng(5)
        pose = sa.Pose(rotations=np.array(template.bind_rotations))
        pose.rotations[template.joint_index["left_lower_arm"]] = \
            tf.quat_from_axis_angle([0, 0, 1], 0.8)
        base = sa.skin_vertices(template, pose)

        q = tf.quat_normalize(rng.normal(size=4))
        t = rng.normal(size=3)
        rigid = pose.copy()
        rigid.rotations[0] = tf.quat_multiply(q, pose.rotations[0])
        rigid.root_translation = t
        out = sa.skin_vertices(template, rigid)

        root = template.bind_globals[0, :3, 3]
        expect = tf.quat_rotate(q, base - root) + root + t
        assert np.abs(out - expect).max() < 1e-5

    def test_elbow_bend_rotates_forearm_about_elbow(self, template):
        elbow_j = template.joint_index["left_lower_arm"]
        pose = sa.Pose.bind(template)
        axis = np.array([0.0, 0.0, 1.0])
        pose.rotations[elbow_j] = tf.quat_from_axis_angle(axis, np.pi / 2)
        out = sa.skin_vertices(template, pose)

        elbow_pos = template.bind_globals[elbow_j, :3, 3]
        # single-influence forearm vertices rotate rigidly about the elbow
        sel = np.nonzero((template.skin_weights[:, 0] == 1.0)
                         & (template.skin_joints[:, 0] == elbow_j))[0][:5]
        R = Rotation.from_rotvec(axis * np.pi / 2).as_matrix()
        for v in sel:
            expect = R @ (template.vertices[v] - elbow_pos) + elbow_pos
            assert np.abs(out[v] - expect).max() < 1e-9

    def test_pose_length_mismatch(self, template):
        with pytest.raises(ValueError):
            sa.compute_skin_matrices(template, sa.Pose(rotations=np.zeros((3, 4))))

    def test_pose_non_unit_rejected(self, template):
        pose = sa.Pose.bind(template)
        pose.rotations = np.array(pose.rotations)
        pose.rotations[2] *= 1.5
        with pytest.raises(ValueError, match="unit"):
            sa.compute_skin_matrices(template, pose)


class TestAnimation:
    def make_clip(self, duration=2.0, loop=False):
        x90 = tf.quat_from_axis_angle([1, 0, 0], np.pi / 2)
        identity = np.array([0.0, 0, 0, 1])
        return sa.AnimationClip(
            duration=duration, loop=loop,
            tracks={"left_lower_arm": (np.array([0.0, 1.0]), np.stack([identity, x90]))},
        )

    def test_exact_keyframe_bitexact(self, template):
        clip = self.make_clip()
        pose = sa.sample_animation(clip, template, 1.0)
        stored = clip.tracks["left_lower_arm"][1][1]
        assert np.array_equal(pose.rotations[template.joint_index["left_lower_arm"]], stored)

    def test_midpoint_is_45_degrees(self, template):
        clip = self.make_clip()
        pose = sa.sample_animation(clip, template, 0.5)
        x45 = tf.quat_from_axis_angle([1, 0, 0], np.pi / 4)
        got = pose.rotations[template.joint_index["left_lower_arm"]]
        assert tf.quat_distance(got, x45) < 1e-5

    def test_clamped_before_and_after(self, template):
        clip = self.make_clip()
        j = template.joint_index["left_lower_arm"]
        early = sa.sample_animation(clip, template, 0.0)
        late = sa.sample_animation(clip, template, 1.9)
        assert np.array_equal(early.rotations[j], clip.tracks["left_lower_arm"][1][0])
        assert np.array_equal(late.rotations[j], clip.tracks["left_lower_arm"][1][1])

    def test_loop_wraps(self, template):
        clip = self.make_clip(duration=2.0, loop=True)
        j = template.joint_index["left_lower_arm"]
        a = sa.sample_animation(clip, template, 0.5)
        b = sa.sample_animation(clip, template, 2.5)
        assert np.array_equal(a.rotations[j], b.rotations[j])

    def test_untracked_joint_keeps_bind(self, template):
        clip = self.make_clip()
        pose = sa.sample_animation(clip, template, 0.7)
        j = template.joint_index["head"]
        assert np.array_equal(pose.rotations[j], template.bind_rotations[j])

    def test_negative_time_rejected(self, template):
        with pytest.raises(ValueError):
            sa.sample_animation(self.make_clip(), template, -0.1)

    def test_unsorted_keys_rejected(self):
        with pytest.raises(AnimationError, match="increasing"):
            sa.AnimationClip(duration=1.0, loop=False, tracks={
                "a": (np.array([0.5, 0.2]), np.tile([0, 0, 0, 1.0], (2, 1)))})

    def test_key_beyond_duration_rejected(self):
        with pytest.raises(AnimationError, match="duration"):
            sa.AnimationClip(duration=0.5, loop=False, tracks={
                "a": (np.array([0.0, 1.0]), np.tile([0, 0, 0, 1.0], (2, 1)))})

    def test_random_keys_stay_unit_and_angle_monotone(self, template):
        rng = np.random.default_rng(6)
        q0 = tf.quat_normalize(rng.normal(size=4))
        q1 = tf.quat_normalize(rng.normal(size=4))
        clip = sa.AnimationClip(duration=1.0, loop=False, tracks={
            "spine": (np.array([0.0, 1.0]), np.stack([q0, q1]))})
        j = template.joint_index["spine"]
        prev_angle = -1.0
        for t in np.linspace(0, 1, 100):
            q = sa.sample_animation(clip, template, float(t)).rotations[j]
            assert abs(np.linalg.norm(q) - 1.0) < 1e-5
            ang = 2 * np.arccos(np.clip(abs(float(np.dot(q, q0))), 0, 1))
            assert ang >= prev_angle - 1e-7
            prev_angle = ang

    def test_root_track_composes_with_base(self, template):
        yaw = tf.quat_from_axis_angle([0, 1, 0], 0.6)
        base = sa.Pose.bind(template)
        base.rotations[0] = yaw
        key = tf.quat_from_axis_angle([1, 0, 0], 0.2)
        clip = sa.AnimationClip(duration=1.0, loop=False,
                                tracks={"hips": (np.array([0.0]), key[None, :])})
        pose = sa.sample_animation(clip, template, 0.0, base_pose=base)
        assert tf.quat_distance(pose.rotations[0], tf.quat_multiply(yaw, key)) < 1e-12

    def test_root_translation_offsets_base(self, template):
        base = sa.Pose.bind(template)
        base.root_translation = np.array([1.0, 0.0, 0.0])
        clip = sa.AnimationClip(duration=1.0, loop=False, tracks={},
                                root_translation=(np.array([0.0, 1.0]),
                                                  np.array([[0.0, 0, 0], [0, 0, 2.0]])))
        pose = sa.sample_animation(clip, template, 0.5, base_pose=base)
        assert np.allclose(pose.root_translation, [1.0, 0.0, 1.0])


class TestRigIO:
    def test_json_roundtrip_preserves_everything(self, template):
        text = sa.rig_to_json(template)
        back = sa.rig_from_json(text)
        assert np.array_equal(back.vertices, template.vertices)
        assert np.array_equal(back.skin_joints, template.skin_joints)
        assert np.array_equal(back.skin_weights, template.skin_weights)
        assert [j.name for j in back.joints] == [j.name for j in template.joints]
        assert back.content_hash() == template.content_hash()

    def test_hash_sensitive_to_geometry(self, template):
        verts = np.array(template.vertices)
        verts[0, 0] += 1e-6
        other = sa.SkinnedRig(verts, template.joints, template.skin_joints,
                              template.skin_weights, triangles=template.triangles)
        assert other.content_hash() != template.content_hash()

    def test_broken_json_is_rig_error(self):
        with pytest.raises(RigError):
            sa.rig_from_json("{not json")
        with pytest.raises(RigError):
            sa.rig_from_json(json.dumps({"vertices": []}))

    def test_clip_json_roundtrip(self, template):
        clip = sa.AnimationClip(
            duration=1.5, loop=True,
            tracks={"spine": (np.array([0.0, 1.0]),
                              np.stack([np.array([0.0, 0, 0, 1]),
                                        tf.quat_from_axis_angle([0, 1, 0], 0.5)]))},
            root_translation=(np.array([0.0]), np.array([[0.1, 0.0, 0.2]])),
        )
        back = sa.clip_from_json(sa.clip_to_json(clip))
        assert back.duration == clip.duration
        assert back.loop == clip.loop
        assert np.array_equal(back.tracks["spine"][0], clip.tracks["spine"][0])
        assert np.array_equal(back.tracks["spine"][1], clip.tracks["spine"][1])
        assert np.array_equal(back.root_translation[1], clip.root_translation[1])
