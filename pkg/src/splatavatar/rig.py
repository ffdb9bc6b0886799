"""Skinned humanoid rig: joint hierarchy, linear blend skinning, poses,
and keyframed animation sampling.

The rig file format is plain JSON ("rig.json"):

    {
      "vertices":  [[x, y, z], ...],
      "triangles": [[a, b, c], ...] | null,
      "joints":    [{"name": str, "parent": int | null,
                     "bind_rotation": [x, y, z, w],
                     "bind_translation": [x, y, z]}, ...],
      "skin":      [[[joint, weight], ... up to 4], ...]
    }

Animations ("anim.json"):

    {
      "duration": seconds, "loop": bool,
      "tracks": {"joint_name": [{"t": s, "rotation": [x, y, z, w]}, ...]},
      "root_translation": [{"t": s, "translation": [x, y, z]}, ...]   # optional
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnimationError, RigError
from .transforms import (
    IDENTITY_QUAT,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_slerp,
    quat_to_mat3,
)

MAX_INFLUENCES = 4
WEIGHT_SUM_TOL = 1e-4


@dataclass
class Joint:
    name: str
    parent: int | None
    bind_local_rotation: np.ndarray   # (4,) xyzw unit
    bind_local_translation: np.ndarray  # (3,) meters


class SkinnedRig:
    """Bind-pose mesh + joint hierarchy + per-vertex skin weights.

    Immutable after construction; inverse bind matrices are derived once.
    Violated invariants raise RigError instead of being repaired.
    """

    def __init__(self, vertices, joints, skin_joints, skin_weights, triangles=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise RigError("vertices must be (V, 3)")
        self.joints = list(joints)
        self.triangles = None if triangles is None else np.ascontiguousarray(triangles, dtype=np.int32)

        n_joints = len(self.joints)
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if len(roots) != 1:
            raise RigError(f"expected exactly one root joint, found {len(roots)}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not (0 <= j.parent < i):
                raise RigError(f"joint {i} ({j.name}): parent must precede child")

        self.skin_joints = np.ascontiguousarray(skin_joints, dtype=np.int32)
        self.skin_weights = np.ascontiguousarray(skin_weights, dtype=np.float64)
        v = self.vertices.shape[0]
        if self.skin_joints.shape != (v, MAX_INFLUENCES) or self.skin_weights.shape != (v, MAX_INFLUENCES):
            raise RigError("skin arrays must be (V, 4)")
        if np.any(self.skin_weights < 0.0):
            raise RigError("negative skin weight")
        active = self.skin_weights > 0.0
        used = self.skin_joints[active]
        if used.size and (used.min() < 0 or used.max() >= n_joints):
            raise RigError("skin joint index out of range")
        sums = self.skin_weights.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > WEIGHT_SUM_TOL)[0]
        if bad.size:
            raise RigError(f"skin weights of vertex {int(bad[0])} sum to {sums[bad[0]]:.6f}, not 1")
        referenced = np.zeros(n_joints, dtype=bool)
        referenced[used] = True
        if not referenced.all():
            missing = [self.joints[i].name for i in np.nonzero(~referenced)[0]]
            raise RigError(f"joints never referenced by any vertex: {missing}")

        self.joint_index = {j.name: i for i, j in enumerate(self.joints)}
        if len(self.joint_index) != n_joints:
            raise RigError("duplicate joint names")
        self.bind_rotations = np.ascontiguousarray(
            [quat_normalize(j.bind_local_rotation) for j in self.joints], dtype=np.float64
        )
        self.bind_translations = np.ascontiguousarray(
            [j.bind_local_translation for j in self.joints], dtype=np.float64
        )
        self.parents = np.array(
            [-1 if j.parent is None else j.parent for j in self.joints], dtype=np.int32
        )

        self.bind_globals = self._forward_kinematics(
            self.bind_rotations, np.zeros(3), 1.0
        )
        self.inverse_bind = np.linalg.inv(self.bind_globals)
        for arr in (self.vertices, self.skin_joints, self.skin_weights,
                    self.bind_rotations, self.bind_translations, self.parents,
                    self.bind_globals, self.inverse_bind):
            arr.flags.writeable = False

    @property
    def joint_count(self):
        return len(self.joints)

    @property
    def vertex_count(self):
        return self.vertices.shape[0]

    def _forward_kinematics(self, rotations, root_translation, root_scale):
        n = len(self.joints)
        out = np.empty((n, 4, 4), dtype=np.float64)
        rots = quat_to_mat3(rotations)
        for j in range(n):
            local = np.eye(4)
            local[:3, :3] = rots[j]
            local[:3, 3] = self.bind_translations[j]
            if self.parents[j] < 0:
                local[:3, :3] *= root_scale
                local[:3, 3] += np.asarray(root_translation, dtype=np.float64)
                out[j] = local
            else:
                out[j] = out[self.parents[j]] @ local
        return out

    def content_hash(self) -> bytes:
        """32-byte digest of the rig's geometry, hierarchy and weights."""
        h = hashlib.sha256()
        h.update(np.int64([self.vertex_count, self.joint_count]).tobytes())
        h.update(self.vertices.tobytes())
        if self.triangles is not None:
            h.update(self.triangles.tobytes())
        for j in self.joints:
            h.update(j.name.encode("utf-8") + b"\0")
            h.update(np.int64(-1 if j.parent is None else j.parent).tobytes())
        h.update(self.bind_rotations.tobytes())
        h.update(self.bind_translations.tobytes())
        h.update(self.skin_joints.tobytes())
        h.update(self.skin_weights.tobytes())
        return h.digest()


@dataclass
class Pose:
    """Per-joint absolute local rotations plus a root similarity."""

    rotations: np.ndarray            # (J, 4) xyzw
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    root_uniform_scale: float = 1.0

    @classmethod
    def bind(cls, rig: SkinnedRig) -> "Pose":
        return cls(rotations=np.array(rig.bind_rotations))

    def copy(self) -> "Pose":
        return Pose(
            rotations=np.array(self.rotations),
            root_translation=np.array(self.root_translation),
            root_uniform_scale=float(self.root_uniform_scale),
        )


def _check_pose(rig: SkinnedRig, pose: Pose):
    rot = np.asarray(pose.rotations, dtype=np.float64)
    if rot.shape != (rig.joint_count, 4):
        raise ValueError(f"pose has {rot.shape[0]} rotations, rig has {rig.joint_count} joints")
    norms = np.linalg.norm(rot, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ValueError("pose quaternions must be unit within 1e-4")
    if not pose.root_uniform_scale > 0.0:
        raise ValueError("root scale must be > 0")
    return rot


def compute_skin_matrices(rig: SkinnedRig, pose: Pose):
    """Per-joint skin matrices S[j] = global[j] @ inverse_bind[j].

    global[j] = global[parent] @ T(bind_translation[j]) @ R(pose.rotations[j]);
    the root additionally applies pose.root_translation and root_uniform_scale.
    At the bind pose every S[j] is the identity.
    """
    rot = _check_pose(rig, pose)
    globals_ = rig._forward_kinematics(rot, pose.root_translation, pose.root_uniform_scale)
    return globals_ @ rig.inverse_bind


def blend_vertex_matrices(rig: SkinnedRig, skin_matrices):
    """Standard LBS blend: M_v = sum_k w_k * S[j_k], for all vertices at once."""
    gathered = skin_matrices[rig.skin_joints]          # (V, 4, 4, 4)
    return np.einsum("vk,vkij->vij", rig.skin_weights, gathered)


def blend_vertex_matrix(rig: SkinnedRig, skin_matrices, vertex: int):
    """Blended skinning matrix of a single vertex."""
    w = rig.skin_weights[vertex]
    j = rig.skin_joints[vertex]
    return np.einsum("k,kij->ij", w, skin_matrices[j])


def skin_vertices(rig: SkinnedRig, pose: Pose):
    """Deform every bind-pose vertex by its blended skinning matrix."""
    m = blend_vertex_matrices(rig, compute_skin_matrices(rig, pose))
    return np.einsum("vij,vj->vi", m[:, :3, :3], rig.vertices) + m[:, :3, 3]


# --- animation --------------------------------------------------------------

@dataclass
class AnimationClip:
    duration: float
    loop: bool
    tracks: dict                     # name -> (times (K,), rotations (K, 4))
    root_translation: tuple | None = None   # (times (K,), offsets (K, 3))

    def __post_init__(self):
        if self.duration < 0:
            raise AnimationError("duration must be >= 0")
        for name, (times, quats) in self.tracks.items():
            times = np.asarray(times, dtype=np.float64)
            if times.size == 0:
                continue
            if np.any(np.diff(times) <= 0.0):
                raise AnimationError(f"track '{name}': key times must be strictly increasing")
            if times[-1] > self.duration + 1e-9:
                raise AnimationError(f"track '{name}': key beyond clip duration")
        if self.root_translation is not None:
            times = np.asarray(self.root_translation[0], dtype=np.float64)
            if times.size and np.any(np.diff(times) <= 0.0):
                raise AnimationError("root translation key times must be strictly increasing")


def _bracket(times, t):
    """Index of the key at/preceding t; -1 if t is before the first key."""
    return int(np.searchsorted(times, t, side="right")) - 1


def _sample_track(times, values, t, interp):
    if t <= times[0]:
        return values[0]
    if t >= times[-1]:
        return values[-1]
    i = _bracket(times, t)
    t0, t1 = times[i], times[i + 1]
    if t == t0:
        return values[i]
    u = (t - t0) / (t1 - t0)
    return interp(values[i], values[i + 1], u)


def sample_animation(clip: AnimationClip, rig: SkinnedRig, t: float, base_pose: Pose | None = None) -> Pose:
    """Sample the clip at time t (seconds) into a Pose.

    Tracked joints replace the base pose's local rotation, except the root
    track, which composes after the base root rotation so a fitted
    placement (yaw) survives clip playback. The root-translation track is
    an offset added to the base root translation. Untracked joints keep
    the base rotation (bind pose by default). When the clip loops, t wraps
    modulo duration; otherwise sampling clamps to the first/last key.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if clip.loop and clip.duration > 0:
        t = float(t % clip.duration)
    pose = (base_pose or Pose.bind(rig)).copy()
    root = int(np.nonzero(rig.parents < 0)[0][0])
    for name, (times, quats) in clip.tracks.items():
        if name not in rig.joint_index:
            raise AnimationError(f"track '{name}' names no joint in the rig")
        j = rig.joint_index[name]
        times = np.asarray(times, dtype=np.float64)
        quats = np.asarray(quats, dtype=np.float64)
        if times.size == 0:
            continue  # empty track: keep bind/base rotation
        q = _sample_track(times, quats, t, quat_slerp)
        if j == root:
            pose.rotations[j] = quat_multiply(pose.rotations[j], q)
        else:
            pose.rotations[j] = q
    if clip.root_translation is not None:
        times, offsets = clip.root_translation
        times = np.asarray(times, dtype=np.float64)
        offsets = np.asarray(offsets, dtype=np.float64)
        if times.size:
            off = _sample_track(times, offsets, t, lambda a, b, u: a + u * (b - a))
            pose.root_translation = pose.root_translation + off
    return pose


# --- JSON I/O ---------------------------------------------------------------

def rig_to_json(rig: SkinnedRig) -> str:
    skin = []
    for v in range(rig.vertex_count):
        pairs = []
        for k in range(MAX_INFLUENCES):
            w = float(rig.skin_weights[v, k])
            if w > 0.0:
                pairs.append([int(rig.skin_joints[v, k]), w])
        skin.append(pairs)
    doc = {
        "vertices": rig.vertices.tolist(),
        "triangles": None if rig.triangles is None else rig.triangles.tolist(),
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "bind_rotation": np.asarray(j.bind_local_rotation, dtype=np.float64).tolist(),
                "bind_translation": np.asarray(j.bind_local_translation, dtype=np.float64).tolist(),
            }
            for j in rig.joints
        ],
        "skin": skin,
    }
    return json.dumps(doc)


def rig_from_json(text: str) -> SkinnedRig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise RigError(f"rig file is not valid JSON: {e}") from None
    try:
        joints = [
            Joint(
                name=j["name"],
                parent=j["parent"],
                bind_local_rotation=np.asarray(j["bind_rotation"], dtype=np.float64),
                bind_local_translation=np.asarray(j["bind_translation"], dtype=np.float64),
            )
            for j in doc["joints"]
        ]
        vertices = np.asarray(doc["vertices"], dtype=np.float64)
        n = vertices.shape[0]
        skin_joints = np.zeros((n, MAX_INFLUENCES), dtype=np.int32)
        skin_weights = np.zeros((n, MAX_INFLUENCES), dtype=np.float64)
        for v, pairs in enumerate(doc["skin"]):
            if len(pairs) > MAX_INFLUENCES:
                raise RigError(f"vertex {v}: more than {MAX_INFLUENCES} influences")
            for k, (j, w) in enumerate(pairs):
                skin_joints[v, k] = j
                skin_weights[v, k] = w
        triangles = doc.get("triangles")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, RigError):
            raise
        raise RigError(f"rig file is structurally invalid: {e}") from None
    return SkinnedRig(vertices, joints, skin_joints, skin_weights, triangles=triangles)


def load_rig(path) -> SkinnedRig:
    return rig_from_json(Path(path).read_text())


def save_rig(rig: SkinnedRig, path):
    Path(path).write_text(rig_to_json(rig))


def clip_to_json(clip: AnimationClip) -> str:
    doc = {
        "duration": clip.duration,
        "loop": clip.loop,
        "tracks": {
            name: [
                {"t": float(t), "rotation": np.asarray(q, dtype=np.float64).tolist()}
                for t, q in zip(times, quats)
            ]
            for name, (times, quats) in clip.tracks.items()
        },
    }
    if clip.root_translation is not None:
        times, offsets = clip.root_translation
        doc["root_translation"] = [
            {"t": float(t), "translation": np.asarray(v, dtype=np.float64).tolist()}
            for t, v in zip(times, offsets)
        ]
    return json.dumps(doc)


def clip_from_json(text: str) -> AnimationClip:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AnimationError(f"animation file is not valid JSON: {e}") from None
    try:
        tracks = {}
        for name, keys in doc.get("tracks", {}).items():
            times = np.array([k["t"] for k in keys], dtype=np.float64)
            quats = np.array([k["rotation"] for k in keys], dtype=np.float64).reshape(-1, 4)
            tracks[name] = (times, quats)
        root_translation = None
        if "root_translation" in doc:
            keys = doc["root_translation"]
            root_translation = (
                np.array([k["t"] for k in keys], dtype=np.float64),
                np.array([k["translation"] for k in keys], dtype=np.float64).reshape(-1, 3),
            )
        return AnimationClip(
            duration=float(doc["duration"]),
            loop=bool(doc.get("loop", False)),
            tracks=tracks,
            root_translation=root_translation,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise AnimationError(f"animation file is structurally invalid: {e}") from None


def load_clip(path) -> AnimationClip:
    return clip_from_json(Path(path).read_text())


def save_clip(clip: AnimationClip, path):
    Path(path).write_text(clip_to_json(clip))


# --- procedural template humanoid -------------------------------------------

TEMPLATE_JOINTS = (
    "hips", "spine", "chest", "neck", "head",
    "left_upper_arm", "left_lower_arm", "left_hand",
    "right_upper_arm", "right_lower_arm", "right_hand",
    "left_upper_leg", "left_lower_leg", "left_foot",
    "right_upper_leg", "right_lower_leg", "right_foot",
)

ARM_BIND_ABDUCTION_DEG = 45.0   # A-pose: arms 45 degrees off vertical
LEG_BIND_ABDUCTION_DEG = 6.0

LEFT_ARM_JOINTS = ("left_upper_arm", "left_lower_arm", "left_hand")
RIGHT_ARM_JOINTS = ("right_upper_arm", "right_lower_arm", "right_hand")
LEFT_LEG_JOINTS = ("left_upper_leg", "left_lower_leg", "left_foot")
RIGHT_LEG_JOINTS = ("right_upper_leg", "right_lower_leg", "right_foot")


def _capsule_points(p0, p1, radius, n_points):
    """Deterministic samples on a capsule around segment p0->p1.

    Azimuth counts are even and azimuths are closed under negation, so
    capsules whose axes lie in the y/z plane sample mirror-symmetric
    point sets in x. Returns (points (N, 3), axis parameter t in [0, 1]).
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    axis_dir = axis / length if length > 0 else np.array([0.0, 1.0, 0.0])
    # frame: pick the world axis least aligned with the segment
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis_dir[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(ref, axis_dir)
    u /= np.linalg.norm(u)
    v = np.cross(axis_dir, u)

    n_az = max(8, int(round(np.sqrt(n_points * 1.6) / 2.0) * 2))
    n_rings = max(3, int(round(n_points / n_az * 0.7)))
    n_cap = max(2, int(round(n_points / n_az * 0.15)))

    pts = []
    ts = []
    theta = 2.0 * np.pi * np.arange(n_az) / n_az
    circle = np.outer(np.cos(theta), u) + np.outer(np.sin(theta), v)
    for i in range(n_rings):
        t = i / (n_rings - 1)
        center = p0 + t * axis
        pts.append(center + radius * circle)
        ts.append(np.full(n_az, t))
    for cap_sign, base, t_val in ((-1.0, p0, 0.0), (1.0, p1, 1.0)):
        for k in range(1, n_cap + 1):
            phi = 0.5 * np.pi * k / (n_cap + 1)
            ring_r = radius * np.cos(phi)
            h = radius * np.sin(phi)
            pts.append(base + cap_sign * h * axis_dir + ring_r * circle)
            ts.append(np.full(n_az, t_val))
        pts.append((base + cap_sign * radius * axis_dir)[None, :])  # pole
        ts.append(np.array([t_val]))
    return np.concatenate(pts, axis=0), np.concatenate(ts)


def _blend_weights(owner, t, start_blend, end_blend, zone=0.25):
    """Two-bone weights along the capsule axis with a smoothstep falloff."""
    pairs = []
    for ti in np.atleast_1d(t):
        if start_blend is not None and ti < zone:
            x = ti / zone
            s = x * x * (3.0 - 2.0 * x)
            w_other = 0.5 * (1.0 - s)
            pairs.append([(owner, 1.0 - w_other), (start_blend, w_other)])
        elif end_blend is not None and ti > 1.0 - zone:
            x = (ti - (1.0 - zone)) / zone
            s = x * x * (3.0 - 2.0 * x)
            w_other = 0.5 * s
            pairs.append([(owner, 1.0 - w_other), (end_blend, w_other)])
        else:
            pairs.append([(owner, 1.0)])
    return pairs


def build_template_humanoid(height: float = 1.0, vertex_budget: int = 4000) -> SkinnedRig:
    """Procedural A-pose humanoid used as the binding template.

    17 joints, capsule-sampled surface (~vertex_budget vertices), smooth
    two-bone weights near joints, total height exactly `height`, and a
    vertex set mirror-symmetric in x.
    """
    if not (0.5 <= height <= 2.5):
        raise ValueError(f"height {height} outside supported range [0.5, 2.5]")
    h = float(height)

    arm = np.deg2rad(ARM_BIND_ABDUCTION_DEG)
    leg = np.deg2rad(LEG_BIND_ABDUCTION_DEG)
    arm_dir = np.array([np.sin(arm), -np.cos(arm), 0.0])
    leg_dir = np.array([np.sin(leg), -np.cos(leg), 0.0])

    hips = np.array([0.0, 0.53, 0.0]) * h
    spine = np.array([0.0, 0.62, 0.0]) * h
    chest = np.array([0.0, 0.72, 0.0]) * h
    neck = np.array([0.0, 0.84, 0.0]) * h
    head = np.array([0.0, 0.88, 0.0]) * h
    shoulder = np.array([0.17, 0.81, 0.0]) * h
    elbow = shoulder + 0.15 * h * arm_dir
    wrist = elbow + 0.13 * h * arm_dir
    hand_tip = wrist + 0.08 * h * arm_dir
    hip_j = np.array([0.09, 0.50, 0.0]) * h
    knee = hip_j + 0.23 * h * leg_dir
    ankle = knee + 0.21 * h * leg_dir

    def mirror(p):
        return p * np.array([-1.0, 1.0, 1.0])

    positions = {
        "hips": hips, "spine": spine, "chest": chest, "neck": neck, "head": head,
        "left_upper_arm": shoulder, "left_lower_arm": elbow, "left_hand": wrist,
        "right_upper_arm": mirror(shoulder), "right_lower_arm": mirror(elbow),
        "right_hand": mirror(wrist),
        "left_upper_leg": hip_j, "left_lower_leg": knee, "left_foot": ankle,
        "right_upper_leg": mirror(hip_j), "right_lower_leg": mirror(knee),
        "right_foot": mirror(ankle),
    }
    parents = {
        "hips": None, "spine": "hips", "chest": "spine", "neck": "chest", "head": "neck",
        "left_upper_arm": "chest", "left_lower_arm": "left_upper_arm",
        "left_hand": "left_lower_arm",
        "right_upper_arm": "chest", "right_lower_arm": "right_upper_arm",
        "right_hand": "right_lower_arm",
        "left_upper_leg": "hips", "left_lower_leg": "left_upper_leg",
        "left_foot": "left_lower_leg",
        "right_upper_leg": "hips", "right_lower_leg": "right_upper_leg",
        "right_foot": "right_lower_leg",
    }
    name_to_idx = {n: i for i, n in enumerate(TEMPLATE_JOINTS)}
    joints = []
    for name in TEMPLATE_JOINTS:
        parent = parents[name]
        local = positions[name] - (positions[parent] if parent else 0.0)
        joints.append(Joint(
            name=name,
            parent=None if parent is None else name_to_idx[parent],
            bind_local_rotation=np.array(IDENTITY_QUAT),
            bind_local_translation=np.asarray(local, dtype=np.float64),
        ))

    head_top = np.array([0.0, 1.0, 0.0]) * h
    head_r = 0.065 * h
    foot_r = 0.03 * h
    foot0 = np.array([ankle[0], foot_r, 0.01 * h])
    foot1 = np.array([ankle[0], foot_r, 0.15 * h])

    # (owner, p0, p1, radius, blend at start, blend at end, relative area share)
    segs = [
        ("hips", hips - [0, 0.05 * h, 0], hips + [0, 0.04 * h, 0], 0.11 * h, None, "spine"),
        ("spine", spine, chest, 0.10 * h, "hips", "chest"),
        ("chest", chest, neck, 0.105 * h, "spine", "neck"),
        ("neck", neck, head, 0.035 * h, "chest", "head"),
        ("head", head, head_top - [0, head_r, 0], head_r, "neck", None),
        ("left_upper_arm", shoulder, elbow, 0.040 * h, "chest", "left_lower_arm"),
        ("left_lower_arm", elbow, wrist, 0.032 * h, "left_upper_arm", "left_hand"),
        ("left_hand", wrist, hand_tip, 0.025 * h, "left_lower_arm", None),
        ("left_upper_leg", hip_j, knee, 0.060 * h, "hips", "left_lower_leg"),
        ("left_lower_leg", knee, ankle, 0.045 * h, "left_upper_leg", "left_foot"),
        ("left_foot", foot0, foot1, foot_r, "left_lower_leg", None),
    ]

    areas = np.array([2 * np.pi * r * np.linalg.norm(np.asarray(p1) - np.asarray(p0)) + 4 * np.pi * r * r
                      for (_, p0, p1, r, _, _) in segs])
    # mirrored limb segments double their share of the budget
    mirrored_mask = np.array([name.startswith("left_") for (name, *_ ) in segs])
    total = areas.sum() + areas[mirrored_mask].sum()
    budgets = np.maximum(60, np.round(areas / total * vertex_budget).astype(int))

    all_pts = []
    all_pairs = []
    for (name, p0, p1, r, sb, eb), budget in zip(segs, budgets):
        pts, ts = _capsule_points(p0, p1, r, budget)
        pairs = _blend_weights(name_to_idx[name], ts,
                               None if sb is None else name_to_idx[sb],
                               None if eb is None else name_to_idx[eb])
        all_pts.append(pts)
        all_pairs.extend(pairs)
        if name.startswith("left_"):
            m_pts = pts * np.array([-1.0, 1.0, 1.0])
            m_name = name.replace("left_", "right_")
            m_sb = None if sb is None else sb.replace("left_", "right_")
            m_eb = None if eb is None else eb.replace("left_", "right_")
            m_pairs = _blend_weights(name_to_idx[m_name], ts,
                                     None if m_sb is None else name_to_idx[m_sb],
                                     None if m_eb is None else name_to_idx[m_eb])
            all_pts.append(m_pts)
            all_pairs.extend(m_pairs)

    vertices = np.concatenate(all_pts, axis=0)
    n = vertices.shape[0]
    skin_joints = np.zeros((n, MAX_INFLUENCES), dtype=np.int32)
    skin_weights = np.zeros((n, MAX_INFLUENCES), dtype=np.float64)
    for v, pairs in enumerate(all_pairs):
        for k, (j, w) in enumerate(pairs):
            skin_joints[v, k] = j
            skin_weights[v, k] = w

    return SkinnedRig(vertices, joints, skin_joints, skin_weights)


def abduction_pose(rig: SkinnedRig,
                   left_shoulder_deg=ARM_BIND_ABDUCTION_DEG,
                   right_shoulder_deg=ARM_BIND_ABDUCTION_DEG,
                   left_hip_deg=LEG_BIND_ABDUCTION_DEG,
                   right_hip_deg=LEG_BIND_ABDUCTION_DEG) -> Pose:
    """Template pose with the given limb abduction angles (degrees from
    vertical, in the frontal plane). The bind pose is (45, 45, 6, 6)."""
    pose = Pose.bind(rig)
    z = np.array([0.0, 0.0, 1.0])
    for name, angle, bind_angle, sign in (
        ("left_upper_arm", left_shoulder_deg, ARM_BIND_ABDUCTION_DEG, 1.0),
        ("right_upper_arm", right_shoulder_deg, ARM_BIND_ABDUCTION_DEG, -1.0),
        ("left_upper_leg", left_hip_deg, LEG_BIND_ABDUCTION_DEG, 1.0),
        ("right_upper_leg", right_hip_deg, LEG_BIND_ABDUCTION_DEG, -1.0),
    ):
        j = rig.joint_index[name]
        delta = np.deg2rad(angle - bind_angle) * sign
        pose.rotations[j] = quat_multiply(quat_from_axis_angle(z, delta), rig.bind_rotations[j])
    return pose
