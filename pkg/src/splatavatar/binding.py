"""Splat-to-vertex binding and the avatar bundle format.

Each splat is assigned to its exact nearest skinned-mesh vertex and its
pose is re-expressed in that vertex's blended-skinning frame at fit time.
Re-applying the frame at the same pose reproduces the splat exactly; at
any other pose, the splat follows the mesh.

Bundle binary layout (little-endian, all offsets implicit):

    magic   "GSAB"                      4 bytes
    u32     version (= 1)
    u32     splat_count N
    u32     vertex_count V
    u32     group_count G
    u8[32]  rig content hash (sha256)
    f32     fit yaw (radians)
    f32[3]  fit translation
    f32     fit uniform scale
    u32     joint_count J
    f32[4J] fit pose local rotations (xyzw per joint)
    u32[N]  bound vertex index          (arrays are struct-of-arrays,
    f32[3N] rel_position                 all in bundle order)
    f32[4N] rel_rotation (xyzw)
    f32[3N] splat scale
    f32[3N] color
    f32[N]  opacity
    (u32 bone, u32 start, u32 end) x G  group table
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import BindingError, BundleFormatError
from .rig import Pose, SkinnedRig, blend_vertex_matrices, compute_skin_matrices
from .splat_io import SplatCloud
from .transforms import extract_rotation, quat_conjugate, quat_multiply

BUNDLE_MAGIC = b"GSAB"
BUNDLE_VERSION = 1


class SpatialIndex:
    """Exact nearest-neighbor index over 3-D points.

    Backed by a balanced k-d tree; queries return exactly the brute-force
    nearest neighbor, ties broken by the smallest original index.
    Duplicate points are canonicalized to their smallest index at build
    time.
    """

    def __init__(self, positions):
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] == 0:
            raise ValueError("positions must be a non-empty (N, 3) array")
        self.positions = positions
        unique, inverse = np.unique(positions, axis=0, return_inverse=True)
        smallest = np.full(unique.shape[0], positions.shape[0], dtype=np.int64)
        np.minimum.at(smallest, inverse, np.arange(positions.shape[0], dtype=np.int64))
        self._unique_to_original = smallest
        self._tree = cKDTree(unique)

    def query(self, points):
        """Nearest neighbor for each query point -> (indices, distances)."""
        points = np.ascontiguousarray(points, dtype=np.float64)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        k = min(2, self._tree.n)
        dist, ui = self._tree.query(points, k=k, workers=1)
        if k == 1:
            idx = self._unique_to_original[ui.reshape(-1)]
            dist = dist.reshape(-1)
        else:
            # equal distances between distinct points: pick the smaller
            # original index, matching a brute-force argmin
            cand = self._unique_to_original[ui]
            tie = dist[:, 0] == dist[:, 1]
            idx = cand[:, 0].copy()
            idx[tie] = np.minimum(cand[tie, 0], cand[tie, 1])
            dist = dist[:, 0]
        if single:
            return int(idx[0]), float(dist[0])
        return idx, dist


def build_vertex_index(positions) -> SpatialIndex:
    """Spec-facing constructor; see SpatialIndex."""
    return SpatialIndex(positions)


@dataclass(eq=False)
class BindingSet:
    """Per-splat nearest vertex + relative transform (original splat order)."""

    vertex: np.ndarray          # (N,) int64
    rel_positions: np.ndarray   # (N, 3) float32, in vertex-frame units
    rel_rotations: np.ndarray   # (N, 4) float32 xyzw unit
    splat_scales: np.ndarray    # (N, 3) float32, bind-time, fit-scale removed
    distances: np.ndarray       # (N,) float64 splat-to-vertex distance at fit pose

    @property
    def count(self):
        return self.vertex.shape[0]


@dataclass(eq=False)
class GroupTable:
    """Bone-level grouping after bundle reordering.

    groups[g] = (bone joint index, start, end) with contiguous, disjoint
    [start, end) ranges partitioning [0, N). permutation maps bundle
    position -> original splat index.
    """

    group_of_splat: np.ndarray  # (N,) int32, bundle order
    groups: list                # [(bone, start, end)]
    permutation: np.ndarray     # (N,) int64

    @property
    def count(self):
        return len(self.groups)


def compute_bindings(cloud: SplatCloud, rig: SkinnedRig, fit) -> BindingSet:
    """Bind every splat to its nearest skinned vertex at the fit pose.

    rel_position = M_v^-1 @ p, rel_rotation = q(M_v)^-1 * q_splat, where
    M_v is the vertex's blended skinning matrix composed with the fit
    similarity and q() extracts the polar rotation of the linear part.
    Splat scales are divided by the fit scale so that re-posing at the
    fit pose reproduces the original splats.
    """
    pose = fit.to_pose(rig)
    skin = compute_skin_matrices(rig, pose)
    m_v = blend_vertex_matrices(rig, skin)          # (V, 4, 4)
    skinned = np.einsum("vij,vj->vi", m_v[:, :3, :3], rig.vertices) + m_v[:, :3, 3]

    index = SpatialIndex(skinned)
    vertex, dist = index.query(cloud.positions.astype(np.float64))

    used = np.unique(vertex)
    dets = np.linalg.det(m_v[used, :3, :3])
    singular_used = used[np.abs(dets) < 1e-8]
    if singular_used.size:
        bad_splats = np.nonzero(np.isin(vertex, singular_used))[0]
        raise BindingError(
            f"{bad_splats.size} splats bound to singular vertex frames",
            splat_indices=bad_splats.tolist(),
        )

    inv = np.linalg.inv(m_v[used])
    vquat = extract_rotation(m_v[used, :3, :3])
    remap = np.empty(int(used.max()) + 1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    slot = remap[vertex]

    p = cloud.positions.astype(np.float64)
    inv_s = inv[slot]
    rel_pos = np.einsum("nij,nj->ni", inv_s[:, :3, :3], p) + inv_s[:, :3, 3]
    rel_rot = quat_multiply(quat_conjugate(vquat[slot]), cloud.rotations.astype(np.float64))

    return BindingSet(
        vertex=vertex.astype(np.int64),
        rel_positions=rel_pos.astype(np.float32),
        rel_rotations=rel_rot.astype(np.float32),
        splat_scales=(cloud.scales.astype(np.float64) / fit.uniform_scale).astype(np.float32),
        distances=dist,
    )


def dominant_joints(rig: SkinnedRig) -> np.ndarray:
    """Max-weight joint per vertex; weight ties go to the smaller index."""
    best_j = np.full(rig.vertex_count, np.iinfo(np.int32).max, dtype=np.int64)
    best_w = np.full(rig.vertex_count, -1.0)
    for k in range(rig.skin_joints.shape[1]):
        w = rig.skin_weights[:, k]
        j = rig.skin_joints[:, k].astype(np.int64)
        valid = w > 0.0
        better = valid & ((w > best_w) | ((w == best_w) & (j < best_j)))
        best_w = np.where(better, w, best_w)
        best_j = np.where(better, j, best_j)
    return best_j


def assign_groups(bindings: BindingSet, rig: SkinnedRig) -> GroupTable:
    """Stable partition of splats into bone groups.

    A splat belongs to the dominant joint of its bound vertex. Splats are
    reordered so every group is contiguous (groups by ascending joint
    index, original order kept inside each group).
    """
    bone_of_splat = dominant_joints(rig)[bindings.vertex]
    permutation = np.argsort(bone_of_splat, kind="stable").astype(np.int64)
    sorted_bones = bone_of_splat[permutation]

    groups = []
    group_of_splat = np.empty(bindings.count, dtype=np.int32)
    start = 0
    for bone in np.unique(sorted_bones):
        end = start + int((sorted_bones == bone).sum())
        group_of_splat[start:end] = len(groups)
        groups.append((int(bone), start, end))
        start = end
    return GroupTable(group_of_splat=group_of_splat, groups=groups, permutation=permutation)


@dataclass(eq=False)
class AvatarBundle:
    """Self-contained animatable avatar: bindings + appearance + groups."""

    rig_hash: bytes
    fit_yaw: float
    fit_translation: np.ndarray      # (3,) float32
    fit_scale: float
    fit_rotations: np.ndarray        # (J, 4) float32 xyzw
    vertex: np.ndarray               # (N,) uint32, bundle order
    rel_positions: np.ndarray        # (N, 3) float32
    rel_rotations: np.ndarray        # (N, 4) float32
    scales: np.ndarray               # (N, 3) float32
    colors: np.ndarray               # (N, 3) float32
    opacities: np.ndarray            # (N,) float32
    group_bones: np.ndarray          # (G,) uint32
    group_starts: np.ndarray         # (G,) uint32
    group_ends: np.ndarray           # (G,) uint32
    vertex_count: int

    @property
    def splat_count(self):
        return self.vertex.shape[0]

    @property
    def group_count(self):
        return self.group_bones.shape[0]

    @property
    def joint_count(self):
        return self.fit_rotations.shape[0]

    def fit_pose(self, rig: SkinnedRig) -> Pose:
        """The pose the bundle was bound in (limb pose + fit similarity)."""
        from .fit import fit_pose_from_bundle
        return fit_pose_from_bundle(self, rig)

    def group_ranges(self):
        return [(int(b), int(s), int(e)) for b, s, e in
                zip(self.group_bones, self.group_starts, self.group_ends)]


def build_bundle(bindings: BindingSet, groups: GroupTable, fit, cloud: SplatCloud,
                 rig: SkinnedRig) -> AvatarBundle:
    """Assemble a bundle, applying the group permutation to every per-splat
    array (appearance comes from the cloud, degree-0 only)."""
    perm = groups.permutation
    return AvatarBundle(
        rig_hash=rig.content_hash(),
        fit_yaw=float(fit.yaw),
        fit_translation=np.asarray(fit.translation, dtype=np.float32),
        fit_scale=float(fit.uniform_scale),
        fit_rotations=np.asarray(fit.limb_pose.rotations, dtype=np.float32),
        vertex=bindings.vertex[perm].astype(np.uint32),
        rel_positions=bindings.rel_positions[perm],
        rel_rotations=bindings.rel_rotations[perm],
        scales=bindings.splat_scales[perm],
        colors=cloud.colors[perm],
        opacities=cloud.opacities[perm],
        group_bones=np.array([g[0] for g in groups.groups], dtype=np.uint32),
        group_starts=np.array([g[1] for g in groups.groups], dtype=np.uint32),
        group_ends=np.array([g[2] for g in groups.groups], dtype=np.uint32),
        vertex_count=rig.vertex_count,
    )


def export_bundle(bundle: AvatarBundle) -> bytes:
    n = bundle.splat_count
    g = bundle.group_count
    j = bundle.joint_count
    parts = [
        BUNDLE_MAGIC,
        struct.pack("<IIII", BUNDLE_VERSION, n, bundle.vertex_count, g),
        bundle.rig_hash,
        struct.pack("<f", bundle.fit_yaw),
        np.asarray(bundle.fit_translation, dtype="<f4").tobytes(),
        struct.pack("<f", bundle.fit_scale),
        struct.pack("<I", j),
        np.ascontiguousarray(bundle.fit_rotations, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.vertex, dtype="<u4").tobytes(),
        np.ascontiguousarray(bundle.rel_positions, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.rel_rotations, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.scales, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.colors, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.opacities, dtype="<f4").tobytes(),
        np.ascontiguousarray(
            np.stack([bundle.group_bones, bundle.group_starts, bundle.group_ends], axis=1),
            dtype="<u4",
        ).tobytes(),
    ]
    return b"".join(parts)


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, nbytes, what):
        if self.off + nbytes > len(self.data):
            raise BundleFormatError(
                f"truncated bundle while reading {what}: need {self.off + nbytes} bytes, have {len(self.data)}"
            )
        out = self.data[self.off : self.off + nbytes]
        self.off += nbytes
        return out

    def array(self, dtype, count, what):
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count, what)
        return np.frombuffer(raw, dtype=dt).copy()


def import_bundle(data: bytes) -> AvatarBundle:
    """Parse bundle bytes; import(export(x)) == x bit-exactly."""
    cur = _Cursor(data)
    magic = cur.take(4, "magic")
    if magic != BUNDLE_MAGIC:
        raise BundleFormatError(f"bad magic {magic!r}, expected {BUNDLE_MAGIC!r}")
    version, n, v, g = struct.unpack("<IIII", cur.take(16, "header"))
    if version != BUNDLE_VERSION:
        raise BundleFormatError(
            f"unsupported version {version} (max supported {BUNDLE_VERSION})"
        )
    rig_hash = bytes(cur.take(32, "rig hash"))
    (yaw,) = struct.unpack("<f", cur.take(4, "fit yaw"))
    translation = cur.array("<f4", 3, "fit translation")
    (scale,) = struct.unpack("<f", cur.take(4, "fit scale"))
    (j,) = struct.unpack("<I", cur.take(4, "joint count"))
    rotations = cur.array("<f4", 4 * j, "fit rotations").reshape(j, 4)
    vertex = cur.array("<u4", n, "vertex indices")
    rel_positions = cur.array("<f4", 3 * n, "rel positions").reshape(n, 3)
    rel_rotations = cur.array("<f4", 4 * n, "rel rotations").reshape(n, 4)
    scales = cur.array("<f4", 3 * n, "scales").reshape(n, 3)
    colors = cur.array("<f4", 3 * n, "colors").reshape(n, 3)
    opacities = cur.array("<f4", n, "opacities")
    table = cur.array("<u4", 3 * g, "group table").reshape(g, 3)
    if cur.off != len(data):
        raise BundleFormatError(
            f"trailing garbage: bundle ends at {cur.off}, file has {len(data)} bytes"
        )

    if np.any(vertex >= v):
        raise BundleFormatError("vertex index out of range")
    starts, ends = table[:, 1], table[:, 2]
    if g:
        if starts[0] != 0 or ends[-1] != n or np.any(starts[1:] != ends[:-1]) or np.any(ends < starts):
            raise BundleFormatError("group ranges do not partition the splat array")
        if np.any(table[:, 0] >= j):
            raise BundleFormatError("group bone index out of range")
    elif n:
        raise BundleFormatError("bundle has splats but no groups")

    return AvatarBundle(
        rig_hash=rig_hash,
        fit_yaw=float(yaw),
        fit_translation=translation,
        fit_scale=float(scale),
        fit_rotations=rotations,
        vertex=vertex,
        rel_positions=rel_positions,
        rel_rotations=rel_rotations,
        scales=scales,
        colors=colors,
        opacities=opacities,
        group_bones=table[:, 0].copy(),
        group_starts=starts.copy(),
        group_ends=ends.copy(),
        vertex_count=int(v),
    )


def load_bundle(path) -> AvatarBundle:
    with open(path, "rb") as f:
        return import_bundle(f.read())


def save_bundle(bundle: AvatarBundle, path):
    data = export_bundle(bundle)
    with open(path, "wb") as f:
        f.write(data)
