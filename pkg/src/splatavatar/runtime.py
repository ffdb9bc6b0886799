"""Per-frame animation loop: pose the rig, update every splat from its
binding, and produce a back-to-front draw order.

Sorting is the frame-rate killer for animated splats: positions change
every frame, so nothing can be cached. `full_sort` is the exact
(oracle) order; `group_sort` sorts one depth key per bone group and
keeps bundle order inside each group, trading exactness for a sort that
is O(G log G) instead of O(N log N). `order_divergence` quantifies the
gap between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .binding import AvatarBundle, GroupTable
from .errors import RigMismatchError
from .rig import AnimationClip, Pose, SkinnedRig, blend_vertex_matrices, compute_skin_matrices, sample_animation
from .transforms import extract_rotation  # noqa: F401  (spec operation lives here)


@dataclass
class CameraState:
    position: np.ndarray   # (3,)
    forward: np.ndarray    # (3,) unit

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.forward = np.asarray(self.forward, dtype=np.float64)
        n = np.linalg.norm(self.forward)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"camera forward must be unit length, |f| = {n}")

    @classmethod
    def looking_at(cls, position, target):
        position = np.asarray(position, dtype=np.float64)
        d = np.asarray(target, dtype=np.float64) - position
        return cls(position, d / np.linalg.norm(d))


@dataclass(eq=False)
class FramePacket:
    positions: np.ndarray   # (N, 3) float32
    rotations: np.ndarray   # (N, 4) float32 unit (not sign-canonicalized)
    order: np.ndarray       # (N,) int64 permutation, back to front
    frame_id: int


def depths(positions, camera: CameraState):
    """Signed depth along the camera forward axis (rasterizer convention)."""
    pos = np.asarray(positions, dtype=np.float64)
    return (pos - camera.position) @ camera.forward


def vertex_frame_tables(rig: SkinnedRig, pose: Pose):
    """Per-vertex float32 tables (linear 3x3, translation, rotation quat)
    consumed by the splat-update kernel. Rotation extraction runs once per
    vertex, not per splat."""
    m_v = blend_vertex_matrices(rig, compute_skin_matrices(rig, pose))
    lin = m_v[:, :3, :3]
    return (
        lin.astype(np.float32),
        m_v[:, :3, 3].astype(np.float32),
        extract_rotation(lin).astype(np.float32),
    )


def update_splats(bundle: AvatarBundle, rig: SkinnedRig, pose: Pose, workers=None):
    """Move every splat with its bound vertex: positions and orientations
    only, scales stay bind-time constants.

    Pure per-splat math into disjoint output slots: the result is
    bit-identical for any worker count.
    """
    if bundle.rig_hash != rig.content_hash():
        raise RigMismatchError(
            f"bundle was bound against rig {bundle.rig_hash.hex()[:12]}..., "
            f"got {rig.content_hash().hex()[:12]}..."
        )
    lin, trans, vquat = vertex_frame_tables(rig, pose)
    return _kernels.transform_splats(
        bundle.vertex.astype(np.int64),
        bundle.rel_positions,
        bundle.rel_rotations,
        lin,
        trans,
        vquat,
        workers=workers,
    )


def full_sort(positions, camera: CameraState):
    """Exact back-to-front order: depth descending, ties by ascending index."""
    d = depths(positions, camera)
    return np.argsort(-d, kind="stable").astype(np.int64)


def group_sort(positions, groups, camera: CameraState):
    """Back-to-front order of whole groups by centroid depth.

    Exactly G keys are computed and sorted (ties by smaller group id);
    inside a group, bundle order is kept, so per-splat work is one copy.
    `groups` is a GroupTable or a bundle-style (starts, ends) pair.
    """
    if isinstance(groups, GroupTable):
        ranges = [(s, e) for _, s, e in groups.groups]
    elif isinstance(groups, AvatarBundle):
        ranges = [(int(s), int(e)) for s, e in zip(groups.group_starts, groups.group_ends)]
    else:
        ranges = [(int(s), int(e)) for s, e in groups]

    pos = np.asarray(positions, dtype=np.float64)
    total = int(ranges[-1][1]) if ranges else 0
    ranges = [(s, e) for s, e in ranges if e > s]
    starts = np.array([s for s, _ in ranges], dtype=np.int64)
    ends = np.array([e for _, e in ranges], dtype=np.int64)
    if starts.shape[0] == 0:
        return np.empty(0, dtype=np.int64)

    sums = np.add.reduceat(pos, starts, axis=0)
    # reduceat sums to the next start; the last segment runs to the end,
    # which matches because the non-empty ranges partition [0, N)
    counts = (ends - starts).astype(np.float64)
    centroids = sums / counts[:, None]
    keys = (centroids - camera.position) @ camera.forward

    group_order = np.argsort(-keys, kind="stable")
    out = np.empty(total, dtype=np.int64)
    off = 0
    for g in group_order:
        size = int(ends[g] - starts[g])
        out[off : off + size] = np.arange(starts[g], ends[g], dtype=np.int64)
        off += size
    return out


@dataclass
class DivergenceReport:
    inversion_fraction: float
    max_depth_error: float


def order_divergence(order_a, order_b, depth_values) -> DivergenceReport:
    """How differently two draw orders place splats of unequal depth.

    inversion_fraction: pairs whose relative order differs between the two
    orders and whose depths differ, over C(N, 2). Pairs of equal depth are
    excluded: alpha blending cannot distinguish them. Counted exactly by
    merge sort. max_depth_error: the largest |depth difference| across
    adjacent pairs (in either order) that the other order places the
    opposite way; 0 when the orders agree.
    """
    order_a = np.asarray(order_a, dtype=np.int64)
    order_b = np.asarray(order_b, dtype=np.int64)
    depth_values = np.asarray(depth_values, dtype=np.float64)
    n = order_a.shape[0]
    if order_b.shape[0] != n:
        raise ValueError(f"order length mismatch: {n} vs {order_b.shape[0]}")
    if n < 2:
        return DivergenceReport(0.0, 0.0)

    pos_a = np.empty(n, dtype=np.int64)
    pos_a[order_a] = np.arange(n)
    pos_b = np.empty(n, dtype=np.int64)
    pos_b[order_b] = np.arange(n)
    discordant = _kernels.count_inversions(pos_b[order_a])

    # subtract disagreements between equal-depth splats
    d_sorted_idx = np.argsort(depth_values, kind="stable")
    d_sorted = depth_values[d_sorted_idx]
    i = 0
    while i < n:
        j = i + 1
        while j < n and d_sorted[j] == d_sorted[i]:
            j += 1
        if j - i > 1:
            members = d_sorted_idx[i:j]
            in_a_order = members[np.argsort(pos_a[members], kind="stable")]
            discordant -= _kernels.count_inversions(pos_b[in_a_order])
        i = j

    max_err = 0.0
    for order, other_pos in ((order_a, pos_b), (order_b, pos_a)):
        a, b = order[:-1], order[1:]
        swapped = other_pos[a] > other_pos[b]
        if swapped.any():
            max_err = max(max_err, float(np.abs(depth_values[a] - depth_values[b])[swapped].max()))

    total_pairs = n * (n - 1) // 2
    return DivergenceReport(discordant / total_pairs, max_err)


def run_frame(bundle: AvatarBundle, rig: SkinnedRig, clip: AnimationClip, t: float,
              camera: CameraState, mode: str = "group", frame_id: int = 0,
              workers=None) -> FramePacket:
    """One frame: sample the clip, skin, update splats, sort.

    The clip plays over the bundle's fit pose, so playback stays in the
    reconstruction space (yaw/translation/scale from the fit block).
    mode selects group-level or full per-splat sorting.
    """
    if mode not in ("group", "full"):
        raise ValueError(f"mode must be 'group' or 'full', got {mode!r}")
    base = bundle.fit_pose(rig)
    pose = sample_animation(clip, rig, t, base_pose=base)
    positions, rotations = update_splats(bundle, rig, pose, workers=workers)
    camera_state = camera if isinstance(camera, CameraState) else CameraState(*camera)
    if mode == "full":
        order = full_sort(positions, camera_state)
    else:
        order = group_sort(positions, bundle, camera_state)
    return FramePacket(positions=positions, rotations=rotations, order=order, frame_id=frame_id)
