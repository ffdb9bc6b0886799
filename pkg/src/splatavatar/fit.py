"""Place the humanoid template at the subject's position, orientation,
pose and scale.

The scan gives no pose labels, so orientation comes from geometry: a
standing person is wider than deep, which makes the minor horizontal
covariance axis the front-back direction, and toes stick out forward.
The similarity (yaw, translation, scale) and four limb abduction angles
are then refined against a one-sided chamfer objective: mean distance
from each skinned template vertex to its nearest splat. One-sided,
mesh-to-cloud, because the cloud may keep accessories and noise that the
template legitimately does not explain.

All searches use fixed grids and fixed golden-section iteration counts:
identical inputs give bitwise-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binding import SpatialIndex
from .errors import AmbiguousOrientationError, FitFailureError
from .rig import (
    ARM_BIND_ABDUCTION_DEG,
    LEG_BIND_ABDUCTION_DEG,
    Pose,
    SkinnedRig,
    abduction_pose,
    skin_vertices,
)
from .splat_io import SplatCloud
from .transforms import golden_section, quat_from_axis_angle, quat_multiply, quat_rotate

YAW_GRID_STEPS = 24                 # 15 degree spacing, full circle
YAW_REFINE_ITERS = 20               # golden section, bracket well under 0.5 deg
SCALE_REFINE_SPAN = 0.05            # +/- 5%
OBJECTIVE_THRESHOLD = 0.15          # meters; above this the fit failed
COVARIANCE_RATIO_MIN = 1.2

SHOULDER_RANGE_DEG = (20.0, 80.0)
HIP_RANGE_DEG = (0.0, 20.0)

_UP = np.array([0.0, 1.0, 0.0])


@dataclass
class FitResult:
    """Similarity transform + limb pose placing the template on the subject."""

    yaw: float                       # radians about +Y
    translation: np.ndarray          # (3,)
    uniform_scale: float
    limb_pose: Pose                  # template-space pose (root untouched)
    objective: float                 # final chamfer value, meters
    limb_angles_deg: dict = field(default_factory=dict)
    objective_trace: list = field(default_factory=list, repr=False)

    def to_pose(self, rig: SkinnedRig) -> Pose:
        """Fold the similarity into a root pose: skinning with this pose
        equals applying translation + scale * R_yaw to limb-posed vertices."""
        root = int(np.nonzero(rig.parents < 0)[0][0])
        pose = self.limb_pose.copy()
        yaw_q = quat_from_axis_angle(_UP, self.yaw)
        pose.rotations[root] = quat_multiply(yaw_q, pose.rotations[root])
        b0 = rig.bind_globals[root, :3, 3]
        # rt = t - b0 + s * R b0  (root pivot correction, see compute_skin_matrices)
        pose.root_translation = (
            np.asarray(self.translation, dtype=np.float64)
            - b0
            + self.uniform_scale * quat_rotate(yaw_q, b0)
        )
        pose.root_uniform_scale = float(self.uniform_scale)
        return pose

    def to_dict(self):
        return {
            "yaw_rad": float(self.yaw),
            "yaw_deg": float(np.rad2deg(self.yaw)),
            "translation": [float(v) for v in self.translation],
            "uniform_scale": float(self.uniform_scale),
            "objective_m": float(self.objective),
            "limb_angles_deg": {k: float(v) for k, v in self.limb_angles_deg.items()},
        }


def chamfer_distance(query_points, target) -> float:
    """Mean distance from each query point to its nearest splat position.

    `target` may be a SplatCloud or a prebuilt SpatialIndex; accumulation
    is 64-bit regardless of input dtype.
    """
    query_points = np.asarray(query_points, dtype=np.float64)
    if query_points.size == 0:
        raise ValueError("query points must be non-empty")
    if isinstance(target, SplatCloud):
        target = SpatialIndex(target.positions.astype(np.float64))
    _, dist = target.query(query_points)
    return float(np.mean(dist, dtype=np.float64))


def estimate_front_axis(cloud: SplatCloud, opacity_min: float = 0.05) -> float:
    """Yaw (radians about +Y) of the subject's facing direction.

    Minor eigenvector of the opacity-weighted horizontal covariance is the
    front-back axis; the sign points toward the toes (centroid of the
    lowest 15% of the height range, relative to the body centroid).
    Near-isotropic covariance raises AmbiguousOrientationError.
    """
    pos = cloud.positions.astype(np.float64)
    w = cloud.opacities.astype(np.float64)
    keep = w >= opacity_min
    if keep.sum() < 3:
        raise AmbiguousOrientationError("too few opaque splats for orientation")
    pos = pos[keep]
    w = w[keep]

    xz = pos[:, [0, 2]]
    mean = (xz * w[:, None]).sum(axis=0) / w.sum()
    d = xz - mean
    cov = (d * w[:, None]).T @ d / w.sum()
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[0] <= 0 or evals[1] / evals[0] < COVARIANCE_RATIO_MIN:
        ratio = float("inf") if evals[0] <= 0 else evals[1] / evals[0]
        raise AmbiguousOrientationError(
            f"horizontal covariance too isotropic (ratio {ratio:.3f} < {COVARIANCE_RATIO_MIN}); "
            "pass a manual yaw"
        )
    front = evecs[:, 0]  # minor axis = front-back

    y = pos[:, 1]
    y_lo, y_hi = y.min(), y.max()
    feet = y <= y_lo + 0.15 * (y_hi - y_lo)
    fw = w[feet]
    feet_centroid = (xz[feet] * fw[:, None]).sum(axis=0) / fw.sum()
    if np.dot(feet_centroid - mean, front) < 0:
        front = -front
    return float(np.arctan2(front[0], front[1]))  # angle against +Z


def _similarity_points(points, yaw, scale, translation):
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return points @ (scale * rot.T) + translation


def _recentered_objective(points, yaw, scale, cloud_centroid, points_centroid, index):
    """Chamfer after aligning centroids for this (yaw, scale) candidate.
    Returns (objective, translation used)."""
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    translation = cloud_centroid - scale * (rot @ points_centroid)
    obj = chamfer_distance(points @ (scale * rot.T) + translation, index)
    return obj, translation


def _percentile_height(ys) -> float:
    """Ground-to-crown span by the same robust percentiles on both sides.

    Surface samples are sparse at the crown, so a 99th percentile sits a
    few percent below the true top; measuring the cloud and the template
    with the same rule makes the height *ratio* unbiased anyway.
    """
    from .isolation import _nearest_rank
    ys = np.sort(np.asarray(ys, dtype=np.float64))
    return _nearest_rank(ys, 0.99) - _nearest_rank(ys, 0.01)


def fit_similarity(cloud: SplatCloud, rig: SkinnedRig, yaw_init: float = 0.0,
                   base: FitResult | None = None, refine_only: bool = False) -> FitResult:
    """Coarse-to-fine search for (yaw, translation, scale), A-pose limbs.

    Yaw: full-circle grid of 24 candidates (15 degrees) centered on
    yaw_init, then golden-section refinement of the best bracket. Scale:
    height-ratio initialization refined +/-5%. Translation: re-derived at
    every candidate by aligning the weighted cloud centroid with the
    transformed vertex centroid. Accepted objective values never increase.
    Raises FitFailureError (carrying the best result) if the final
    objective exceeds 0.15 m.

    `base` re-runs the similarity refinement with a previously fitted limb
    pose (skipping the full-circle grid); the default is the A-pose bind.
    `refine_only` also skips the grid, trusting yaw_init to within the
    refinement bracket (a manually supplied facing direction).
    """
    index = SpatialIndex(cloud.positions.astype(np.float64))
    pos = cloud.positions.astype(np.float64)
    w = cloud.opacities.astype(np.float64)
    cloud_centroid = (pos * w[:, None]).sum(axis=0) / w.sum()

    limb_pose = base.limb_pose if base is not None else Pose.bind(rig)
    points = skin_vertices(rig, limb_pose)
    points_centroid = points.mean(axis=0)

    scale0 = _percentile_height(pos[:, 1]) / _percentile_height(points[:, 1])

    accepted = []  # (objective, yaw, scale, translation), non-increasing objective

    def consider(yaw, scale):
        obj, translation = _recentered_objective(
            points, yaw, scale, cloud_centroid, points_centroid, index
        )
        if not accepted or obj < accepted[-1][0]:
            accepted.append((obj, yaw, scale, translation))
        return obj

    step = 2.0 * np.pi / YAW_GRID_STEPS
    if base is None and not refine_only:
        grid = yaw_init + step * np.arange(YAW_GRID_STEPS)
        objs = [consider(yaw, scale0) for yaw in grid]
        best_yaw = grid[int(np.argmin(objs))]
    else:
        consider(yaw_init, scale0)
        best_yaw = yaw_init

    golden_section(lambda yaw: consider(yaw, scale0),
                   best_yaw - step, best_yaw + step, iters=YAW_REFINE_ITERS)
    yaw = accepted[-1][1]

    golden_section(lambda s: consider(yaw, s),
                   scale0 * (1.0 - SCALE_REFINE_SPAN), scale0 * (1.0 + SCALE_REFINE_SPAN),
                   iters=YAW_REFINE_ITERS)

    obj, yaw, scale, translation = accepted[-1]
    result = FitResult(
        yaw=float(yaw),
        translation=translation,
        uniform_scale=float(scale),
        limb_pose=limb_pose.copy(),
        objective=float(obj),
        limb_angles_deg=dict(base.limb_angles_deg) if base is not None else {
            "left_shoulder": ARM_BIND_ABDUCTION_DEG,
            "right_shoulder": ARM_BIND_ABDUCTION_DEG,
            "left_hip": LEG_BIND_ABDUCTION_DEG,
            "right_hip": LEG_BIND_ABDUCTION_DEG,
        },
    )
    result.objective_trace = [a[0] for a in accepted]
    if result.objective > OBJECTIVE_THRESHOLD:
        raise FitFailureError(
            f"fit objective {result.objective:.4f} m above threshold {OBJECTIVE_THRESHOLD} m",
            result,
        )
    return result


_LIMB_VERTEX_CHAINS = {
    "left_shoulder": ("left_upper_arm", "left_lower_arm", "left_hand"),
    "right_shoulder": ("right_upper_arm", "right_lower_arm", "right_hand"),
    "left_hip": ("left_upper_leg", "left_lower_leg", "left_foot"),
    "right_hip": ("right_upper_leg", "right_lower_leg", "right_foot"),
}

_ANGLE_RANGES = {
    "left_shoulder": SHOULDER_RANGE_DEG,
    "right_shoulder": SHOULDER_RANGE_DEG,
    "left_hip": HIP_RANGE_DEG,
    "right_hip": HIP_RANGE_DEG,
}


def _limb_vertex_mask(rig: SkinnedRig, chain) -> np.ndarray:
    from .binding import dominant_joints
    ids = {rig.joint_index[name] for name in chain if name in rig.joint_index}
    return np.isin(dominant_joints(rig), list(ids))


def fit_limb_angles(cloud: SplatCloud, rig: SkinnedRig, base: FitResult) -> FitResult:
    """Refine shoulder (20-80 deg) and hip (0-20 deg) abduction angles.

    Each angle gets a golden-section search on a partial chamfer that only
    scores that limb's vertices; two passes over the four angles. An
    updated angle is kept only if the full objective does not increase,
    so the result's objective is <= the input's.
    """
    index = SpatialIndex(cloud.positions.astype(np.float64))
    masks = {name: _limb_vertex_mask(rig, chain) for name, chain in _LIMB_VERTEX_CHAINS.items()}

    angles = dict(base.limb_angles_deg)

    def posed_points(current):
        pose = abduction_pose(
            rig,
            left_shoulder_deg=current["left_shoulder"],
            right_shoulder_deg=current["right_shoulder"],
            left_hip_deg=current["left_hip"],
            right_hip_deg=current["right_hip"],
        )
        pts = skin_vertices(rig, pose)
        return _similarity_points(pts, base.yaw, base.uniform_scale, base.translation)

    best_full = chamfer_distance(posed_points(angles), index)
    objective_trace = [best_full]

    for _ in range(2):
        for name in ("left_shoulder", "right_shoulder", "left_hip", "right_hip"):
            mask = masks[name]
            if not mask.any():
                continue

            def partial(angle_deg):
                trial = dict(angles)
                trial[name] = angle_deg
                return chamfer_distance(posed_points(trial)[mask], index)

            lo, hi = _ANGLE_RANGES[name]
            angle_best, _ = golden_section(partial, lo, hi, iters=YAW_REFINE_ITERS)
            trial = dict(angles)
            trial[name] = angle_best
            full = chamfer_distance(posed_points(trial), index)
            if full <= best_full:
                angles = trial
                best_full = full
                objective_trace.append(full)

    result = FitResult(
        yaw=base.yaw,
        translation=np.array(base.translation),
        uniform_scale=base.uniform_scale,
        limb_pose=abduction_pose(
            rig,
            left_shoulder_deg=angles["left_shoulder"],
            right_shoulder_deg=angles["right_shoulder"],
            left_hip_deg=angles["left_hip"],
            right_hip_deg=angles["right_hip"],
        ),
        objective=float(best_full),
        limb_angles_deg=angles,
    )
    result.objective_trace = objective_trace
    return result


def fit_template(cloud: SplatCloud, rig: SkinnedRig, yaw_init: float = 0.0,
                 rounds: int = 2, fit_limbs: bool = True,
                 yaw_locked: bool = False) -> FitResult:
    """Full template placement: alternate similarity and limb refinement.

    A single similarity pass runs with bind-pose arms, so a subject whose
    abduction differs from the A-pose biases the recovered scale, which in
    turn biases the limb angles. One extra alternation removes the bias.
    `yaw_locked` keeps the search near yaw_init (manual override) instead
    of scanning the full circle.
    """
    result = fit_similarity(cloud, rig, yaw_init, refine_only=yaw_locked)
    if not fit_limbs:
        return result
    result = fit_limb_angles(cloud, rig, result)
    for _ in range(max(0, rounds - 1)):
        result = fit_similarity(cloud, rig, result.yaw, base=result)
        result = fit_limb_angles(cloud, rig, result)
    return result


def fit_from_bundle(bundle) -> FitResult:
    """Rebuild a FitResult from a bundle's fit block (objective not stored)."""
    return FitResult(
        yaw=float(bundle.fit_yaw),
        translation=bundle.fit_translation.astype(np.float64),
        uniform_scale=float(bundle.fit_scale),
        limb_pose=Pose(rotations=bundle.fit_rotations.astype(np.float64)),
        objective=0.0,
    )


def fit_pose_from_bundle(bundle, rig: SkinnedRig) -> Pose:
    """The bind-time pose of a bundle: limb rotations + fit similarity
    folded into the root (see FitResult.to_pose)."""
    return fit_from_bundle(bundle).to_pose(rig)


def make_fit_pose_clip(fit: FitResult, rig: SkinnedRig, duration: float = 1.0, loop: bool = True):
    """Single-key clip that holds the fitted limb pose.

    Played over the bundle's base pose (see runtime.run_frame), the first
    frame reproduces the bind-time splats exactly: all non-root joints key
    the fitted rotation and the root keeps the base placement.
    """
    from .rig import AnimationClip
    root = int(np.nonzero(rig.parents < 0)[0][0])
    tracks = {}
    for j, joint in enumerate(rig.joints):
        if j == root:
            continue  # base pose already carries yaw; no root track needed
        tracks[joint.name] = (np.array([0.0]), fit.limb_pose.rotations[j][None, :].copy())
    return AnimationClip(duration=duration, loop=loop, tracks=tracks,
                         root_translation=(np.array([0.0]), np.zeros((1, 3))))
