"""Synthetic scan generators.

Real phone scans are not reproducible test inputs, so tests,
demos and benchmarks sample splat clouds directly from the template
surface (optionally posed/transformed with known parameters) and dress
them with floors and walls. Everything is seeded and deterministic.
"""

from __future__ import annotations

import numpy as np

from .rig import SkinnedRig, abduction_pose, skin_vertices
from .splat_io import SplatCloud
from .transforms import quat_normalize


def _random_appearance(rng, n, opacity_range=(0.6, 0.98)):
    rotations = quat_normalize(rng.normal(size=(n, 4)))
    scales = np.exp(rng.uniform(np.log(0.004), np.log(0.02), size=(n, 3)))
    opacities = rng.uniform(*opacity_range, size=n)
    colors = rng.uniform(0.05, 0.95, size=(n, 3))
    return rotations, scales, opacities, colors


def sample_cloud_from_rig(
    rig: SkinnedRig,
    n: int,
    seed: int = 0,
    yaw: float = 0.0,
    scale: float = 1.0,
    translation=(0.0, 0.0, 0.0),
    noise: float = 0.001,
    left_shoulder_deg=None,
    right_shoulder_deg=None,
    left_hip_deg=None,
    right_hip_deg=None,
) -> SplatCloud:
    """Splat cloud sampled from the (optionally posed) template surface.

    Points are drawn from the skinned vertices with Gaussian jitter
    (`noise` meters, 1 mm default) and then pushed through the similarity
    yaw/scale/translation, mimicking a subject standing in a scan.
    """
    rng = np.random.default_rng(seed)
    kwargs = {}
    if left_shoulder_deg is not None:
        kwargs["left_shoulder_deg"] = left_shoulder_deg
    if right_shoulder_deg is not None:
        kwargs["right_shoulder_deg"] = right_shoulder_deg
    if left_hip_deg is not None:
        kwargs["left_hip_deg"] = left_hip_deg
    if right_hip_deg is not None:
        kwargs["right_hip_deg"] = right_hip_deg
    points = skin_vertices(rig, abduction_pose(rig, **kwargs))

    picks = rng.integers(0, points.shape[0], size=n)
    pos = points[picks] + rng.normal(scale=noise, size=(n, 3))

    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    pos = pos @ (scale * rot.T) + np.asarray(translation, dtype=np.float64)

    rotations, scales, opacities, colors = _random_appearance(rng, n)
    return SplatCloud.from_arrays(pos, rotations, scales * scale, opacities, colors)


def make_scan_scene(
    rig: SkinnedRig,
    n_subject: int = 5000,
    n_floor: int = 3000,
    n_wall: int = 2000,
    n_faint: int = 200,
    seed: int = 0,
    **subject_kwargs,
):
    """Subject + floor plane + far wall + faint noise, with membership labels.

    Returns (cloud, labels) where labels[i] is one of "subject", "floor",
    "wall", "faint". Splat order is subject, floor, wall, faint.
    """
    rng = np.random.default_rng(seed + 1)
    subject = sample_cloud_from_rig(rig, n_subject, seed=seed, **subject_kwargs)

    parts = [
        (
            subject.positions.astype(np.float64),
            subject.rotations,
            subject.scales,
            subject.opacities,
            subject.colors,
            "subject",
        )
    ]

    if n_floor:
        pos = np.stack(
            [
                rng.uniform(-3.0, 3.0, n_floor),
                rng.normal(scale=0.002, size=n_floor),
                rng.uniform(-3.0, 3.0, n_floor),
            ],
            axis=1,
        )
        rot, sc, op, col = _random_appearance(rng, n_floor)
        parts.append((pos, rot, sc, op, col, "floor"))
    if n_wall:
        pos = np.stack(
            [
                rng.uniform(-3.0, 3.0, n_wall),
                rng.uniform(0.0, 2.5, n_wall),
                rng.normal(loc=2.5, scale=0.01, size=n_wall),
            ],
            axis=1,
        )
        rot, sc, op, col = _random_appearance(rng, n_wall)
        parts.append((pos, rot, sc, op, col, "wall"))
    if n_faint:
        pos = rng.uniform(-2.0, 2.0, size=(n_faint, 3)) + [0.0, 1.0, 0.0]
        rot, sc, op, col = _random_appearance(rng, n_faint, opacity_range=(0.005, 0.04))
        parts.append((pos, rot, sc, op, col, "faint"))

    cloud = SplatCloud.from_arrays(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]),
        np.concatenate([p[4] for p in parts]),
    )
    labels = np.concatenate([np.full(p[0].shape[0], p[5]) for p in parts])
    return cloud, labels


def random_cloud(n: int, seed: int = 0, span: float = 1.0) -> SplatCloud:
    """Uniform random cloud with random appearance (format/oracle tests)."""
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-span, span, size=(n, 3))
    rotations, scales, opacities, colors = _random_appearance(rng, n)
    return SplatCloud.from_arrays(pos, rotations, scales, opacities, colors)


def orbit_cameras(count: int, radius: float = 2.5, height: float = 1.0, target=(0.0, 0.9, 0.0)):
    """Cameras on a circle looking at the subject; used by benchmarks."""
    from .runtime import CameraState

    cams = []
    for k in range(count):
        a = 2.0 * np.pi * k / count
        pos = np.array([radius * np.sin(a), height, radius * np.cos(a)])
        cams.append(CameraState.looking_at(pos, np.asarray(target, dtype=np.float64)))
    return cams
