"""Quaternion / matrix helpers shared across the toolkit.

Conventions: quaternions are (x, y, z, w), unit norm, canonicalized to
w >= 0; matrices act on column vectors; right-handed, +Y up. All
functions accept either a single element or a leading batch dimension.
"""

from __future__ import annotations

import numpy as np

from .errors import OrientationError

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q):
    """Normalize to unit length. Zero-norm input raises ValueError."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_canonical(q):
    """Flip sign so w >= 0 (q and -q encode the same rotation)."""
    q = np.asarray(q, dtype=np.float64)
    flip = q[..., 3:4] < 0.0
    return np.where(flip, -q, q)


def quat_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., :3] *= -1.0
    return out


def quat_multiply(a, b):
    """Hamilton product a*b, both (..., 4) in xyzw order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x1, y1, z1, w1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    x2, y2, z2, w2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        ],
        axis=-1,
    )


def quat_rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u = q[..., :3]
    w = q[..., 3:4]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis, angle):
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([axis * np.sin(half), [np.cos(half)]])


def quat_to_mat3(q):
    """Rotation matrix (..., 3, 3) from unit quaternion (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def mat3_to_quat(m):
    """Unit quaternion (canonical w >= 0) from rotation matrix (..., 3, 3).

    Shepperd's method: pick the largest of (w, x, y, z) as pivot so the
    division is always well conditioned.
    """
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    m = m.reshape((-1, 3, 3))
    q = np.empty((m.shape[0], 4), dtype=np.float64)

    tr = np.trace(m, axis1=-2, axis2=-1)
    c0 = tr
    c1 = m[:, 0, 0] - m[:, 1, 1] - m[:, 2, 2]
    c2 = m[:, 1, 1] - m[:, 0, 0] - m[:, 2, 2]
    c3 = m[:, 2, 2] - m[:, 0, 0] - m[:, 1, 1]
    choice = np.argmax(np.stack([c0, c1, c2, c3], axis=-1), axis=-1)

    for k in range(4):
        idx = np.nonzero(choice == k)[0]
        if idx.size == 0:
            continue
        sub = m[idx]
        if k == 0:
            s = np.sqrt(tr[idx] + 1.0) * 2.0
            q[idx, 3] = 0.25 * s
            q[idx, 0] = (sub[:, 2, 1] - sub[:, 1, 2]) / s
            q[idx, 1] = (sub[:, 0, 2] - sub[:, 2, 0]) / s
            q[idx, 2] = (sub[:, 1, 0] - sub[:, 0, 1]) / s
        elif k == 1:
            s = np.sqrt(1.0 + c1[idx]) * 2.0
            q[idx, 3] = (sub[:, 2, 1] - sub[:, 1, 2]) / s
            q[idx, 0] = 0.25 * s
            q[idx, 1] = (sub[:, 0, 1] + sub[:, 1, 0]) / s
            q[idx, 2] = (sub[:, 0, 2] + sub[:, 2, 0]) / s
        elif k == 2:
            s = np.sqrt(1.0 + c2[idx]) * 2.0
            q[idx, 3] = (sub[:, 0, 2] - sub[:, 2, 0]) / s
            q[idx, 0] = (sub[:, 0, 1] + sub[:, 1, 0]) / s
            q[idx, 1] = 0.25 * s
            q[idx, 2] = (sub[:, 1, 2] + sub[:, 2, 1]) / s
        else:
            s = np.sqrt(1.0 + c3[idx]) * 2.0
            q[idx, 3] = (sub[:, 1, 0] - sub[:, 0, 1]) / s
            q[idx, 0] = (sub[:, 0, 2] + sub[:, 2, 0]) / s
            q[idx, 1] = (sub[:, 1, 2] + sub[:, 2, 1]) / s
            q[idx, 2] = 0.25 * s

    q = quat_canonical(quat_normalize(q))
    return q.reshape(batch + (4,))


def quat_slerp(q0, q1, u):
    """Spherical linear interpolation along the shortest arc, u in [0, 1]."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-10:
        # nearly parallel: lerp then renormalize
        return quat_normalize(q0 + u * (q1 - q0))
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    return quat_normalize(
        (np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1
    )


def quat_distance(a, b):
    """min(|a-b|, |a+b|); zero iff the rotations are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d0 = np.linalg.norm(a - b, axis=-1)
    d1 = np.linalg.norm(a + b, axis=-1)
    return np.minimum(d0, d1)


# --- rigid / similarity 4x4 helpers ---------------------------------------

def mat4_identity(n=None):
    if n is None:
        return np.eye(4)
    return np.broadcast_to(np.eye(4), (n, 4, 4)).copy()


def mat4_from_trs(translation=None, rotation=None, scale=1.0):
    """4x4 = T * R * S with uniform scale."""
    m = np.eye(4)
    if rotation is not None:
        m[:3, :3] = quat_to_mat3(rotation)
    m[:3, :3] *= float(scale)
    if translation is not None:
        m[:3, 3] = np.asarray(translation, dtype=np.float64)
    return m


def transform_points(mat4, points):
    """Apply a 4x4 (or batch thereof) to (..., 3) points."""
    points = np.asarray(points, dtype=np.float64)
    return points @ np.swapaxes(mat4[..., :3, :3], -1, -2) + mat4[..., :3, 3]


# --- rotation extraction (polar decomposition) -----------------------------

POLAR_MAX_ITERS = 30
POLAR_TOL = 1e-9


def polar_rotation_matrix(linear):
    """Nearest rotation (Frobenius) to the linear parts (..., 3, 3).

    Newton iteration X <- (X + X^-T)/2, which converges to the orthogonal
    polar factor. Raises OrientationError for singular or reflective input.
    """
    m = np.asarray(linear, dtype=np.float64)
    batch = m.shape[:-2]
    x = m.reshape((-1, 3, 3)).copy()

    det = np.linalg.det(x)
    if np.any(np.abs(det) < 1e-8):
        bad = np.nonzero(np.abs(det) < 1e-8)[0]
        raise OrientationError(f"singular linear part at batch indices {bad.tolist()}")

    for _ in range(POLAR_MAX_ITERS):
        inv_t = np.swapaxes(np.linalg.inv(x), -1, -2)
        nxt = 0.5 * (x + inv_t)
        delta = np.max(np.abs(nxt - x))
        x = nxt
        if delta <= POLAR_TOL:
            break

    det = np.linalg.det(x)
    if np.any(det < 0.0):
        bad = np.nonzero(det < 0.0)[0]
        raise OrientationError(f"reflective linear part at batch indices {bad.tolist()}")
    return x.reshape(batch + (3, 3))


def extract_rotation(linear):
    """Polar rotation factor of (..., 3, 3) as canonical unit quaternions."""
    return mat3_to_quat(polar_rotation_matrix(linear))


# --- deterministic 1-D minimization ----------------------------------------

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0  # 0.618...


def golden_section(f, lo, hi, iters=20):
    """Golden-section search for a minimum of f on [lo, hi].

    Fixed iteration count keeps the cost and the result deterministic.
    Returns (x_best, f_best) over all evaluated points (bracket endpoints
    included).
    """
    lo = float(lo)
    hi = float(hi)
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = f(c)
    fd = f(d)
    evals = [(c, fc), (d, fd)]
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            evals.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            evals.append((d, fd))
    x_best, f_best = min(evals, key=lambda xf: (xf[1], xf[0]))
    return x_best, f_best
