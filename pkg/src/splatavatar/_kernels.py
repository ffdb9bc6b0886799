"""Hot per-splat loops, JIT-compiled when numba is available.

The numpy fallbacks compute the same arithmetic in the same order, so
either backend is internally deterministic; bit equality is only
guaranteed within one backend, never across the two.
"""

from __future__ import annotations

import warnings

import numpy as np

try:
    import numba
    from numba import njit, prange

    # this box's TBB is too old; numba falls back to another layer, which
    # is fine and not worth a warning on every CLI run
    warnings.filterwarnings(
        "ignore", message=".*TBB.*", category=numba.NumbaWarning
    )

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return deco

    prange = range


@njit(parallel=True, cache=True)
def _transform_splats_numba(vidx, rel_pos, rel_rot, lin, trans, vquat, out_pos, out_rot):
    for i in prange(vidx.shape[0]):
        v = vidx[i]
        r0 = rel_pos[i, 0]
        r1 = rel_pos[i, 1]
        r2 = rel_pos[i, 2]
        out_pos[i, 0] = lin[v, 0, 0] * r0 + lin[v, 0, 1] * r1 + lin[v, 0, 2] * r2 + trans[v, 0]
        out_pos[i, 1] = lin[v, 1, 0] * r0 + lin[v, 1, 1] * r1 + lin[v, 1, 2] * r2 + trans[v, 1]
        out_pos[i, 2] = lin[v, 2, 0] * r0 + lin[v, 2, 1] * r1 + lin[v, 2, 2] * r2 + trans[v, 2]
        x1 = vquat[v, 0]
        y1 = vquat[v, 1]
        z1 = vquat[v, 2]
        w1 = vquat[v, 3]
        x2 = rel_rot[i, 0]
        y2 = rel_rot[i, 1]
        z2 = rel_rot[i, 2]
        w2 = rel_rot[i, 3]
        out_rot[i, 0] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
        out_rot[i, 1] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
        out_rot[i, 2] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
        out_rot[i, 3] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2


def _transform_splats_numpy(vidx, rel_pos, rel_rot, lin, trans, vquat, out_pos, out_rot):
    lg = lin[vidx]
    tg = trans[vidx]
    qg = vquat[vidx]
    r0, r1, r2 = rel_pos[:, 0], rel_pos[:, 1], rel_pos[:, 2]
    out_pos[:, 0] = lg[:, 0, 0] * r0 + lg[:, 0, 1] * r1 + lg[:, 0, 2] * r2 + tg[:, 0]
    out_pos[:, 1] = lg[:, 1, 0] * r0 + lg[:, 1, 1] * r1 + lg[:, 1, 2] * r2 + tg[:, 1]
    out_pos[:, 2] = lg[:, 2, 0] * r0 + lg[:, 2, 1] * r1 + lg[:, 2, 2] * r2 + tg[:, 2]
    x1, y1, z1, w1 = qg[:, 0], qg[:, 1], qg[:, 2], qg[:, 3]
    x2, y2, z2, w2 = rel_rot[:, 0], rel_rot[:, 1], rel_rot[:, 2], rel_rot[:, 3]
    out_rot[:, 0] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    out_rot[:, 1] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    out_rot[:, 2] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    out_rot[:, 3] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2


def transform_splats(vidx, rel_pos, rel_rot, lin, trans, vquat, workers=None):
    """Map every splat through its bound vertex frame.

    positions[i] = lin[v]@rel_pos[i] + trans[v]; rotations[i] = vquat[v]*rel_rot[i].
    Per-splat writes go to disjoint slots, so the result is bit-identical
    for any worker count.
    """
    n = vidx.shape[0]
    out_pos = np.empty((n, 3), dtype=np.float32)
    out_rot = np.empty((n, 4), dtype=np.float32)
    args = (
        np.ascontiguousarray(vidx, dtype=np.int64),
        np.ascontiguousarray(rel_pos, dtype=np.float32),
        np.ascontiguousarray(rel_rot, dtype=np.float32),
        np.ascontiguousarray(lin, dtype=np.float32),
        np.ascontiguousarray(trans, dtype=np.float32),
        np.ascontiguousarray(vquat, dtype=np.float32),
        out_pos,
        out_rot,
    )
    if HAVE_NUMBA:
        if workers is not None:
            # requests beyond the machine cap are clamped, never an error
            capped = min(max(1, int(workers)), numba.config.NUMBA_NUM_THREADS)
            prev = numba.get_num_threads()
            numba.set_num_threads(capped)
            try:
                _transform_splats_numba(*args)
            finally:
                numba.set_num_threads(prev)
        else:
            _transform_splats_numba(*args)
    else:
        _transform_splats_numpy(*args)
    return out_pos, out_rot


@njit(cache=True)
def _count_inversions_numba(seq):
    n = seq.shape[0]
    arr = seq.copy()
    buf = np.empty(n, dtype=arr.dtype)
    total = 0
    width = 1
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if arr[i] <= arr[j]:
                    buf[k] = arr[i]
                    i += 1
                else:
                    buf[k] = arr[j]
                    j += 1
                    total += mid - i
                k += 1
            while i < mid:
                buf[k] = arr[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = arr[j]
                j += 1
                k += 1
            for t in range(lo, hi):
                arr[t] = buf[t]
            lo += 2 * width
        width *= 2
    return total


def _count_inversions_python(seq):
    n = len(seq)
    arr = list(seq)
    total = 0
    width = 1
    while width < n:
        out = []
        for lo in range(0, n, 2 * width):
            left = arr[lo : lo + width]
            right = arr[lo + width : lo + 2 * width]
            i = j = 0
            while i < len(left) and j < len(right):
                if left[i] <= right[j]:
                    out.append(left[i])
                    i += 1
                else:
                    out.append(right[j])
                    j += 1
                    total += len(left) - i
            out.extend(left[i:])
            out.extend(right[j:])
        arr = out
        width *= 2
    return total


def count_inversions(seq):
    """Number of pairs (i < j) with seq[i] > seq[j], by merge counting."""
    seq = np.ascontiguousarray(seq, dtype=np.int64)
    if seq.shape[0] < 2:
        return 0
    if HAVE_NUMBA:
        return int(_count_inversions_numba(seq))
    return _count_inversions_python(seq)
