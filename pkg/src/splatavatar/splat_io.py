"""Gaussian-splat point clouds in the standard 3DGS binary PLY layout.

The de-facto export schema is one `vertex` element whose float32
properties hold, in storage domain:

    x, y, z                   position (meters)
    f_dc_0..2                 SH degree-0 color, color = 0.5 + C0 * f_dc
    f_rest_*                  optional higher-order SH bands (carried opaquely)
    opacity                   logit; opacity = logistic(raw)
    scale_0..2                log standard deviations; scale = exp(raw)
    rot_0..3                  quaternion stored (w, x, y, z), not normalized

`SplatCloud` keeps the raw storage rows verbatim (`payload`) alongside the
decoded arrays. The raw rows are the source of truth for writing, which is
what makes write -> parse round trips bit-exact: float32 exp/log pairs do
not invert exactly, raw bytes do.

Only binary-little-endian PLY is supported; every real 3DGS exporter
emits it. `nx, ny, nz` are tolerated and carried through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DecodeError, PlyFormatError, PlyLengthError, PlySchemaError

SH_C0 = 0.28209479177387814

REQUIRED_PROPERTIES = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

# f_rest_* column count per spherical-harmonic degree: 3 * ((d+1)^2 - 1)
_SH_REST_COUNTS = {0: 0, 9: 1, 24: 2, 45: 3}

_FLOAT_TYPES = {"float", "float32"}


def decode_appearance(raw_opacity, raw_scale, raw_dc):
    """Storage-domain to usable values: (opacity, scale, color).

    opacity = logistic(raw); scale = exp(raw) per axis;
    color = clamp(0.5 + C0 * raw_dc, 0, 1).
    """
    raw_opacity = np.asarray(raw_opacity, dtype=np.float64)
    raw_scale = np.asarray(raw_scale, dtype=np.float64)
    raw_dc = np.asarray(raw_dc, dtype=np.float64)
    for name, arr in (("opacity", raw_opacity), ("scale", raw_scale), ("f_dc", raw_dc)):
        finite = np.isfinite(arr)
        if not finite.all():
            rows = np.atleast_2d(finite.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else finite.reshape(-1, 1))
            bad = np.nonzero(~rows.all(axis=1))[0]
            raise DecodeError(f"non-finite raw {name} at splat indices {bad[:8].tolist()}")
    opacity = 1.0 / (1.0 + np.exp(-raw_opacity))
    scale = np.exp(raw_scale)
    color = np.clip(0.5 + SH_C0 * raw_dc, 0.0, 1.0)
    return opacity, scale, color


def encode_appearance(opacity, scale, color):
    """Inverse of decode_appearance. Opacity is clamped away from {0, 1}
    so the logit stays finite."""
    opacity = np.clip(np.asarray(opacity, dtype=np.float64), 1e-7, 1.0 - 1e-7)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0.0):
        raise ValueError("scale components must be > 0")
    raw_opacity = np.log(opacity / (1.0 - opacity))
    raw_scale = np.log(scale)
    raw_dc = (np.asarray(color, dtype=np.float64) - 0.5) / SH_C0
    return raw_opacity, raw_scale, raw_dc


@dataclass(eq=False)
class SplatCloud:
    """Decoded splats plus their verbatim storage rows.

    All arrays are read-only; operations that change a cloud build a new
    one, so instances can be shared freely across threads.
    """

    payload: np.ndarray            # (N, P) float32 storage rows, file order
    field_names: list[str]         # P property names, file order
    positions: np.ndarray = field(init=False)   # (N, 3) float32
    rotations: np.ndarray = field(init=False)   # (N, 4) float32 xyzw, unit, w >= 0
    scales: np.ndarray = field(init=False)      # (N, 3) float32, linear stddev
    opacities: np.ndarray = field(init=False)   # (N,) float32 in [0, 1]
    colors: np.ndarray = field(init=False)      # (N, 3) float32 in [0, 1]
    sh_rest: np.ndarray = field(init=False)     # (N, K) float32, opaque
    sh_degree: int = field(init=False)

    def __post_init__(self):
        payload = np.ascontiguousarray(self.payload, dtype=np.float32)
        if payload.ndim != 2:
            raise ValueError("payload must be (N, P)")
        n = payload.shape[0]
        if n < 1:
            raise PlySchemaError("splat cloud must contain at least one splat")
        if payload.shape[1] != len(self.field_names):
            raise PlySchemaError("payload width does not match field names")

        cols = {name: i for i, name in enumerate(self.field_names)}
        for name in REQUIRED_PROPERTIES:
            if name not in cols:
                raise PlySchemaError(f"missing required property '{name}'")

        rest_cols = [cols[k] for k in self.field_names if k.startswith("f_rest_")]
        if len(rest_cols) not in _SH_REST_COUNTS:
            raise PlySchemaError(
                f"unsupported f_rest_* count {len(rest_cols)} "
                f"(expected one of {sorted(_SH_REST_COUNTS)})"
            )
        self.sh_degree = _SH_REST_COUNTS[len(rest_cols)]

        pos = payload[:, [cols["x"], cols["y"], cols["z"]]]
        if not np.all(np.isfinite(pos)):
            bad = np.nonzero(~np.isfinite(pos).all(axis=1))[0]
            raise DecodeError(f"non-finite position at splat indices {bad[:8].tolist()}")

        raw_rot = payload[:, [cols["rot_0"], cols["rot_1"], cols["rot_2"], cols["rot_3"]]]
        if not np.all(np.isfinite(raw_rot)):
            bad = np.nonzero(~np.isfinite(raw_rot).all(axis=1))[0]
            raise DecodeError(f"non-finite rotation at splat indices {bad[:8].tolist()}")
        # file order is (w, x, y, z); internal order is (x, y, z, w)
        quat = raw_rot[:, [1, 2, 3, 0]].astype(np.float64)
        norms = np.linalg.norm(quat, axis=1)
        if np.any(norms == 0.0):
            bad = np.nonzero(norms == 0.0)[0]
            raise DecodeError(f"zero-norm rotation at splat indices {bad[:8].tolist()}")
        quat /= norms[:, None]
        quat[quat[:, 3] < 0.0] *= -1.0

        raw_opacity = payload[:, cols["opacity"]]
        raw_scale = payload[:, [cols["scale_0"], cols["scale_1"], cols["scale_2"]]]
        raw_dc = payload[:, [cols["f_dc_0"], cols["f_dc_1"], cols["f_dc_2"]]]
        opacity, scale, color = decode_appearance(raw_opacity, raw_scale, raw_dc)

        self.payload = payload
        self.positions = np.ascontiguousarray(pos, dtype=np.float32)
        self.rotations = np.ascontiguousarray(quat, dtype=np.float32)
        self.scales = np.ascontiguousarray(scale, dtype=np.float32)
        self.opacities = np.ascontiguousarray(opacity, dtype=np.float32)
        self.colors = np.ascontiguousarray(color, dtype=np.float32)
        self.sh_rest = np.ascontiguousarray(payload[:, rest_cols], dtype=np.float32)
        for arr in (self.payload, self.positions, self.rotations, self.scales,
                    self.opacities, self.colors, self.sh_rest):
            arr.flags.writeable = False

    def __len__(self):
        return self.payload.shape[0]

    @property
    def count(self):
        return self.payload.shape[0]

    @classmethod
    def from_arrays(cls, positions, rotations, scales, opacities, colors, sh_rest=None):
        """Build a cloud from decoded-domain arrays.

        The arrays are encoded into canonical storage rows once; decoded
        fields are then re-derived from those rows, so the new cloud is a
        fixed point of parse(write(...)).
        """
        positions = np.asarray(positions, dtype=np.float64)
        n = positions.shape[0]
        if n < 1:
            raise PlySchemaError("splat cloud must contain at least one splat")
        rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        raw_opacity, raw_scale, raw_dc = encode_appearance(
            np.asarray(opacities, dtype=np.float64).reshape(n),
            np.asarray(scales, dtype=np.float64).reshape(n, 3),
            np.asarray(colors, dtype=np.float64).reshape(n, 3),
        )
        if sh_rest is None:
            sh_rest = np.zeros((n, 0), dtype=np.float32)
        sh_rest = np.asarray(sh_rest, dtype=np.float32).reshape(n, -1)
        if sh_rest.shape[1] not in _SH_REST_COUNTS:
            raise PlySchemaError(f"unsupported f_rest_* count {sh_rest.shape[1]}")

        names = canonical_field_names(sh_rest.shape[1])
        payload = np.empty((n, len(names)), dtype=np.float32)
        payload[:, 0:3] = positions
        payload[:, 3:6] = raw_dc
        k = sh_rest.shape[1]
        payload[:, 6 : 6 + k] = sh_rest
        payload[:, 6 + k] = raw_opacity
        payload[:, 7 + k : 10 + k] = raw_scale
        payload[:, 10 + k : 14 + k] = rotations[:, [3, 0, 1, 2]]  # store wxyz
        return cls(payload, names)

    def replaced(self, positions=None, scales=None):
        """New cloud with positions and/or linear scales swapped out.

        Rotations, appearance, and any extra carried columns are preserved
        byte-for-byte; changed columns are re-encoded.
        """
        payload = np.array(self.payload)  # writable copy
        cols = {name: i for i, name in enumerate(self.field_names)}
        if positions is not None:
            payload[:, [cols["x"], cols["y"], cols["z"]]] = np.asarray(positions, dtype=np.float32)
        if scales is not None:
            scales = np.asarray(scales, dtype=np.float64)
            if np.any(scales <= 0.0):
                raise ValueError("scale components must be > 0")
            payload[:, [cols["scale_0"], cols["scale_1"], cols["scale_2"]]] = np.log(scales).astype(np.float32)
        return SplatCloud(payload, list(self.field_names))

    def select(self, mask_or_indices):
        """New cloud keeping the given rows, original order preserved."""
        payload = self.payload[mask_or_indices]
        return SplatCloud(np.ascontiguousarray(payload), list(self.field_names))


def canonical_field_names(sh_rest_count=0):
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(sh_rest_count)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def _parse_header(data: bytes):
    end = data.find(b"end_header\n")
    if end < 0:
        raise PlyFormatError("missing 'end_header'")
    body_start = end + len(b"end_header\n")
    lines = data[:end].decode("ascii", errors="replace").split("\n")
    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError(f"not a PLY file: first line {lines[0]!r}" if lines else "empty header")

    fmt = None
    vertex_count = None
    names: list[str] = []
    in_vertex = False
    for line in lines[1:]:
        stripped = line.strip()
        if not stripped or stripped.startswith("comment") or stripped.startswith("obj_info"):
            continue
        parts = stripped.split()
        if parts[0] == "format":
            fmt = stripped
            if parts[1:3] != ["binary_little_endian", "1.0"]:
                raise PlyFormatError(f"unsupported format line: {stripped!r}")
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"malformed element line: {stripped!r}")
            try:
                count = int(parts[2])
            except ValueError:
                raise PlyFormatError(f"malformed element line: {stripped!r}") from None
            if parts[1] == "vertex":
                in_vertex = True
                vertex_count = count
            else:
                if count != 0:
                    raise PlyFormatError(f"unsupported element: {stripped!r}")
                in_vertex = False
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if len(parts) != 3 or parts[1] not in _FLOAT_TYPES:
                raise PlyFormatError(f"unsupported property line: {stripped!r}")
            names.append(parts[2])
        else:
            raise PlyFormatError(f"unrecognized header line: {stripped!r}")

    if fmt is None:
        raise PlyFormatError("missing 'format' line")
    if vertex_count is None:
        raise PlyFormatError("missing 'element vertex' line")
    if vertex_count < 1:
        raise PlyFormatError(f"element vertex count must be >= 1, got {vertex_count}")
    return vertex_count, names, body_start


def parse_splat_ply(data: bytes) -> SplatCloud:
    """Parse binary-little-endian 3DGS PLY bytes. Order-preserving."""
    vertex_count, names, body_start = _parse_header(data)
    expected = vertex_count * len(names) * 4
    actual = len(data) - body_start
    if actual != expected:
        raise PlyLengthError(expected, actual)
    payload = np.frombuffer(data, dtype="<f4", count=vertex_count * len(names), offset=body_start)
    payload = payload.reshape(vertex_count, len(names)).copy()
    return SplatCloud(payload, names)


def write_splat_ply(cloud: SplatCloud) -> bytes:
    """Serialize a cloud back to binary PLY. Deterministic bytes."""
    if cloud.count < 1:
        raise PlySchemaError("cannot write an empty cloud")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {cloud.count}"]
    header += [f"property float {name}" for name in cloud.field_names]
    header.append("end_header")
    blob = ("\n".join(header) + "\n").encode("ascii")
    return blob + np.ascontiguousarray(cloud.payload, dtype="<f4").tobytes()


@dataclass
class CloudStats:
    count: int
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    centroid: np.ndarray
    opacity_weighted_centroid: np.ndarray


def cloud_stats(cloud: SplatCloud) -> CloudStats:
    """Exact position aggregates; the weighted centroid uses decoded opacity."""
    pos = cloud.positions.astype(np.float64)
    w = cloud.opacities.astype(np.float64)
    return CloudStats(
        count=cloud.count,
        aabb_min=pos.min(axis=0),
        aabb_max=pos.max(axis=0),
        centroid=pos.mean(axis=0),
        opacity_weighted_centroid=(pos * w[:, None]).sum(axis=0) / w.sum(),
    )
