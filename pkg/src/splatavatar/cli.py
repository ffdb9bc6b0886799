"""Command-line pipeline driver.

    splatavatar info  scan.ply
    splatavatar bind  scan.ply rig.json out.bundle [flags]
    splatavatar pose  avatar.bundle rig.json anim.json --t 0.5 --out frame.ply
    splatavatar bench avatar.bundle rig.json anim.json --frames 60 --mode all

Exit codes (stable, scripts may rely on them):

    0  success
    2  missing input file / bad usage detected by argparse
    3  malformed input file (PLY/bundle/rig/animation parse errors)
    4  invalid argument value (e.g. t < 0)
    10 subject isolation failed
    11 template fit failed (ambiguous orientation, objective too high)
    12 binding failed (singular frames, rig hash mismatch)
    1  anything unexpected

Output files are written to a temp file and atomically renamed, so a
failed run never leaves a partial bundle/PLY behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import binding, fit as fit_mod, isolation, rig as rig_mod, runtime, splat_io
from .errors import (
    AmbiguousOrientationError,
    AnimationError,
    BindingError,
    BundleFormatError,
    DecodeError,
    EstimationError,
    FitFailureError,
    IsolationError,
    NormalizationError,
    PlyFormatError,
    PlyLengthError,
    PlySchemaError,
    RigError,
    RigMismatchError,
    SplatAvatarError,
)

THREADS_ENV = "SPLATAVATAR_THREADS"

EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALUE = 4
EXIT_FILTER = 10
EXIT_FIT = 11
EXIT_BIND = 12

_PARSE_ERRORS = (PlyFormatError, PlySchemaError, PlyLengthError, DecodeError,
                 BundleFormatError, RigError, AnimationError)
_FILTER_ERRORS = (IsolationError, EstimationError, NormalizationError)
_FIT_ERRORS = (AmbiguousOrientationError, FitFailureError)
_BIND_ERRORS = (BindingError, RigMismatchError)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def atomic_write(path, data: bytes):
    """Write to a sibling temp file, then rename over the target."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return None


def cmd_info(args) -> int:
    cloud = splat_io.parse_splat_ply(_read_bytes(args.input))
    stats = splat_io.cloud_stats(cloud)
    print(f"splats:            {stats.count}")
    print(f"sh_degree:         {cloud.sh_degree}")
    print(f"aabb_min:          {stats.aabb_min[0]:.4f} {stats.aabb_min[1]:.4f} {stats.aabb_min[2]:.4f}")
    print(f"aabb_max:          {stats.aabb_max[0]:.4f} {stats.aabb_max[1]:.4f} {stats.aabb_max[2]:.4f}")
    print(f"centroid:          {stats.centroid[0]:.4f} {stats.centroid[1]:.4f} {stats.centroid[2]:.4f}")
    c = stats.opacity_weighted_centroid
    print(f"weighted centroid: {c[0]:.4f} {c[1]:.4f} {c[2]:.4f}")
    print(f"properties:        {' '.join(cloud.field_names)}")
    return 0


def cmd_bind(args) -> int:
    timings = {}
    t0 = time.perf_counter()
    cloud = splat_io.parse_splat_ply(_read_bytes(args.input))
    rig = rig_mod.load_rig(args.rig)
    timings["load"] = time.perf_counter() - t0

    if args.filter_config:
        params = isolation.FilterParams.from_file(args.filter_config)
    else:
        params = isolation.FilterParams()
    overrides = {
        "cylinder_radius": args.cylinder_radius,
        "opacity_min": args.opacity_min,
        "floor_epsilon": args.floor_epsilon,
        "head_margin": args.head_margin,
    }
    params = isolation.FilterParams(**{
        key: value if value is not None else getattr(params, key)
        for key, value in overrides.items()
    })
    t0 = time.perf_counter()
    subject, report = isolation.filter_subject(cloud, params)
    normalized, transform = isolation.normalize_cloud(subject, args.target_height)
    timings["isolate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if args.manual_yaw is not None:
        yaw_init = float(np.deg2rad(args.manual_yaw))
    else:
        yaw_init = fit_mod.estimate_front_axis(normalized)
    fit = fit_mod.fit_template(normalized, rig, yaw_init,
                               fit_limbs=not args.skip_limb_fit,
                               yaw_locked=args.manual_yaw is not None)
    timings["fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    bindings = binding.compute_bindings(normalized, rig, fit)
    groups = binding.assign_groups(bindings, rig)
    bundle = binding.build_bundle(bindings, groups, fit, normalized, rig)
    data = binding.export_bundle(bundle)
    timings["bind"] = time.perf_counter() - t0

    atomic_write(args.out, data)

    report_doc = {
        "input": {"path": str(args.input), "splats": cloud.count},
        "filter": report.to_dict(),
        "normalization": transform.to_dict(),
        "fit": fit.to_dict(),
        "binding": {
            "splat_count": bundle.splat_count,
            "group_count": bundle.group_count,
            "mean_vertex_distance_m": float(np.mean(bindings.distances)),
            "max_vertex_distance_m": float(np.max(bindings.distances)),
        },
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
    }
    report_path = args.report or (str(args.out) + ".report.json")
    atomic_write(report_path, json.dumps(report_doc, indent=2).encode())
    print(f"wrote {args.out} ({bundle.splat_count} splats, {bundle.group_count} groups)")
    print(f"report: {report_path}")
    return 0


def _camera_from_args(args) -> runtime.CameraState:
    position = np.array(args.cam_pos, dtype=np.float64)
    if args.cam_forward is not None:
        fwd = np.array(args.cam_forward, dtype=np.float64)
        return runtime.CameraState(position, fwd / np.linalg.norm(fwd))
    return runtime.CameraState.looking_at(position, np.array(args.cam_target, dtype=np.float64))


def cmd_pose(args) -> int:
    if args.t < 0:
        return _fail(EXIT_VALUE, f"t must be >= 0, got {args.t}")
    bundle = binding.import_bundle(_read_bytes(args.bundle))
    rig = rig_mod.load_rig(args.rig)
    clip = rig_mod.load_clip(args.anim)
    camera = _camera_from_args(args)

    packet = runtime.run_frame(bundle, rig, clip, args.t, camera, mode=args.mode,
                               workers=args.threads)

    ordered = packet.order
    cloud = splat_io.SplatCloud.from_arrays(
        positions=packet.positions[ordered].astype(np.float64),
        rotations=packet.rotations[ordered].astype(np.float64),
        scales=bundle.scales[ordered].astype(np.float64) * bundle.fit_scale,
        opacities=bundle.opacities[ordered].astype(np.float64),
        colors=bundle.colors[ordered].astype(np.float64),
    )
    atomic_write(args.out, splat_io.write_splat_ply(cloud))

    d = runtime.depths(packet.positions, camera)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["draw_position", "splat_index", "depth"])
    for k, idx in enumerate(ordered):
        writer.writerow([k, int(idx), f"{d[idx]:.6f}"])
    order_path = args.order_out or (str(args.out) + ".order.csv")
    atomic_write(order_path, buf.getvalue().encode())
    print(f"wrote {args.out} and {order_path} (mode={args.mode}, t={args.t})")
    return 0


def cmd_bench(args) -> int:
    bundle = binding.import_bundle(_read_bytes(args.bundle))
    rig = rig_mod.load_rig(args.rig)
    clip = rig_mod.load_clip(args.anim)
    from .synthetic import orbit_cameras

    cameras = orbit_cameras(args.frames)
    modes = ("group", "full") if args.mode == "all" else (args.mode,)
    n = bundle.splat_count
    g = bundle.group_count
    duration = clip.duration if clip.duration > 0 else 1.0
    base = bundle.fit_pose(rig)

    compute_divergence = args.divergence == "on" or (args.divergence == "auto" and n <= 150_000)

    rows = []
    for mode in modes:
        for k in range(args.frames):
            t = duration * k / max(1, args.frames)
            pose = rig_mod.sample_animation(clip, rig, t, base_pose=base)
            t0 = time.perf_counter()
            positions, rotations = runtime.update_splats(bundle, rig, pose, workers=args.threads)
            ms_update = (time.perf_counter() - t0) * 1e3
            cam = cameras[k]
            t0 = time.perf_counter()
            if mode == "group":
                order = runtime.group_sort(positions, bundle, cam)
            else:
                order = runtime.full_sort(positions, cam)
            ms_sort = (time.perf_counter() - t0) * 1e3
            if mode == "group" and compute_divergence:
                reference = runtime.full_sort(positions, cam)
                div = runtime.order_divergence(reference, order, runtime.depths(positions, cam))
                inversion = div.inversion_fraction
            elif mode == "full":
                inversion = 0.0
            else:
                inversion = float("nan")
            rows.append((n, g, mode, ms_update, ms_sort, inversion))

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["N", "G", "mode", "ms_update", "ms_sort", "inversion_fraction"])
    for row in rows:
        writer.writerow([row[0], row[1], row[2], f"{row[3]:.3f}", f"{row[4]:.3f}",
                         "" if np.isnan(row[5]) else f"{row[5]:.6f}"])
    for mode in modes:
        sel = [r for r in rows if r[2] == mode]
        med_u = float(np.median([r[3] for r in sel]))
        med_s = float(np.median([r[4] for r in sel]))
        writer.writerow([n, g, f"{mode}-median", f"{med_u:.3f}", f"{med_s:.3f}", ""])
        print(f"{mode}: median update {med_u:.3f} ms, median sort {med_s:.3f} ms")

    if args.out:
        atomic_write(args.out, buf.getvalue().encode())
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatavatar",
                                     description="Animatable avatars from Gaussian-splat scans")
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads (default: ${THREADS_ENV} or backend default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="print splat cloud statistics")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("bind", help="scan -> avatar bundle (filter, normalize, fit, bind)")
    p.add_argument("input", type=Path)
    p.add_argument("rig", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--target-height", type=float, default=1.0)
    p.add_argument("--manual-yaw", type=float, default=None,
                   help="subject facing direction in degrees; skips estimation")
    p.add_argument("--skip-limb-fit", action="store_true")
    p.add_argument("--cylinder-radius", type=float, default=None)
    p.add_argument("--opacity-min", type=float, default=None)
    p.add_argument("--floor-epsilon", type=float, default=None)
    p.add_argument("--head-margin", type=float, default=None)
    p.add_argument("--filter-config", type=Path, default=None,
                   help="flat key=value file with filter parameters")
    p.add_argument("--report", type=Path, default=None)
    p.set_defaults(func=cmd_bind)

    p = sub.add_parser("pose", help="evaluate one frame and dump a draw-ordered PLY")
    p.add_argument("bundle", type=Path)
    p.add_argument("rig", type=Path)
    p.add_argument("anim", type=Path)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--mode", choices=("group", "full"), default="group")
    p.add_argument("--cam-pos", type=float, nargs=3, default=(0.0, 1.0, 3.0))
    p.add_argument("--cam-forward", type=float, nargs=3, default=None)
    p.add_argument("--cam-target", type=float, nargs=3, default=(0.0, 0.9, 0.0))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--order-out", type=Path, default=None)
    p.set_defaults(func=cmd_pose)

    p = sub.add_parser("bench", help="frame-loop benchmark, CSV output")
    p.add_argument("bundle", type=Path)
    p.add_argument("rig", type=Path)
    p.add_argument("anim", type=Path)
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--mode", choices=("group", "full", "all"), default="all")
    p.add_argument("--divergence", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        return _fail(EXIT_USAGE, f"no such file: {e.filename}")
    except _PARSE_ERRORS as e:
        return _fail(EXIT_PARSE, str(e))
    except ValueError as e:
        return _fail(EXIT_VALUE, str(e))
    except _FILTER_ERRORS as e:
        return _fail(EXIT_FILTER, str(e))
    except _FIT_ERRORS as e:
        if isinstance(e, AmbiguousOrientationError):
            return _fail(EXIT_FIT, f"{e} (hint: rerun with --manual-yaw <degrees>)")
        return _fail(EXIT_FIT, str(e))
    except _BIND_ERRORS as e:
        return _fail(EXIT_BIND, str(e))
    except SplatAvatarError as e:
        return _fail(1, str(e))


if __name__ == "__main__":
    sys.exit(main())
