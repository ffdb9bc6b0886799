"""Generate the viewer's test fixtures with the primary toolkit.

Produces a small bound avatar plus the exact per-splat positions the
`splatavatar pose` command emits, so the TypeScript runtime can be tested
for parity against the reference implementation.

Run from this directory (or anywhere) with the splatavatar package
installed:  python scripts/make_fixtures.py
"""

import csv
import json
from pathlib import Path

import numpy as np

import splatavatar as sa
from splatavatar.cli import main as cli_main
from splatavatar.fit import FitResult
from splatavatar.synthetic import sample_cloud_from_rig
from splatavatar.transforms import quat_from_axis_angle

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CAM_POS = [1.4, 1.3, 2.2]
CAM_TARGET = [0.1, 0.55, -0.05]
T_ANIMATED = 0.3


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rig = sa.build_template_humanoid(1.0)
    sa.save_rig(rig, OUT / "rig.json")
    sa.save_rig(sa.build_template_humanoid(1.2), OUT / "mismatch_rig.json")

    limb = sa.abduction_pose(rig, left_shoulder_deg=58, right_shoulder_deg=52,
                             left_hip_deg=9, right_hip_deg=4)
    fit = FitResult(yaw=0.35, translation=np.array([0.1, 0.0, -0.05]),
                    uniform_scale=1.05, limb_pose=limb, objective=0.0,
                    limb_angles_deg={"left_shoulder": 58, "right_shoulder": 52,
                                     "left_hip": 9, "right_hip": 4})
    cloud = sample_cloud_from_rig(rig, 800, seed=77, yaw=0.35, scale=1.05,
                                  translation=(0.1, 0.0, -0.05),
                                  left_shoulder_deg=58, right_shoulder_deg=52,
                                  left_hip_deg=9, right_hip_deg=4)
    bindings = sa.compute_bindings(cloud, rig, fit)
    groups = sa.assign_groups(bindings, rig)
    bundle = sa.build_bundle(bindings, groups, fit, cloud, rig)
    sa.save_bundle(bundle, OUT / "avatar.bundle")

    sa.save_clip(sa.make_fit_pose_clip(fit, rig), OUT / "fit.anim.json")

    # a clip that actually moves: swing the left arm up over one second
    j = "left_upper_arm"
    q0 = limb.rotations[rig.joint_index[j]]
    q1 = sa.abduction_pose(rig, left_shoulder_deg=80).rotations[rig.joint_index[j]]
    wave = sa.AnimationClip(
        duration=1.0, loop=True,
        tracks={j: (np.array([0.0, 1.0]), np.stack([q0, q1])),
                **{joint.name: (np.array([0.0]), limb.rotations[k][None, :])
                   for k, joint in enumerate(rig.joints)
                   if joint.name != j and joint.parent is not None}},
        root_translation=(np.array([0.0]), np.zeros((1, 3))),
    )
    sa.save_clip(wave, OUT / "wave.anim.json")

    expected = {"camera": {"position": CAM_POS, "target": CAM_TARGET},
                "t_animated": T_ANIMATED}
    for name, clip_file, t, mode in (
        ("pose_t0_group", "fit.anim.json", 0.0, "group"),
        ("pose_t0_full", "fit.anim.json", 0.0, "full"),
        ("pose_wave_group", "wave.anim.json", T_ANIMATED, "group"),
    ):
        ply = OUT / f"{name}.ply"
        assert cli_main([
            "pose", str(OUT / "avatar.bundle"), str(OUT / "rig.json"),
            str(OUT / clip_file), "--t", str(t), "--mode", mode,
            "--cam-pos", *map(str, CAM_POS), "--cam-target", *map(str, CAM_TARGET),
            "--out", str(ply),
        ]) == 0
        dumped = sa.parse_splat_ply(ply.read_bytes())
        with open(str(ply) + ".order.csv") as f:
            order = [int(row["splat_index"]) for row in csv.DictReader(f)]
        expected[name] = {
            "order": order,
            "positions": [float(v) for v in np.asarray(dumped.positions).reshape(-1)],
            "rotations": [float(v) for v in np.asarray(dumped.rotations).reshape(-1)],
        }
        ply.unlink()
        Path(str(ply) + ".order.csv").unlink()

    (OUT / "expected.json").write_text(json.dumps(expected))
    print(f"fixtures written to {OUT}")
    print(f"bundle: {bundle.splat_count} splats, {bundle.group_count} groups")


if __name__ == "__main__":
    main()
