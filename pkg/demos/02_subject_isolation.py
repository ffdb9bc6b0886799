"""
Isolating the subject from a scan
=================================

A raw scan contains the person plus the floor, walls, and faint
reconstruction noise. Three rules (opacity, vertical band, horizontal
cylinder) carve out the subject; normalization then puts it at the
origin at a canonical height.
"""

import numpy as np

import splatavatar as sa
from splatavatar.synthetic import make_scan_scene

rig = sa.build_template_humanoid(1.72)
scene, labels = make_scan_scene(rig, n_subject=6000, n_floor=3000,
                                n_wall=2000, n_faint=300, seed=7)
print(f"scene: {scene.count} splats "
      f"({(labels == 'subject').sum()} subject, {(labels == 'floor').sum()} floor, "
      f"{(labels == 'wall').sum()} wall, {(labels == 'faint').sum()} faint)")

subject, report = sa.filter_subject(scene)
print("\nfilter report")
for rule, count in report.removed_by_rule.items():
    print(f"  removed by {rule:<10} {count}")
print(f"  kept            {report.kept_count}")
print(f"  ground height   {report.ground_height:.4f} m")
print(f"  cylinder radius {report.cylinder_radius:.3f} m around "
      f"({report.subject_axis[0]:.3f}, {report.subject_axis[1]:.3f})")

normalized, transform = sa.normalize_cloud(subject, target_height=1.0)
print(f"\nnormalization: scale x{transform.uniform_scale:.4f}, "
      f"translation {np.round(transform.translation, 4)}")

ys = normalized.positions[:, 1]
print(f"normalized subject spans y [{ys.min():.3f}, {ys.max():.3f}] m")

# filtering is idempotent: a clean subject passes all rules
again, report2 = sa.filter_subject(normalized)
print(f"refilter keeps {report2.kept_count}/{report2.input_count}")
