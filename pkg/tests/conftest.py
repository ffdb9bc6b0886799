import numpy as np
import pytest

import splatavatar as sa
from splatavatar.fit import FitResult
from splatavatar.synthetic import sample_cloud_from_rig


@pytest.fixture(scope="session")
def template():
    return sa.build_template_humanoid(1.0)


@pytest.fixture(scope="session")
def template_tall():
    return sa.build_template_humanoid(1.7)


@pytest.fixture(scope="session")
def identity_fit(template):
    return FitResult(
        yaw=0.0,
        translation=np.zeros(3),
        uniform_scale=1.0,
        limb_pose=sa.Pose.bind(template),
        objective=0.0,
    )


@pytest.fixture(scope="session")
def bound_avatar(template, identity_fit):
    """Synthetic subject sampled from the template, bound into a bundle."""
    cloud = sample_cloud_from_rig(template, 12000, seed=11)
    bindings = sa.compute_bindings(cloud, template, identity_fit)
    groups = sa.assign_groups(bindings, template)
    bundle = sa.build_bundle(bindings, groups, identity_fit, cloud, template)
    return cloud, bindings, groups, bundle


def brute_force_nn(queries, points):
    """O(N*M) nearest neighbor; ties resolve to the smallest index."""
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    idx = np.empty(queries.shape[0], dtype=np.int64)
    dist = np.empty(queries.shape[0])
    for i, q in enumerate(queries):
        d2 = ((points - q) ** 2).sum(axis=1)
        idx[i] = int(np.argmin(d2))  # argmin returns the first == smallest index
        dist[i] = np.sqrt(d2[idx[i]])
    return idx, dist
