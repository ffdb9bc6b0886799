"""splatavatar: turn a static Gaussian-splat scan of a person into an
animatable skinned avatar.

Pipeline: parse the scan (`splat_io`), isolate and normalize the subject
(`isolation`), fit the humanoid template (`fit`), bind each splat to its
nearest skinned vertex (`binding`), and play it back with group-level
depth sorting (`runtime`). `cli` drives the whole thing end to end.
"""

from .binding import (
    AvatarBundle,
    BindingSet,
    GroupTable,
    SpatialIndex,
    assign_groups,
    build_bundle,
    build_vertex_index,
    compute_bindings,
    export_bundle,
    import_bundle,
    load_bundle,
    save_bundle,
)
from .fit import (
    FitResult,
    chamfer_distance,
    estimate_front_axis,
    fit_limb_angles,
    fit_similarity,
    fit_template,
    make_fit_pose_clip,
)
from .isolation import (
    FilterParams,
    FilterReport,
    NormalizationTransform,
    estimate_ground_height,
    filter_subject,
    normalize_cloud,
)
from .rig import (
    AnimationClip,
    Joint,
    Pose,
    SkinnedRig,
    abduction_pose,
    blend_vertex_matrix,
    blend_vertex_matrices,
    build_template_humanoid,
    clip_from_json,
    clip_to_json,
    compute_skin_matrices,
    load_clip,
    load_rig,
    rig_from_json,
    rig_to_json,
    sample_animation,
    save_clip,
    save_rig,
    skin_vertices,
)
from .runtime import (
    CameraState,
    DivergenceReport,
    FramePacket,
    full_sort,
    group_sort,
    order_divergence,
    run_frame,
    update_splats,
)
from .splat_io import (
    CloudStats,
    SplatCloud,
    cloud_stats,
    decode_appearance,
    encode_appearance,
    parse_splat_ply,
    write_splat_ply,
)
from .transforms import extract_rotation

__version__ = "0.1.0"
