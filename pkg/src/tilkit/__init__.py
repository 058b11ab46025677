"""Zero-shot temporal interaction localization for egocentric RGB-D video.

Finds the frame indices where a hand contacts and separates from an object
by combining 3D hand dynamics (depth back-projection, registration, speed
splines), velocity-weighted anchor sampling, and a three-role VLM loop
(discriminator, localizer, checker) with one closed-loop feedback round.
"""

from . import errors
from .dataset_io import (
    RunArtifacts,
    VideoRecord,
    dump_profile,
    find_manifests,
    load_manifest,
    plot_dynamics,
    read_result,
    write_result,
)
from .hand_motion import (
    CameraIntrinsics,
    DynamicsProfile,
    PoseSequence,
    WristTrack,
    back_project,
    default_sg_params,
    displacement_speeds,
    dynamics_profile,
    fit_velocity_spline,
    icp_register,
    identity_poses,
    lift_wrist_track,
    register_frames,
    smooth_speeds,
    speed_series,
    to_global,
    zero_acceleration_times,
)
from .metrics import (
    ContactSegments,
    EventMatching,
    MetricsReport,
    VideoScore,
    build_segments,
    iou,
    match_events,
    mae,
    mof,
    score_video,
    sr,
)
from .pipeline import (
    Diagnostics,
    EventRecord,
    PipelineConfig,
    TILResult,
    compute_profile,
    greedy_vlm,
    localize,
    localize_video,
    run_trials,
    threshold_baseline,
)
from .sampler import (
    AnchorPlan,
    SamplerConfig,
    build_candidates,
    fallback_uniform,
    sample_anchor,
    sampling_weights,
)
from .visual_prompt import (
    AdjacentWindow,
    GridImage,
    HandRegion,
    PixelBox,
    PromptBundle,
    adjacent_window,
    boundary_pair,
    build_prompt,
    grid_image,
    hand_box_from_keypoints,
    hand_region,
    resolve_hand_box,
    to_png_bytes,
)
from .vlm_gateway import (
    HttpBackend,
    ScriptedBackend,
    VlmGateway,
    VlmRequest,
    VlmVerdict,
    parse_attribute,
    parse_check,
    parse_tile_index,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacentWindow",
    "AnchorPlan",
    "CameraIntrinsics",
    "ContactSegments",
    "Diagnostics",
    "DynamicsProfile",
    "EventMatching",
    "EventRecord",
    "GridImage",
    "HandRegion",
    "HttpBackend",
    "MetricsReport",
    "PipelineConfig",
    "PixelBox",
    "PoseSequence",
    "PromptBundle",
    "RunArtifacts",
    "SamplerConfig",
    "ScriptedBackend",
    "TILResult",
    "VideoRecord",
    "VideoScore",
    "VlmGateway",
    "VlmRequest",
    "VlmVerdict",
    "WristTrack",
    "back_project",
    "build_candidates",
    "build_prompt",
    "build_segments",
    "boundary_pair",
    "compute_profile",
    "default_sg_params",
    "displacement_speeds",
    "dump_profile",
    "dynamics_profile",
    "errors",
    "fallback_uniform",
    "find_manifests",
    "fit_velocity_spline",
    "greedy_vlm",
    "grid_image",
    "hand_box_from_keypoints",
    "hand_region",
    "icp_register",
    "identity_poses",
    "iou",
    "lift_wrist_track",
    "load_manifest",
    "localize",
    "localize_video",
    "mae",
    "match_events",
    "mof",
    "parse_attribute",
    "parse_check",
    "parse_tile_index",
    "plot_dynamics",
    "read_result",
    "register_frames",
    "resolve_hand_box",
    "run_trials",
    "sample_anchor",
    "sampling_weights",
    "score_video",
    "smooth_speeds",
    "speed_series",
    "sr",
    "threshold_baseline",
    "to_global",
    "to_png_bytes",
    "write_result",
    "zero_acceleration_times",
]
