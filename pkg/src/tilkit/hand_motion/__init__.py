"""Hand motion extraction: 3D wrist lifting, registration, speed dynamics."""

from .camera import CameraIntrinsics, back_project, depth_at, depth_to_cloud, project
from .dynamics import (
    DynamicsProfile,
    WristTrack,
    default_sg_params,
    displacement_speeds,
    dynamics_profile,
    fit_velocity_spline,
    lift_wrist_track,
    smooth_speeds,
    speed_series,
    to_global,
    zero_acceleration_times,
)
from .registration import (
    PoseSequence,
    estimate_rigid,
    icp_register,
    identity_poses,
    register_frames,
    voxel_downsample,
)

__all__ = [
    "CameraIntrinsics",
    "DynamicsProfile",
    "PoseSequence",
    "WristTrack",
    "back_project",
    "default_sg_params",
    "depth_at",
    "depth_to_cloud",
    "displacement_speeds",
    "dynamics_profile",
    "estimate_rigid",
    "fit_velocity_spline",
    "icp_register",
    "identity_poses",
    "lift_wrist_track",
    "project",
    "register_frames",
    "smooth_speeds",
    "speed_series",
    "to_global",
    "voxel_downsample",
    "zero_acceleration_times",
]
