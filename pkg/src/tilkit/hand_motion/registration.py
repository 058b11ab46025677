"""Rigid registration of sequential depth-derived point clouds.

Point-to-point ICP with centroid pre-alignment and SVD pose estimation.
Pairwise frame-to-frame transforms are chained so every frame is expressed
in the coordinate system of the first frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import TooShortError
from .camera import CameraIntrinsics, depth_to_cloud


@dataclass
class PoseSequence:
    """Per-frame rigid 4x4 transforms into the first frame's coordinates.

    `fallback_frames` lists frames whose registration diverged and which
    reuse the previous frame's transform.
    """

    transforms: list[np.ndarray]
    fallback_frames: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transforms)

    def apply(self, t: int, point: np.ndarray) -> np.ndarray:
        m = self.transforms[t]
        return m[:3, :3] @ np.asarray(point, dtype=float) + m[:3, 3]


def voxel_downsample(cloud: np.ndarray, voxel: float) -> np.ndarray:
    """Average the points falling into each cubic voxel of side `voxel` meters."""
    if cloud.shape[0] == 0 or voxel <= 0:
        return cloud
    keys = np.floor(cloud / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    sums = np.zeros((counts.size, 3))
    np.add.at(sums, inverse, cloud)
    return sums / counts[:, None]


def estimate_rigid(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares rigid transform mapping matched `source` onto `target`.

    SVD solution with determinant correction, so the rotation block is
    always a proper rotation (det +1).
    """
    sc, tc = source.mean(axis=0), target.mean(axis=0)
    h = (source - sc).T @ (target - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = tc - r @ sc
    return m


def icp_register(
    source: np.ndarray,
    target: np.ndarray,
    max_iterations: int = 50,
    tolerance: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Register `source` onto `target` with point-to-point ICP.

    Translation is initialized by centroid alignment. Iterates
    nearest-neighbor matching and SVD pose estimation until the RMS
    residual changes by less than `tolerance` meters or `max_iterations`
    is reached. Returns (4x4 transform, final RMS residual).
    """
    if source.shape[0] < 3 or target.shape[0] < 3:
        raise TooShortError("ICP needs at least 3 points per cloud")
    tree = cKDTree(target)
    m = np.eye(4)
    m[:3, 3] = target.mean(axis=0) - source.mean(axis=0)
    moved = source + m[:3, 3]
    prev_rms = np.inf
    for _ in range(max_iterations):
        dists, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(dists**2)))
        if abs(prev_rms - rms) < tolerance:
            break
        prev_rms = rms
        step = estimate_rigid(moved, target[idx])
        m = step @ m
        moved = source @ m[:3, :3].T + m[:3, 3]
    dists, _ = tree.query(moved)
    return m, float(np.sqrt(np.mean(dists**2)))


def register_frames(
    depth_maps: list[np.ndarray],
    k: CameraIntrinsics,
    voxel: float = 0.01,
    max_iterations: int = 50,
    tolerance: float = 1e-6,
    max_rms: float = 0.05,
    pixel_stride: int = 2,
) -> PoseSequence:
    """Chain pairwise registrations into first-frame poses.

    transforms[t] maps frame-t camera coordinates into frame-1 coordinates;
    transforms[0] is the identity. A pairwise step whose residual exceeds
    `max_rms` meters is treated as diverged: the frame reuses the previous
    transform and is flagged.
    """
    if len(depth_maps) == 0:
        raise TooShortError("need at least one depth map")
    clouds = [voxel_downsample(depth_to_cloud(d, k, stride=pixel_stride), voxel) for d in depth_maps]
    transforms = [np.eye(4)]
    fallback: list[int] = []
    for t in range(1, len(clouds)):
        try:
            pairwise, rms = icp_register(clouds[t], clouds[t - 1], max_iterations, tolerance)
        except TooShortError:
            pairwise, rms = np.eye(4), np.inf
        if rms > max_rms:
            transforms.append(transforms[t - 1].copy())
            fallback.append(t)
        else:
            transforms.append(transforms[t - 1] @ pairwise)
    return PoseSequence(transforms=transforms, fallback_frames=fallback)


def identity_poses(n_frames: int) -> PoseSequence:
    """Static-camera mode: every frame already sits in the global frame."""
    return PoseSequence(transforms=[np.eye(4) for _ in range(n_frames)])
