"""Pinhole camera model: back-projection of depth pixels into 3D."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InvalidDepthError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width):
            raise ConfigError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ConfigError(f"cy={self.cy} outside [0, {self.height})")


def back_project(u: float, v: float, z: float, k: CameraIntrinsics) -> np.ndarray:
    """Lift pixel (u, v) at depth z meters to a 3D point in the camera frame.

    Returns ((u - cx) * z / fx, (v - cy) * z / fy, z).
    """
    if z <= 0:
        raise InvalidDepthError(f"depth must be positive, got {z}")
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise ConfigError(f"pixel ({u}, {v}) outside {k.width}x{k.height} image")
    return np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], dtype=float)


def project(point: np.ndarray, k: CameraIntrinsics) -> tuple[float, float]:
    """Project a camera-frame 3D point back to pixel coordinates."""
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        raise InvalidDepthError(f"point behind camera, z={z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def depth_to_cloud(depth: np.ndarray, k: CameraIntrinsics, stride: int = 1) -> np.ndarray:
    """Back-project every valid pixel of a depth map (meters) to an (N, 3) cloud.

    Pixels with non-positive or non-finite depth are dropped. `stride`
    subsamples the pixel grid for speed.
    """
    h, w = depth.shape
    vs, us = np.mgrid[0:h:stride, 0:w:stride]
    zs = depth[::stride, ::stride]
    valid = np.isfinite(zs) & (zs > 0)
    us, vs, zs = us[valid].astype(float), vs[valid].astype(float), zs[valid].astype(float)
    return np.column_stack(((us - k.cx) * zs / k.fx, (vs - k.cy) * zs / k.fy, zs))


def depth_at(depth: np.ndarray, u: float, v: float, patch: int = 5) -> float | None:
    """Depth (meters) at pixel (u, v), robust to holes.

    The pixel value is used when valid; otherwise the median of valid
    depths in a `patch` x `patch` neighborhood. Returns None when the
    neighborhood holds no valid depth or the pixel is out of bounds.
    """
    h, w = depth.shape
    ui, vi = int(round(u)), int(round(v))
    if not (0 <= ui < w and 0 <= vi < h):
        return None
    z = depth[vi, ui]
    if np.isfinite(z) and z > 0:
        return float(z)
    r = patch // 2
    window = depth[max(0, vi - r):vi + r + 1, max(0, ui - r):ui + r + 1]
    good = window[np.isfinite(window) & (window > 0)]
    if good.size == 0:
        return None
    return float(np.median(good))
