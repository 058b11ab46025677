"""3D wrist track extraction and hand-speed structure.

Turns per-frame wrist detections into a global-frame 3D track, then into a
speed series, a smoothed series, a cubic-spline velocity curve, and the
zero-acceleration times (interior local minima of the curve) that seed
anchor sampling.

Continuous time is measured in frame units with the first frame at t = 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter

from ..errors import ConfigError, DegenerateTrackError, TooShortError
from .camera import CameraIntrinsics, back_project, depth_at
from .registration import PoseSequence

log = logging.getLogger(__name__)


@dataclass
class WristTrack:
    """Per-frame 3D wrist positions in camera and global coordinates.

    `valid` records which frames carried a usable depth before temporal
    interpolation; the point arrays themselves are always dense.
    """

    cam_points: np.ndarray
    valid: np.ndarray
    glob_points: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.cam_points)


@dataclass
class DynamicsProfile:
    """Hand-speed structure of one video."""

    speeds: np.ndarray
    smoothed: np.ndarray
    spline: CubicSpline
    zero_accel_times: list[float]
    dt: float
    degraded: bool = False

    @property
    def n_obs(self) -> int:
        return len(self.speeds)


def default_sg_params(fps: float) -> tuple[int, int]:
    """Savitzky-Golay (window, order) tuned to the capture frame rate."""
    return (7, 3) if fps >= 15 else (5, 2)


def lift_wrist_track(
    keypoints_2d: np.ndarray,
    depth_maps: Sequence[np.ndarray],
    k: CameraIntrinsics,
) -> WristTrack:
    """Back-project per-frame wrist pixels into camera-frame 3D points.

    Frames whose depth cannot be recovered (hole at the wrist with no valid
    5x5 neighborhood, or wrist outside the image) are marked invalid and
    filled by linear interpolation between the nearest valid neighbors;
    boundary frames copy the nearest valid point.
    """
    n = len(keypoints_2d)
    if n != len(depth_maps):
        raise ConfigError(f"got {n} keypoints but {len(depth_maps)} depth maps")
    points = np.full((n, 3), np.nan)
    valid = np.zeros(n, dtype=bool)
    for t in range(n):
        u, v = float(keypoints_2d[t][0]), float(keypoints_2d[t][1])
        z = depth_at(depth_maps[t], u, v)
        if z is None:
            continue
        uc = min(max(u, 0.0), k.width - 1.0)
        vc = min(max(v, 0.0), k.height - 1.0)
        points[t] = back_project(uc, vc, z, k)
        valid[t] = True
    if not valid.any():
        raise DegenerateTrackError("no frame has a recoverable wrist depth")
    points = _fill_invalid(points, valid)
    return WristTrack(cam_points=points, valid=valid)


def _fill_invalid(points: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Linear interpolation over invalid frames, edge frames copy nearest valid."""
    filled = points.copy()
    idx = np.flatnonzero(valid)
    t = np.arange(len(points))
    for axis in range(points.shape[1]):
        filled[:, axis] = np.interp(t, idx, points[idx, axis])
    return filled


def to_global(track: WristTrack, poses: PoseSequence) -> WristTrack:
    """Map camera-frame points through per-frame poses into the first frame."""
    if len(track) != len(poses):
        raise ConfigError(f"track has {len(track)} frames but poses {len(poses)}")
    glob = np.stack([poses.apply(t, track.cam_points[t]) for t in range(len(track))])
    return WristTrack(cam_points=track.cam_points, valid=track.valid, glob_points=glob)


def displacement_speeds(points: np.ndarray, dt: float) -> np.ndarray:
    """Scalar speeds from successive displacements: |p[t+1] - p[t]| / dt.

    Works for 2D (pixels/s) and 3D (m/s) tracks. The last element
    duplicates the penultimate so the series matches the frame count.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise TooShortError("need at least 2 frames for a speed series")
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    speeds = np.linalg.norm(np.diff(points, axis=0), axis=1) / dt
    return np.append(speeds, speeds[-1])


def speed_series(track: WristTrack, dt: float) -> np.ndarray:
    """Hand speed per frame (m/s) from the global-frame track."""
    if track.glob_points is None:
        raise ConfigError("track has no global points; run to_global first")
    return displacement_speeds(track.glob_points, dt)


def smooth_speeds(speeds: np.ndarray, window: int, order: int) -> np.ndarray:
    """Savitzky-Golay smoothing with polynomial edge fitting.

    Edge windows are fitted with a least-squares polynomial over the real
    samples, so any input that is itself a polynomial of degree <= order is
    reproduced exactly everywhere, boundaries included.
    """
    speeds = np.asarray(speeds, dtype=float)
    if window % 2 == 0:
        raise ConfigError(f"window must be odd, got {window}")
    if window <= order:
        raise ConfigError(f"window {window} must exceed order {order}")
    if window > len(speeds):
        raise ConfigError(f"window {window} exceeds series length {len(speeds)}")
    return savgol_filter(speeds, window, order, mode="interp")


def fit_velocity_spline(smoothed: np.ndarray, dt: float) -> CubicSpline:
    """Natural cubic spline through the smoothed speeds, knots at t = 1..N.

    With fewer than 4 samples the natural boundary conditions degrade the
    fit to a lower effective order; this is logged, not an error.
    """
    smoothed = np.asarray(smoothed, dtype=float)
    n = len(smoothed)
    if n < 2:
        raise TooShortError("need at least 2 samples to fit a spline")
    if n < 4:
        log.warning("only %d samples: cubic spline degrades to lower order", n)
    return CubicSpline(np.arange(1, n + 1, dtype=float), smoothed, bc_type="natural")


def zero_acceleration_times(profile_or_spline) -> list[float]:
    """Interior local minima of the velocity spline, in ascending time order.

    Solved in closed form: the derivative of each cubic piece is a
    quadratic. A time qualifies when the first derivative vanishes and the
    second derivative is strictly positive; minima at t = 1 or t = N are
    excluded. Strictly monotone speeds yield an empty list, which the
    sampler answers with its uniform fallback.
    """
    spline: CubicSpline = getattr(profile_or_spline, "spline", profile_or_spline)
    knots = spline.x
    coeffs = spline.c
    t_lo, t_hi = float(knots[0]), float(knots[-1])
    times: list[float] = []
    for i in range(len(knots) - 1):
        c3, c2, c1 = coeffs[0, i], coeffs[1, i], coeffs[2, i]
        h = float(knots[i + 1] - knots[i])
        for u in _quadratic_roots(3.0 * c3, 2.0 * c2, c1):
            u = _polish_root(u, 3.0 * c3, 2.0 * c2, c1)
            if not (0.0 <= u < h):
                continue
            if 6.0 * c3 * u + 2.0 * c2 <= 0.0:
                continue
            t = float(knots[i]) + u
            if t_lo < t < t_hi:
                times.append(t)
    times.sort()
    deduped: list[float] = []
    for t in times:
        if not deduped or t - deduped[-1] > 1e-9:
            deduped.append(t)
    return deduped


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a*u^2 + b*u + c, numerically stable form."""
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    elif disc > 0.0:
        roots.append(-roots[0])
    return roots


def _polish_root(u: float, a: float, b: float, c: float) -> float:
    """One Newton step on the derivative quadratic, guarding flat slope."""
    slope = 2.0 * a * u + b
    if slope != 0.0:
        u = u - (a * u * u + b * u + c) / slope
    return u


def dynamics_profile(
    speeds: np.ndarray,
    dt: float,
    window: int,
    order: int,
) -> DynamicsProfile:
    """Smooth a speed series, fit the spline, and locate its minima."""
    smoothed = smooth_speeds(speeds, window, order)
    spline = fit_velocity_spline(smoothed, dt)
    return DynamicsProfile(
        speeds=np.asarray(speeds, dtype=float),
        smoothed=smoothed,
        spline=spline,
        zero_accel_times=zero_acceleration_times(spline),
        dt=dt,
        degraded=len(smoothed) < 4,
    )
