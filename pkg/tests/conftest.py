"""Shared fixtures: synthetic RGB-D videos written as real manifest trees.

The planted-valley builders construct wrist tracks whose 3D speed series is
an exact quadratic with its minimum at a chosen frame, so the smoothing and
spline stages recover the planted frame analytically.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

FX = FY = 100.0
WIDTH, HEIGHT = 256, 120
FPS = 30.0


def planted_track(n: int, valley: int, a: float = 0.003, v0: float = 0.01,
                  u0: float = 30.0) -> np.ndarray:
    """Pixel u-positions whose 3D speed (at depth 1 m) is v0 + a*(t-valley)^2."""
    us = [u0]
    for t in range(1, n):
        v = v0 + a * (t - valley) ** 2
        us.append(us[-1] + v * FX / FPS)
    return np.array(us)


def two_valley_track(n: int, v1: int, v2: int, a: float = 0.003, v0: float = 0.01,
                     u0: float = 20.0) -> np.ndarray:
    """Track with speed valleys at frames v1 and v2 (piecewise quadratic)."""
    mid = (v1 + v2) / 2
    us = [u0]
    for t in range(1, n):
        c = v1 if t < mid else v2
        us.append(us[-1] + (v0 + a * (t - c) ** 2) * FX / FPS)
    return np.array(us)


def write_video(
    root: Path,
    video_id: str = "vid",
    n: int = 40,
    wrist: np.ndarray | None = None,
    with_depth: bool = True,
    depth_m: float = 1.0,
    gt: dict | None = None,
    index_tip_3d=None,
    thumb_tip_3d=None,
    keypoints=None,
    boxes=None,
    fps: float = FPS,
    extra: dict | None = None,
) -> Path:
    """Write frames, depth, and a manifest under root; return the manifest path."""
    vdir = root / video_id
    (vdir / "rgb").mkdir(parents=True, exist_ok=True)
    if with_depth:
        (vdir / "depth").mkdir(parents=True, exist_ok=True)
    if wrist is None:
        wrist = np.stack([np.linspace(30, 90, n), np.full(n, HEIGHT / 2)], axis=1)
    frames = []
    depths = []
    for t in range(n):
        img = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
        img[:, :, 0] = (40 + 5 * t) % 256          # frame-distinct color
        img[:, :, 1] = 90
        img[t % HEIGHT, :, 2] = 255                # frame-distinct stripe
        name = f"rgb/{t + 1:04d}.png"
        Image.fromarray(img).save(vdir / name)
        frames.append(name)
        if with_depth:
            d = np.full((HEIGHT, WIDTH), round(depth_m * 1000), dtype=np.uint16)
            dname = f"depth/{t + 1:04d}.png"
            Image.fromarray(d).save(vdir / dname)
            depths.append(dname)
    manifest = {
        "schema_version": 1,
        "id": video_id,
        "fps": fps,
        "width": WIDTH,
        "height": HEIGHT,
        "intrinsics": {"fx": FX, "fy": FY, "cx": WIDTH / 2 - 0.5, "cy": HEIGHT / 2 - 0.5},
        "depth_scale": 0.001,
        "frames": frames,
        "hand": {"wrist": [[float(u), float(v)] for u, v in wrist]},
    }
    if with_depth:
        manifest["depth"] = depths
    if gt is not None:
        manifest["ground_truth"] = gt
    if index_tip_3d is not None:
        manifest["hand"]["index_tip_3d"] = index_tip_3d
    if thumb_tip_3d is not None:
        manifest["hand"]["thumb_tip_3d"] = thumb_tip_3d
    if keypoints is not None:
        manifest["hand"]["keypoints"] = keypoints
    if boxes is not None:
        manifest["hand"]["boxes"] = boxes
    if extra:
        manifest.update(extra)
    path = vdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def video_factory(tmp_path):
    """Builder writing synthetic manifest trees under this test's tmp dir."""

    def build(**kwargs) -> Path:
        return write_video(tmp_path, **kwargs)

    return build


@pytest.fixture
def valley_video(video_factory):
    """40-frame video with one planted speed valley at frame 20 (gt contact)."""
    n, valley = 40, 20
    return video_factory(
        video_id="valley20",
        n=n,
        wrist=np.stack([planted_track(n, valley), np.full(n, HEIGHT / 2)], axis=1),
        gt={"contacts": [valley], "separations": []},
    )


@pytest.fixture
def two_event_video(video_factory):
    """50-frame video with valleys at 15 (contact) and 35 (separation)."""
    n = 50
    return video_factory(
        video_id="twoevent",
        n=n,
        wrist=np.stack([two_valley_track(n, 15, 35), np.full(n, HEIGHT / 2)], axis=1),
        gt={"contacts": [15], "separations": [35]},
    )


def make_frames(n: int, h: int = 48, w: int = 64):
    """In-memory distinct RGB frames plus a 1-based loader for them."""
    frames = []
    for t in range(n):
        img = np.zeros((h, w, 3), dtype=np.uint8)
        img[:, :, 0] = (10 + 7 * t) % 256
        img[:, :, 1] = 128
        frames.append(img)

    def load(t: int) -> np.ndarray:
        return frames[t - 1]

    return frames, load
