"""Dataset manifests, result serialization, and dynamics plots.

A video is described by one UTF-8 JSON manifest (schema_version 1):

    {
      "schema_version": 1,
      "id": "video-001",
      "fps": 30.0,
      "width": 640, "height": 480,
      "intrinsics": {"fx": 520.0, "fy": 520.0, "cx": 319.5, "cy": 239.5},
      "depth_scale": 0.001,
      "frames": ["rgb/0001.png", ...],
      "depth":  ["depth/0001.png", ...],
      "hand": {
        "wrist": [[u, v], ...],
        "keypoints": [[[u, v], ...] | null, ...],
        "boxes": [[x0, y0, x1, y1] | null, ...],
        "index_tip_3d": [[x, y, z] | null, ...],
        "thumb_tip_3d": [[x, y, z] | null, ...]
      },
      "ground_truth": {"contacts": [...], "separations": [...]}
    }

Paths are relative to the manifest's directory. Depth images are 16-bit
grayscale PNGs whose pixel values times `depth_scale` give meters. All
frame indices, here and in every result file, are 1-based.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError, ResultParseError
from .hand_motion import CameraIntrinsics, DynamicsProfile
from .pipeline import Diagnostics, EventRecord, TILResult
from .visual_prompt import AdjacentWindow, PixelBox

SCHEMA_VERSION = 1

_RESULT_FIELDS = {
    "schema_version", "kind", "video_id", "n_obs", "mode", "sampling",
    "config_digest", "contacts", "separations", "events", "diagnostics",
}
_EVENT_FIELDS = {
    "plan_id", "anchor", "attribute", "window_frames", "anchor_position",
    "round1_time", "checker_verdict", "round2_time", "final_time",
    "resample_count", "flags",
}
_DIAG_FIELDS = {f.name for f in Diagnostics.__dataclass_fields__.values()}


@dataclass
class VideoRecord:
    """One video's frames, depth, calibration, hand data, and optional GT."""

    id: str
    fps: float
    width: int
    height: int
    frame_paths: list[Path]
    depth_paths: list[Path] | None
    intrinsics: CameraIntrinsics | None
    depth_scale: float
    wrist: np.ndarray
    keypoints: list[np.ndarray | None]
    boxes: list[PixelBox | None]
    index_tip_3d: np.ndarray | None
    thumb_tip_3d: np.ndarray | None
    ground_truth: dict | None

    @property
    def n_obs(self) -> int:
        return len(self.frame_paths)

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    @property
    def has_depth(self) -> bool:
        return self.depth_paths is not None

    def load_frame(self, t: int) -> np.ndarray:
        """RGB uint8 array of frame t (1-based)."""
        self._check_t(t)
        with Image.open(self.frame_paths[t - 1]) as img:
            return np.asarray(img.convert("RGB"))

    def load_depth(self, t: int) -> np.ndarray:
        """Depth of frame t in meters (float64), NaN-free; zeros mean holes."""
        self._check_t(t)
        if self.depth_paths is None:
            raise ManifestError(f"video {self.id} has no depth maps")
        with Image.open(self.depth_paths[t - 1]) as img:
            raw = np.asarray(img, dtype=np.float64)
        return raw * self.depth_scale

    def keypoints_at(self, t: int) -> np.ndarray | None:
        self._check_t(t)
        return self.keypoints[t - 1]

    def box_at(self, t: int) -> PixelBox | None:
        self._check_t(t)
        return self.boxes[t - 1]

    def _check_t(self, t: int) -> None:
        if not (1 <= t <= self.n_obs):
            raise ManifestError(f"frame index {t} outside [1, {self.n_obs}]")


@dataclass
class RunArtifacts:
    """Paths of everything a localization run wrote, tied to one digest."""

    config_digest: str
    result_path: Path | None = None
    report_path: Path | None = None
    audit_path: Path | None = None
    plot_path: Path | None = None
    prompt_dir: Path | None = None


def load_manifest(path: str | Path) -> VideoRecord:
    """Parse and exhaustively validate one manifest file."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")
    root = path.parent

    version = _get(data, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ManifestError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")
    vid = _get(data, "id", str)
    fps = float(_get(data, "fps", (int, float)))
    if fps <= 0:
        raise ManifestError(f"fps: must be positive, got {fps}")
    width = _get(data, "width", int)
    height = _get(data, "height", int)
    if width < 1 or height < 1:
        raise ManifestError(f"width/height: must be positive, got {width}x{height}")

    frames = _path_list(data, "frames", root, required=True)
    n = len(frames)
    depth = _path_list(data, "depth", root, required=False)
    if depth is not None and len(depth) != n:
        raise ManifestError(f"depth: {len(depth)} entries but frames has {n}")

    intrinsics = None
    if "intrinsics" in data:
        k = data["intrinsics"]
        if not isinstance(k, dict):
            raise ManifestError("intrinsics: must be an object")
        for f in ("fx", "fy", "cx", "cy"):
            if f not in k or not isinstance(k[f], (int, float)):
                raise ManifestError(f"intrinsics.{f}: missing or not a number")
        intrinsics = CameraIntrinsics(
            fx=float(k["fx"]), fy=float(k["fy"]), cx=float(k["cx"]), cy=float(k["cy"]),
            width=width, height=height,
        )
    if depth is not None and intrinsics is None:
        raise ManifestError("intrinsics: required when depth maps are present")

    depth_scale = float(data.get("depth_scale", 0.001))
    if depth_scale <= 0:
        raise ManifestError(f"depth_scale: must be positive, got {depth_scale}")

    hand = data.get("hand")
    if not isinstance(hand, dict):
        raise ManifestError("hand: missing or not an object")
    wrist = _point_array(hand, "hand.wrist", n, dim=2, required=True)
    keypoints = _keypoint_list(hand, n)
    boxes = _box_list(hand, n, width, height)
    index_tip = _point_array(hand, "hand.index_tip_3d", n, dim=3, required=False)
    thumb_tip = _point_array(hand, "hand.thumb_tip_3d", n, dim=3, required=False)

    gt = None
    if "ground_truth" in data and data["ground_truth"] is not None:
        g = data["ground_truth"]
        if not isinstance(g, dict):
            raise ManifestError("ground_truth: must be an object")
        gt = {}
        for key in ("contacts", "separations"):
            vals = g.get(key, [])
            if not isinstance(vals, list):
                raise ManifestError(f"ground_truth.{key}: must be a list")
            for i, v in enumerate(vals):
                if not isinstance(v, int) or isinstance(v, bool):
                    raise ManifestError(f"ground_truth.{key}[{i}]: must be an integer")
                if not (1 <= v <= n):
                    raise ManifestError(
                        f"ground_truth.{key}[{i}]: {v} outside [1, {n}] (1-based)"
                    )
            gt[key] = sorted(vals)

    return VideoRecord(
        id=vid, fps=fps, width=width, height=height,
        frame_paths=frames, depth_paths=depth,
        intrinsics=intrinsics, depth_scale=depth_scale,
        wrist=wrist, keypoints=keypoints, boxes=boxes,
        index_tip_3d=index_tip, thumb_tip_3d=thumb_tip,
        ground_truth=gt,
    )


def find_manifests(target: str | Path) -> list[Path]:
    """A manifest path as-is, or every *.json directly inside a directory."""
    target = Path(target)
    if target.is_dir():
        found = sorted(p for p in target.glob("*.json") if p.is_file())
        if not found:
            raise ManifestError(f"no manifest files in {target}")
        return found
    return [target]


def write_result(result: TILResult, path: str | Path) -> Path:
    """Serialize a TILResult deterministically (sorted keys, 6 sig digits)."""
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "til_result",
        "video_id": result.video_id,
        "n_obs": result.n_obs,
        "mode": result.mode,
        "sampling": result.sampling,
        "config_digest": result.config_digest,
        "contacts": list(result.contacts),
        "separations": list(result.separations),
        "events": [_event_to_dict(e) for e in result.events],
        "diagnostics": _diag_to_dict(result.diagnostics),
    }
    text = json.dumps(_round6(payload), sort_keys=True, indent=2) + "\n"
    _atomic_write(path, text)
    return path


def read_result(path: str | Path) -> TILResult:
    """Read a result file back; unknown fields warn instead of failing."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ResultParseError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from exc
    if not isinstance(data, dict) or data.get("kind") != "til_result":
        raise ResultParseError(f"{path}: not a til_result file")
    _warn_unknown(path, "", data, _RESULT_FIELDS)
    events = []
    for i, e in enumerate(data.get("events", [])):
        _warn_unknown(path, f"events[{i}].", e, _EVENT_FIELDS)
        events.append(
            EventRecord(
                plan_id=e["plan_id"],
                anchor=e["anchor"],
                attribute=e["attribute"],
                window=AdjacentWindow(
                    frames=tuple(e["window_frames"]),
                    anchor_position=e["anchor_position"],
                ),
                round1_time=e["round1_time"],
                checker_verdict=e["checker_verdict"],
                round2_time=e.get("round2_time"),
                final_time=e["final_time"],
                resample_count=e["resample_count"],
                flags=tuple(e.get("flags", ())),
            )
        )
    d = data.get("diagnostics", {})
    _warn_unknown(path, "diagnostics.", d, _DIAG_FIELDS)
    diag = Diagnostics(**{k: v for k, v in d.items() if k in _DIAG_FIELDS})
    return TILResult(
        contacts=tuple(data.get("contacts", ())),
        separations=tuple(data.get("separations", ())),
        events=tuple(events),
        diagnostics=diag,
        video_id=data.get("video_id", ""),
        n_obs=data.get("n_obs", 0),
        mode=data.get("mode", "egoloc"),
        sampling=data.get("sampling", "sass-3d"),
        config_digest=data.get("config_digest", ""),
    )


def dump_profile(profile: DynamicsProfile, path: str | Path) -> Path:
    """Write the speed series and zero-acceleration times as JSON."""
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "dynamics_profile",
        "dt": profile.dt,
        "degraded": profile.degraded,
        "speeds": [float(v) for v in profile.speeds],
        "smoothed": [float(v) for v in profile.smoothed],
        "zero_accel_times": [float(t) for t in profile.zero_accel_times],
    }
    _atomic_write(path, json.dumps(_round6(payload), sort_keys=True, indent=2) + "\n")
    return path


def plot_dynamics(
    profile: DynamicsProfile,
    result: TILResult | None,
    gt: dict | None,
    out_path: str | Path,
) -> Path:
    """Render speeds, spline, minima, and transition lines to a vector file."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "tilkit"  # content-stable SVG ids
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    n = profile.n_obs
    t = np.arange(1, n + 1)
    dense = np.linspace(1, n, max(256, 16 * n))
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(t, profile.speeds, ".", color="0.6", markersize=4, label="raw speed")
    ax.plot(t, profile.smoothed, "-", color="C0", linewidth=1.2, label="smoothed")
    ax.plot(dense, profile.spline(dense), "-", color="C1", linewidth=1.0, label="spline")
    if profile.zero_accel_times:
        za = np.array(profile.zero_accel_times)
        ax.plot(za, profile.spline(za), "v", color="C3", markersize=7, label="zero acceleration")
    if result is not None:
        for x in result.contacts:
            ax.axvline(x, color="C2", linestyle="-", alpha=0.8,
                       label="predicted contact" if x == result.contacts[0] else None)
        for x in result.separations:
            ax.axvline(x, color="C4", linestyle="-", alpha=0.8,
                       label="predicted separation" if x == result.separations[0] else None)
    if gt:
        for key, style in (("contacts", "--"), ("separations", ":")):
            for j, x in enumerate(gt.get(key, ())):
                ax.axvline(x, color="0.3", linestyle=style, alpha=0.7,
                           label=f"gt {key[:-1]}" if j == 0 else None)
    ax.set_xlabel("frame")
    ax.set_ylabel("hand speed")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Date": None} if out_path.suffix == ".svg" else None)
    plt.close(fig)
    return out_path


def _event_to_dict(e: EventRecord) -> dict:
    return {
        "plan_id": e.plan_id,
        "anchor": e.anchor,
        "attribute": e.attribute,
        "window_frames": list(e.window.frames),
        "anchor_position": e.window.anchor_position,
        "round1_time": e.round1_time,
        "checker_verdict": e.checker_verdict,
        "round2_time": e.round2_time,
        "final_time": e.final_time,
        "resample_count": e.resample_count,
        "flags": list(e.flags),
    }


def _diag_to_dict(d: Diagnostics) -> dict:
    return {
        "plans_total": d.plans_total,
        "plans_resolved": d.plans_resolved,
        "plans_unresolved": d.plans_unresolved,
        "plans_skipped_proximity": d.plans_skipped_proximity,
        "draws_total": d.draws_total,
        "unparseable_attribute": d.unparseable_attribute,
        "unparseable_tile": d.unparseable_tile,
        "unparseable_check": d.unparseable_check,
        "duplicates_suppressed": d.duplicates_suppressed,
        "registration_fallbacks": d.registration_fallbacks,
        "degraded_dynamics": d.degraded_dynamics,
        "partial": d.partial,
        "notes": list(d.notes),
    }


def _warn_unknown(path: Path, prefix: str, obj: dict, known: set) -> None:
    for key in obj:
        if key not in known:
            warnings.warn(f"{path}: unknown field {prefix}{key} ignored", stacklevel=3)


def _round6(obj):
    """Recursively round floats to 6 significant digits for stable files."""
    if isinstance(obj, float):
        return float(f"{obj:.6g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _get(data: dict, key: str, types):
    if key not in data:
        raise ManifestError(f"{key}: required field missing")
    v = data[key]
    if types is int and isinstance(v, bool):
        raise ManifestError(f"{key}: must be an integer, got a boolean")
    if not isinstance(v, types):
        raise ManifestError(f"{key}: wrong type {type(v).__name__}")
    return v


def _path_list(data: dict, key: str, root: Path, required: bool) -> list[Path] | None:
    if key not in data or data[key] is None:
        if required:
            raise ManifestError(f"{key}: required field missing")
        return None
    vals = data[key]
    if not isinstance(vals, list) or not vals:
        raise ManifestError(f"{key}: must be a non-empty list of paths")
    out = []
    for i, v in enumerate(vals):
        if not isinstance(v, str):
            raise ManifestError(f"{key}[{i}]: must be a string path")
        p = (root / v).resolve()
        if not p.is_file():
            raise ManifestError(f"{key}[{i}]: file not found: {p}")
        out.append(p)
    return out


def _point_array(hand: dict, label: str, n: int, dim: int, required: bool) -> np.ndarray | None:
    key = label.split(".", 1)[1]
    if key not in hand or hand[key] is None:
        if required:
            raise ManifestError(f"{label}: required field missing")
        return None
    vals = hand[key]
    if not isinstance(vals, list):
        raise ManifestError(f"{label}: must be a list")
    if len(vals) != n:
        raise ManifestError(f"{label}: {len(vals)} entries but frames has {n}")
    out = np.full((n, dim), np.nan)
    for i, v in enumerate(vals):
        if v is None:
            if required:
                raise ManifestError(f"{label}[{i}]: null not allowed here")
            continue
        if not isinstance(v, list) or len(v) != dim:
            raise ManifestError(f"{label}[{i}]: must be a {dim}-element number list")
        if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in v):
            raise ManifestError(f"{label}[{i}]: entries must be finite numbers")
        out[i] = v
    return out


def _keypoint_list(hand: dict, n: int) -> list[np.ndarray | None]:
    if "keypoints" not in hand or hand["keypoints"] is None:
        return [None] * n
    vals = hand["keypoints"]
    if not isinstance(vals, list):
        raise ManifestError("hand.keypoints: must be a list")
    if len(vals) != n:
        raise ManifestError(f"hand.keypoints: {len(vals)} entries but frames has {n}")
    out: list[np.ndarray | None] = []
    for i, v in enumerate(vals):
        if v is None:
            out.append(None)
            continue
        if not isinstance(v, list) or not v:
            raise ManifestError(f"hand.keypoints[{i}]: must be a non-empty list of [u, v]")
        pts = np.full((len(v), 2), np.nan)
        for j, p in enumerate(v):
            if not isinstance(p, list) or len(p) != 2 or not all(
                isinstance(x, (int, float)) and math.isfinite(x) for x in p
            ):
                raise ManifestError(f"hand.keypoints[{i}][{j}]: must be [u, v] finite numbers")
            pts[j] = p
        out.append(pts)
    return out


def _box_list(hand: dict, n: int, width: int, height: int) -> list[PixelBox | None]:
    if "boxes" not in hand or hand["boxes"] is None:
        return [None] * n
    vals = hand["boxes"]
    if not isinstance(vals, list):
        raise ManifestError("hand.boxes: must be a list")
    if len(vals) != n:
        raise ManifestError(f"hand.boxes: {len(vals)} entries but frames has {n}")
    out: list[PixelBox | None] = []
    for i, v in enumerate(vals):
        if v is None:
            out.append(None)
            continue
        if not isinstance(v, list) or len(v) != 4 or not all(
            isinstance(x, (int, float)) and math.isfinite(x) for x in v
        ):
            raise ManifestError(f"hand.boxes[{i}]: must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = (int(round(x)) for x in v)
        if x1 < x0 or y1 < y0:
            raise ManifestError(f"hand.boxes[{i}]: inverted corners {v}")
        out.append(PixelBox(x0=x0, y0=y0, x1=x1, y1=y1))
    return out
