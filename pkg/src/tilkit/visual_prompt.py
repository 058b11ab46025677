"""Visual and text prompts for the three model roles.

Builds the expanded hand-region boundary pair seen by the discriminator,
the annotated chronological grid image seen by the localizer, and the text
prompts of all three roles from versioned template resources.

Images are RGB uint8 numpy arrays of shape (height, width, 3).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import ConfigError, MissingHandError, WindowTooLargeError

ROLES = ("discriminator", "localizer", "checker")
ATTRIBUTES = ("contact", "separation")


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned pixel rectangle with inclusive corners."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ConfigError(f"inverted box corners: {self}")


@dataclass(frozen=True)
class AdjacentWindow:
    """The n_adj^2 uniformly spaced frames tiled around an anchor."""

    frames: tuple[int, ...]
    anchor_position: int  # 1-based index within `frames`

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class HandRegion:
    """Expanded hand box of one frame together with its crop."""

    frame: int
    box: PixelBox
    crop: np.ndarray


@dataclass
class GridImage:
    """Chronological row-major tiling with 1-based index labels."""

    image: np.ndarray
    tile_to_frame: dict[int, int]
    n_adj: int


@dataclass
class PromptBundle:
    """Complete text prompt for one role, plus the optional negative image."""

    role: str
    attribute: str | None
    round: int
    text: str
    negative_example: np.ndarray | None = None


def adjacent_window(anchor: int, n_adj: int, n_obs: int, stride: int = 1) -> AdjacentWindow:
    """Place a window of n_adj^2 frames so the anchor sits mid-sequence.

    The anchor occupies position (n_adj^2 + 1) // 2 (position 8 of 16 for
    n_adj = 4, position 2 of 4 for n_adj = 2). Windows that would poke out
    of [1, n_obs] are shifted, never shrunk, so tile arithmetic stays
    uniform; the anchor position is adjusted accordingly.
    """
    if not (1 <= anchor <= n_obs):
        raise ConfigError(f"anchor {anchor} outside [1, {n_obs}]")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    length = n_adj * n_adj
    span = (length - 1) * stride + 1
    if span > n_obs:
        raise WindowTooLargeError(f"window spans {span} frames but video has {n_obs}")
    pos = (length + 1) // 2
    lo = anchor - (pos - 1) * stride
    lo = min(max(lo, 1), n_obs - (length - 1) * stride)
    frames = tuple(lo + i * stride for i in range(length))
    anchor_position = min(max(1 + round((anchor - lo) / stride), 1), length)
    return AdjacentWindow(frames=frames, anchor_position=anchor_position)


def hand_box_from_keypoints(keypoints: np.ndarray, pad: int = 20) -> PixelBox:
    """Bounding rectangle of 2D hand keypoints, padded."""
    pts = np.asarray(keypoints, dtype=float)
    if pts.size == 0:
        raise MissingHandError("no keypoints to bound")
    return PixelBox(
        x0=int(np.floor(pts[:, 0].min())) - pad,
        y0=int(np.floor(pts[:, 1].min())) - pad,
        x1=int(np.ceil(pts[:, 0].max())) + pad,
        y1=int(np.ceil(pts[:, 1].max())) + pad,
    )


def resolve_hand_box(
    box: PixelBox | None,
    keypoints: np.ndarray | None,
    pad: int = 20,
) -> PixelBox:
    """Detector box when present, else padded keypoint rectangle, else error."""
    if box is not None:
        return box
    if keypoints is not None and len(keypoints) > 0:
        return hand_box_from_keypoints(keypoints, pad)
    raise MissingHandError("frame has neither a hand box nor keypoints")


def hand_region(
    image: np.ndarray,
    box: PixelBox,
    eps_w: int,
    eps_h: int,
    frame: int = 0,
) -> HandRegion:
    """Expand a hand box by (eps_w, eps_h) per side, clamp, and crop."""
    h, w = image.shape[:2]
    if box.x1 < 0 or box.y1 < 0 or box.x0 >= w or box.y0 >= h:
        raise ConfigError(f"box {box} does not overlap {w}x{h} image")
    grown = PixelBox(
        x0=max(box.x0 - eps_w, 0),
        y0=max(box.y0 - eps_h, 0),
        x1=min(box.x1 + eps_w, w - 1),
        y1=min(box.y1 + eps_h, h - 1),
    )
    crop = image[grown.y0:grown.y1 + 1, grown.x0:grown.x1 + 1].copy()
    return HandRegion(frame=frame, box=grown, crop=crop)


def boundary_pair(
    window: AdjacentWindow,
    load_frame: Callable[[int], np.ndarray],
    box_for: Callable[[int], PixelBox],
    eps_w: int = 10,
    eps_h: int = 10,
    height: int | None = None,
    label_band: int = 24,
) -> np.ndarray:
    """Compose the expanded hand crops of the window's first and last frame.

    Crops are resized to a common height (the taller crop by default, or
    `height` when given), concatenated earlier-left / later-right, and
    captioned "t1" / "t2" in a band below.
    """
    first, last = window.frames[0], window.frames[-1]
    crops = []
    for f in (first, last):
        region = hand_region(load_frame(f), box_for(f), eps_w, eps_h, frame=f)
        crops.append(region.crop)
    target = height or max(c.shape[0] for c in crops)
    resized = [_resize_to_height(c, target) for c in crops]
    widths = [c.shape[1] for c in resized]
    canvas = np.zeros((target + label_band, sum(widths), 3), dtype=np.uint8)
    canvas[:target, :widths[0]] = resized[0]
    canvas[:target, widths[0]:] = resized[1]
    pil = Image.fromarray(canvas)
    draw = ImageDraw.Draw(pil)
    font = _font(max(12, label_band - 8))
    draw.text((widths[0] // 2, target + 2), "t1", fill=(255, 255, 255), font=font, anchor="ma")
    draw.text((widths[0] + widths[1] // 2, target + 2), "t2", fill=(255, 255, 255), font=font, anchor="ma")
    return np.asarray(pil)


def grid_image(window: AdjacentWindow, load_frame: Callable[[int], np.ndarray]) -> GridImage:
    """Tile the window's frames row-major in chronological order.

    Every tile is stamped with its 1-based sequence number in a filled
    high-contrast label box at the top-left corner. All frames must share
    one size; resize beforehand if they do not.
    """
    n = int(round(len(window.frames) ** 0.5))
    if n * n != len(window.frames):
        raise ConfigError(f"window length {len(window.frames)} is not a perfect square")
    frames = [load_frame(f) for f in window.frames]
    h, w = frames[0].shape[:2]
    for f, img in zip(window.frames, frames):
        if img.shape[:2] != (h, w):
            raise ConfigError(f"frame {f} is {img.shape[:2]}, expected {(h, w)}; pre-resize frames")
    canvas = np.zeros((n * h, n * w, 3), dtype=np.uint8)
    for i, img in enumerate(frames):
        r, c = divmod(i, n)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = img
    pil = Image.fromarray(canvas)
    draw = ImageDraw.Draw(pil)
    font = _font(max(12, h // 20))
    for i in range(len(frames)):
        r, c = divmod(i, n)
        _stamp_label(draw, x=c * w, y=r * h, text=str(i + 1), font=font)
    tile_to_frame = {i + 1: f for i, f in enumerate(window.frames)}
    return GridImage(image=np.asarray(pil), tile_to_frame=tile_to_frame, n_adj=n)


def build_prompt(
    role: str,
    attribute: str | None,
    round: int = 1,
    negative_example: np.ndarray | None = None,
) -> PromptBundle:
    """Render the text prompt for a role from its template resource.

    The localizer's second round appends the negative-example clause to the
    unchanged first-round text; it is the only prompt allowed to carry a
    negative image.
    """
    if role not in ROLES:
        raise ConfigError(f"unknown role {role!r}")
    if role == "discriminator":
        if attribute is not None:
            raise ConfigError("discriminator prompts take no attribute")
    elif attribute not in ATTRIBUTES:
        raise ConfigError(f"{role} prompts need an attribute in {ATTRIBUTES}, got {attribute!r}")
    if round not in (1, 2):
        raise ConfigError(f"round must be 1 or 2, got {round}")
    if round == 2 and role != "localizer":
        raise ConfigError(f"only the localizer has a second round, not {role}")
    if negative_example is not None and (role != "localizer" or round != 2):
        raise ConfigError("a negative example is only valid on a round-2 localizer prompt")

    if role == "discriminator":
        text = _template("discriminator_round1.txt")
    elif role == "checker":
        text = _template("checker_round1.txt").format(attribute=attribute)
    else:
        text = _template("localizer_round1.txt").format(attribute=attribute)
        if round == 2:
            text = text + "\n\n" + _template("localizer_round2_suffix.txt").format(attribute=attribute)
    return PromptBundle(
        role=role, attribute=attribute, round=round, text=text, negative_example=negative_example
    )


def to_png_bytes(image: np.ndarray, max_side: int | None = None) -> bytes:
    """Encode an image to PNG, optionally capping its longest side."""
    pil = Image.fromarray(np.asarray(image, dtype=np.uint8))
    if max_side is not None and max(pil.size) > max_side:
        scale = max_side / max(pil.size)
        pil = pil.resize((max(1, round(pil.width * scale)), max(1, round(pil.height * scale))))
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    """Load a template resource, dropping its leading '#' header lines."""
    raw = (resources.files("tilkit") / "templates" / name).read_text(encoding="utf-8")
    lines = raw.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            body_start = i + 1
        elif line.strip() == "" and body_start == i:
            body_start = i + 1
        else:
            break
    return "\n".join(lines[body_start:]).strip("\n")


def _resize_to_height(image: np.ndarray, height: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h == height:
        return image
    pil = Image.fromarray(image)
    return np.asarray(pil.resize((max(1, round(w * height / h)), height), Image.LANCZOS))


def _font(size: int) -> ImageFont.ImageFont:
    return ImageFont.load_default(size=size)


def _stamp_label(draw: ImageDraw.ImageDraw, x: int, y: int, text: str, font) -> None:
    pad = 3
    bbox = draw.textbbox((x + pad, y + pad), text, font=font)
    draw.rectangle((x, y, bbox[2] + pad, bbox[3] + pad), fill=(0, 0, 0))
    draw.text((x + pad, y + pad), text, fill=(255, 255, 0), font=font)
