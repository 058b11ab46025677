"""Scoring of predicted interaction transitions against ground truth.

Timestamps are 1-based frame indices. Contact/separation lists are turned
into inclusive in-contact frame ranges, which back the frame-level scores
(MoF, IoU); event-level scores (MAE, SR) ride on a greedy one-to-one
matching computed per attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ContactSegments:
    """Sorted, non-overlapping inclusive [start, end] in-contact ranges."""

    intervals: tuple[tuple[int, int], ...]
    n_obs: int

    def __post_init__(self):
        prev_end = 0
        for start, end in self.intervals:
            if not (1 <= start <= end <= self.n_obs):
                raise ConfigError(f"interval [{start}, {end}] outside [1, {self.n_obs}]")
            if start <= prev_end:
                raise ConfigError(f"interval [{start}, {end}] overlaps previous end {prev_end}")
            prev_end = end

    def mask(self) -> np.ndarray:
        """Boolean per-frame membership, index 0 = frame 1."""
        m = np.zeros(self.n_obs, dtype=bool)
        for start, end in self.intervals:
            m[start - 1:end] = True
        return m


@dataclass(frozen=True)
class EventMatching:
    """One-to-one pred/gt pairs for a single attribute, plus leftovers."""

    pairs: tuple[tuple[int, int], ...]  # (pred_time, gt_time)
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]

    @property
    def n_gt(self) -> int:
        return len(self.pairs) + len(self.unmatched_gt)


def build_segments(contacts, separations, n_obs: int) -> ContactSegments:
    """Pair contact and separation timestamps into in-contact ranges.

    Each contact opens a range closed by the next separation. A separation
    with nothing open implies contact before the video began, so it closes
    a range that opened at frame 1; a still-open range at the end closes at
    n_obs. Simultaneous events are processed contact-first, which keeps the
    output non-overlapping.
    """
    if n_obs < 1:
        raise ConfigError(f"n_obs must be >= 1, got {n_obs}")
    clamp = lambda t: min(max(int(t), 1), n_obs)
    events = sorted(
        [(clamp(t), 0) for t in contacts] + [(clamp(t), 1) for t in separations]
    )
    intervals: list[tuple[int, int]] = []
    open_at: int | None = None
    for t, kind in events:
        if kind == 0:
            if open_at is None:
                open_at = t
        else:
            start = 1 if open_at is None else open_at
            end = max(t, start)
            if intervals and start <= intervals[-1][1]:
                start = intervals[-1][1] + 1
            if start <= end:
                intervals.append((start, end))
            open_at = None
    if open_at is not None:
        start = open_at
        if intervals and start <= intervals[-1][1]:
            start = intervals[-1][1] + 1
        if start <= n_obs:
            intervals.append((start, n_obs))
    return ContactSegments(intervals=tuple(intervals), n_obs=n_obs)


def mof(pred: ContactSegments, gt: ContactSegments) -> float:
    """Fraction of ground-truth in-contact frames the prediction covers."""
    if pred.n_obs != gt.n_obs:
        raise ConfigError(f"n_obs mismatch: {pred.n_obs} vs {gt.n_obs}")
    gt_mask = gt.mask()
    total = int(gt_mask.sum())
    if total == 0:
        return 1.0 if not pred.intervals else 0.0
    return float((pred.mask() & gt_mask).sum() / total)


def iou(pred: ContactSegments, gt: ContactSegments) -> float:
    """Intersection over union of the two in-contact frame sets."""
    if pred.n_obs != gt.n_obs:
        raise ConfigError(f"n_obs mismatch: {pred.n_obs} vs {gt.n_obs}")
    a, b = pred.mask(), gt.mask()
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def match_events(pred_times, gt_times) -> EventMatching:
    """Greedy one-to-one matching by ascending |pred - gt|.

    Distance ties prefer the earlier ground-truth time, then the earlier
    prediction, so matching is deterministic regardless of input order.
    """
    pred = [int(t) for t in pred_times]
    gt = [int(t) for t in gt_times]
    candidates = sorted(
        (abs(p - g), g, p, pi, gi)
        for pi, p in enumerate(pred)
        for gi, g in enumerate(gt)
    )
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _, g, p, pi, gi in candidates:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        pairs.append((p, g))
    pairs.sort(key=lambda pg: pg[1])
    return EventMatching(
        pairs=tuple(pairs),
        unmatched_gt=tuple(g for gi, g in enumerate(gt) if gi not in used_gt),
        unmatched_pred=tuple(p for pi, p in enumerate(pred) if pi not in used_pred),
    )


def mae(matching: EventMatching, n_obs: int | None = None) -> float:
    """Mean |pred - gt| over matched pairs; n_obs stands in when none matched."""
    if not matching.pairs:
        if n_obs is None:
            raise ConfigError("mae with no matched pairs needs n_obs for the worst case")
        return float(n_obs)
    return float(np.mean([abs(p - g) for p, g in matching.pairs]))


def sr(matching: EventMatching, gamma: int) -> float:
    """Share of ground-truth events matched within gamma frames."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    if matching.n_gt == 0:
        return 1.0 if not matching.unmatched_pred else 0.0
    hits = sum(1 for p, g in matching.pairs if abs(p - g) <= gamma)
    return hits / matching.n_gt


@dataclass
class VideoScore:
    """All metrics for one video, both attributes pooled for events."""

    video_id: str
    mof: float
    iou: float
    mae: float
    mae_defaulted: bool
    sr: dict[int, float]
    n_gt_events: int
    n_pred_events: int


def score_video(
    video_id: str,
    pred_contacts,
    pred_separations,
    gt_contacts,
    gt_separations,
    n_obs: int,
    gammas=(1, 3, 5),
) -> VideoScore:
    """Score one video: frame metrics on segments, event metrics pooled."""
    pred_seg = build_segments(pred_contacts, pred_separations, n_obs)
    gt_seg = build_segments(gt_contacts, gt_separations, n_obs)
    m_c = match_events(pred_contacts, gt_contacts)
    m_s = match_events(pred_separations, gt_separations)
    pairs = m_c.pairs + m_s.pairs
    unmatched_gt = m_c.unmatched_gt + m_s.unmatched_gt
    unmatched_pred = m_c.unmatched_pred + m_s.unmatched_pred
    pooled = EventMatching(pairs=pairs, unmatched_gt=unmatched_gt, unmatched_pred=unmatched_pred)
    return VideoScore(
        video_id=video_id,
        mof=mof(pred_seg, gt_seg),
        iou=iou(pred_seg, gt_seg),
        mae=mae(pooled, n_obs=n_obs),
        mae_defaulted=not pooled.pairs,
        sr={int(g): sr(pooled, g) for g in gammas},
        n_gt_events=pooled.n_gt,
        n_pred_events=len(pairs) + len(unmatched_pred),
    )


@dataclass
class MetricsReport:
    """Per-video rows plus the across-video means."""

    rows: list[VideoScore] = field(default_factory=list)

    def add(self, row: VideoScore) -> None:
        self.rows.append(row)

    def aggregate(self) -> dict:
        if not self.rows:
            raise ConfigError("no videos scored")
        gammas = sorted(self.rows[0].sr)
        return {
            "videos": len(self.rows),
            "mof": float(np.mean([r.mof for r in self.rows])),
            "iou": float(np.mean([r.iou for r in self.rows])),
            "mae": float(np.mean([r.mae for r in self.rows])),
            "sr": {g: float(np.mean([r.sr[g] for r in self.rows])) for g in gammas},
            "mae_defaulted_videos": sum(1 for r in self.rows if r.mae_defaulted),
        }

    def render(self) -> str:
        agg = self.aggregate()
        gammas = sorted(agg["sr"])
        header = ["video", "MoF", "IoU", "MAE"] + [f"SR@{g}" for g in gammas]
        lines = ["\t".join(header)]
        for r in self.rows:
            cells = [r.video_id, f"{r.mof:.4f}", f"{r.iou:.4f}",
                     f"{r.mae:.2f}{'*' if r.mae_defaulted else ''}"]
            cells += [f"{r.sr[g]:.4f}" for g in gammas]
            lines.append("\t".join(cells))
        cells = ["mean", f"{agg['mof']:.4f}", f"{agg['iou']:.4f}", f"{agg['mae']:.2f}"]
        cells += [f"{agg['sr'][g]:.4f}" for g in gammas]
        lines.append("\t".join(cells))
        if agg["mae_defaulted_videos"]:
            lines.append(f"* MAE defaulted to n_obs on {agg['mae_defaulted_videos']} video(s) with no matched events")
        return "\n".join(lines)
