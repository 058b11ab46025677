"""The temporal-interaction-localization engine and its baselines.

Orchestrates the full loop per video: hand dynamics -> zero-acceleration
plans -> weighted anchor sampling -> discriminator -> round-1 localizer ->
checker -> optional round-2 refinement -> interaction transition
timestamps. Also hosts the fingertip-distance threshold baseline and the
single-grid greedy VLM baseline.

All frame indices are 1-based; a "plan" is one candidate set around one
zero-acceleration time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sampler as _sampler
from .errors import (
    BackendUnavailableError,
    CandidatesExhausted,
    ConfigError,
    MissingHandError,
    UnparseableResponseError,
    WindowTooLargeError,
)
from .hand_motion import (
    DynamicsProfile,
    default_sg_params,
    displacement_speeds,
    dynamics_profile,
    identity_poses,
    lift_wrist_track,
    register_frames,
    speed_series,
    to_global,
)
from .sampler import AnchorPlan, SamplerConfig
from .visual_prompt import (
    AdjacentWindow,
    adjacent_window,
    boundary_pair,
    build_prompt,
    grid_image,
    resolve_hand_box,
    to_png_bytes,
)
from .vlm_gateway import (
    VlmGateway,
    VlmRequest,
    parse_attribute,
    parse_check,
    parse_tile_index,
)

log = logging.getLogger(__name__)

MODES = ("egoloc", "threshold", "greedy")
SAMPLING_MODES = ("sass-3d", "sass-2d", "random")


@dataclass
class PipelineConfig:
    """Everything that shapes one localization run.

    `max_resamples` bounds extra anchor draws after a "neither" verdict
    (None means every candidate may be tried once). `feedback_rounds` is
    fixed at 1: a rejected first round gets exactly one refinement whose
    answer stands unconditionally.
    """

    mode: str = "egoloc"
    sampling: str = "sass-3d"
    n_adj: int = 2
    n_ac: int = 5
    lambda_: float = 1.0
    seed: int = 0
    max_resamples: int | None = None
    feedback_rounds: int = 1
    sg_window: int | None = None
    sg_order: int | None = None
    eps_w: int = 10
    eps_h: int = 10
    window_stride: int = 1
    boundary_height: int = 336
    max_image_side: int = 1024
    temperature: float = 0.0
    max_tokens: int = 1024
    assume_static_camera: bool = False
    voxel: float = 0.01
    pixel_stride: int = 2
    tip_threshold: float = 0.03
    dump_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.n_adj not in (2, 3, 4):
            raise ConfigError(f"n_adj must be 2, 3, or 4, got {self.n_adj}")
        if self.n_ac < 1:
            raise ConfigError(f"n_ac must be >= 1, got {self.n_ac}")
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if self.feedback_rounds != 1:
            raise ConfigError("feedback_rounds is fixed at 1")
        if self.max_resamples is not None and self.max_resamples < 0:
            raise ConfigError(f"max_resamples must be >= 0, got {self.max_resamples}")

    @property
    def resample_budget(self) -> int:
        return self.n_ac if self.max_resamples is None else self.max_resamples

    def digest(self) -> str:
        """Stable hash of the semantic fields (output paths excluded)."""
        d = dataclasses.asdict(self)
        d.pop("dump_dir")
        payload = json.dumps(d, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EventRecord:
    """One localized interaction transition and how it was reached."""

    plan_id: int
    anchor: int
    attribute: str
    window: AdjacentWindow
    round1_time: int
    checker_verdict: str
    round2_time: int | None
    final_time: int
    resample_count: int
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        expected = self.round2_time if self.checker_verdict == "reject" else self.round1_time
        if self.final_time != expected:
            raise ConfigError(
                f"final_time {self.final_time} contradicts verdict {self.checker_verdict}"
            )
        if self.final_time not in self.window.frames:
            raise ConfigError(f"final_time {self.final_time} outside window {self.window.frames}")


@dataclass
class Diagnostics:
    """Run health counters; `partial` marks a backend-truncated result."""

    plans_total: int = 0
    plans_resolved: int = 0
    plans_unresolved: int = 0
    plans_skipped_proximity: int = 0
    draws_total: int = 0
    unparseable_attribute: int = 0
    unparseable_tile: int = 0
    unparseable_check: int = 0
    duplicates_suppressed: int = 0
    registration_fallbacks: int = 0
    degraded_dynamics: bool = False
    partial: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class TILResult:
    """Sorted transition timestamps plus the records that produced them."""

    contacts: tuple[int, ...]
    separations: tuple[int, ...]
    events: tuple[EventRecord, ...]
    diagnostics: Diagnostics
    video_id: str = ""
    n_obs: int = 0
    mode: str = "egoloc"
    sampling: str = "sass-3d"
    config_digest: str = ""


def localize(video, config: PipelineConfig, gateway: VlmGateway | None = None) -> TILResult:
    """Dispatch a video to the configured mode."""
    if config.mode == "egoloc":
        if gateway is None:
            raise ConfigError("egoloc mode needs a VLM gateway")
        return localize_video(video, config, gateway)
    if config.mode == "greedy":
        if gateway is None:
            raise ConfigError("greedy mode needs a VLM gateway")
        return greedy_vlm(video, config, gateway)
    if video.index_tip_3d is None or video.thumb_tip_3d is None:
        raise MissingHandError("threshold mode needs index_tip_3d and thumb_tip_3d tracks")
    return threshold_baseline(
        video.index_tip_3d,
        video.thumb_tip_3d,
        config.tip_threshold,
        video_id=video.id,
        n_obs=video.n_obs,
        config_digest=config.digest(),
    )


def localize_video(video, config: PipelineConfig, gateway: VlmGateway) -> TILResult:
    """Run the full sampling / reasoning / feedback loop on one video.

    Plans are visited in ascending time order. A plan resolves into at most
    one timestamp; plans whose center lies within n_adj^2 frames of an
    already-resolved timestamp are skipped as near-duplicates of the same
    physical transition.
    """
    n_obs = video.n_obs
    span = (config.n_adj ** 2 - 1) * config.window_stride + 1
    if span > n_obs:
        raise ConfigError(
            f"grid needs {span} frames (n_adj={config.n_adj}, stride={config.window_stride}) "
            f"but the video has {n_obs}"
        )
    diag = Diagnostics()
    rng = np.random.default_rng(config.seed)
    speeds, profile = _speed_series(video, config, diag)
    plans = _build_plans(speeds, profile, n_obs, config, rng, diag)
    s_cfg = SamplerConfig(
        n_ac=config.n_ac, lambda_=config.lambda_, seed=config.seed, n_adj=config.n_adj
    )

    contacts: list[int] = []
    separations: list[int] = []
    events: list[EventRecord] = []
    resolved_times: list[int] = []
    proximity = config.n_adj ** 2
    dump = _PromptDump(config.dump_dir, video.id) if config.dump_dir else None

    try:
        for plan_id, plan in enumerate(plans, start=1):
            diag.plans_total += 1
            if any(abs(plan.center_time - t) < proximity for t in resolved_times):
                diag.plans_skipped_proximity += 1
                continue
            outcome = _run_plan(video, config, gateway, plan, plan_id, speeds, s_cfg, rng, diag, dump)
            if outcome is None:
                diag.plans_unresolved += 1
                continue
            plan.resolved = True
            resolved_times.append(outcome.final_time)
            target = contacts if outcome.attribute == "contact" else separations
            if outcome.final_time in target:
                diag.duplicates_suppressed += 1
                diag.notes.append(
                    f"plan {plan_id}: duplicate {outcome.attribute} at frame "
                    f"{outcome.final_time} suppressed"
                )
            else:
                target.append(outcome.final_time)
                events.append(outcome)
            diag.plans_resolved += 1
    except BackendUnavailableError as exc:
        diag.partial = True
        diag.notes.append(f"backend failure truncated the run: {exc}")

    return TILResult(
        contacts=tuple(sorted(contacts)),
        separations=tuple(sorted(separations)),
        events=tuple(events),
        diagnostics=diag,
        video_id=video.id,
        n_obs=n_obs,
        mode=config.mode,
        sampling=config.sampling,
        config_digest=config.digest(),
    )


def _run_plan(
    video,
    config: PipelineConfig,
    gateway: VlmGateway,
    plan: AnchorPlan,
    plan_id: int,
    speeds: np.ndarray,
    s_cfg: SamplerConfig,
    rng: np.random.Generator,
    diag: Diagnostics,
    dump,
) -> EventRecord | None:
    """Drive one plan to an EventRecord, or None when every draw said neither."""
    attribute = None
    anchor = None
    window = None
    flags: list[str] = []
    draws = 0
    while True:
        if draws > 0 and draws - 1 >= config.resample_budget:
            break
        try:
            anchor = _sampler.sample_anchor(plan, speeds, s_cfg, rng)
        except CandidatesExhausted:
            break
        draws += 1
        diag.draws_total += 1
        window = adjacent_window(anchor, config.n_adj, video.n_obs, config.window_stride)
        boundary = boundary_pair(
            window,
            video.load_frame,
            lambda f: _hand_box(video, f),
            eps_w=config.eps_w,
            eps_h=config.eps_h,
            height=config.boundary_height,
        )
        bundle = build_prompt("discriminator", None)
        raw = gateway.query(
            _request(config, (boundary,), bundle.text, role="discriminator")
        )
        if dump:
            dump.save(plan_id, draws, "discriminator", (boundary,), bundle.text, raw)
        try:
            verdict = parse_attribute(raw).value
        except UnparseableResponseError:
            diag.unparseable_attribute += 1
            flags.append(f"draw {draws}: attribute unparseable, treated as neither")
            verdict = "neither"
        if verdict != "neither":
            attribute = verdict
            break
    if attribute is None:
        diag.notes.append(
            f"plan {plan_id} (t={plan.center_time:g}): {draws} draw(s), no attribute found"
        )
        return None

    grid = grid_image(window, video.load_frame)
    bundle1 = build_prompt("localizer", attribute, round=1)
    raw1 = gateway.query(_request(config, (grid.image,), bundle1.text, role="localizer"))
    if dump:
        dump.save(plan_id, draws, "localizer_r1", (grid.image,), bundle1.text, raw1)
    try:
        tile1 = parse_tile_index(raw1, len(window.frames)).value
    except UnparseableResponseError:
        diag.unparseable_tile += 1
        flags.append("round 1: tile unparseable, fell back to the anchor tile")
        tile1 = window.anchor_position
    round1_time = window.frames[tile1 - 1]

    check_img = video.load_frame(round1_time)
    bundle_c = build_prompt("checker", attribute)
    raw_c = gateway.query(_request(config, (check_img,), bundle_c.text, role="checker"))
    if dump:
        dump.save(plan_id, draws, "checker", (check_img,), bundle_c.text, raw_c)
    try:
        check = parse_check(raw_c).value
    except UnparseableResponseError:
        diag.unparseable_check += 1
        flags.append("checker unparseable, round 1 accepted conservatively")
        check = "accept"

    round2_time = None
    if check == "reject":
        negative = video.load_frame(round1_time)
        bundle2 = build_prompt("localizer", attribute, round=2, negative_example=negative)
        raw2 = gateway.query(
            _request(config, (grid.image, negative), bundle2.text, role="localizer", round=2)
        )
        if dump:
            dump.save(plan_id, draws, "localizer_r2", (grid.image, negative), bundle2.text, raw2)
        try:
            tile2 = parse_tile_index(raw2, len(window.frames)).value
        except UnparseableResponseError:
            diag.unparseable_tile += 1
            flags.append("round 2: tile unparseable, fell back to the anchor tile")
            tile2 = window.anchor_position
        round2_time = window.frames[tile2 - 1]

    final_time = round2_time if check == "reject" else round1_time
    return EventRecord(
        plan_id=plan_id,
        anchor=anchor,
        attribute=attribute,
        window=window,
        round1_time=round1_time,
        checker_verdict=check,
        round2_time=round2_time,
        final_time=final_time,
        resample_count=draws - 1,
        flags=tuple(flags),
    )


def compute_profile(video, config: PipelineConfig) -> DynamicsProfile:
    """The dynamics profile the sampler would see under this config."""
    if config.sampling == "random":
        raise ConfigError("random sampling uses no dynamics profile")
    _, profile = _speed_series(video, config, Diagnostics())
    return profile


def _speed_series(video, config: PipelineConfig, diag: Diagnostics):
    """Per-frame speeds for the configured sampling mode, plus the profile."""
    if config.sampling == "random":
        return np.zeros(video.n_obs), None
    dt = 1.0 / video.fps
    if config.sampling == "sass-2d":
        raw = displacement_speeds(np.asarray(video.wrist, dtype=float), dt)
    else:
        if not video.has_depth:
            raise ConfigError("sass-3d sampling needs depth maps; use sass-2d or random")
        depth_maps = [video.load_depth(t) for t in range(1, video.n_obs + 1)]
        track = lift_wrist_track(np.asarray(video.wrist, dtype=float), depth_maps, video.intrinsics)
        if not track.valid.all():
            bad = int((~track.valid).sum())
            diag.notes.append(f"{bad} frame(s) with unrecoverable wrist depth were interpolated")
        if config.assume_static_camera:
            poses = identity_poses(video.n_obs)
        else:
            poses = register_frames(
                depth_maps,
                video.intrinsics,
                voxel=config.voxel,
                pixel_stride=config.pixel_stride,
            )
            diag.registration_fallbacks = len(poses.fallback_frames)
        track = to_global(track, poses)
        raw = speed_series(track, dt)
    window, order = _sg_params(config, video.fps, video.n_obs)
    if window is None:
        diag.degraded_dynamics = True
        diag.notes.append("video too short for smoothing; spline fitted on raw speeds")
        from .hand_motion import fit_velocity_spline, zero_acceleration_times

        spline = fit_velocity_spline(raw, dt)
        profile = DynamicsProfile(
            speeds=raw, smoothed=raw, spline=spline,
            zero_accel_times=zero_acceleration_times(spline), dt=dt, degraded=True,
        )
    else:
        profile = dynamics_profile(raw, dt, window, order)
        diag.degraded_dynamics = profile.degraded
    return profile.smoothed, profile


def _sg_params(config: PipelineConfig, fps: float, n_obs: int):
    """Resolve smoothing parameters, shrinking the window to fit short videos."""
    window, order = config.sg_window, config.sg_order
    if window is None or order is None:
        dw, do = default_sg_params(fps)
        window = window if window is not None else dw
        order = order if order is not None else do
    if window > n_obs:
        window = n_obs if n_obs % 2 == 1 else n_obs - 1
    if window <= order:
        order = max(window - 1, 1)
    if window < 3:
        return None, None
    return window, order


def _build_plans(speeds, profile, n_obs, config, rng, diag) -> list[AnchorPlan]:
    """Plans in ascending center order for the configured sampling mode."""
    if config.sampling == "random":
        k = len(_sampler.fallback_uniform(n_obs, config.n_adj))
        size = min(config.n_ac, n_obs)
        plans = []
        for _ in range(k):
            frames = sorted(int(f) for f in rng.choice(n_obs, size=size, replace=False) + 1)
            plans.append(
                AnchorPlan(center_time=float(frames[len(frames) // 2]), candidates=tuple(frames))
            )
        plans.sort(key=lambda p: p.center_time)
        return plans
    if profile.zero_accel_times:
        return [
            _sampler.build_candidates(t, config.n_ac, n_obs) for t in profile.zero_accel_times
        ]
    diag.notes.append("no interior velocity minima; uniform fallback anchors")
    return [
        AnchorPlan(center_time=float(f), candidates=(f,))
        for f in _sampler.fallback_uniform(n_obs, config.n_adj)
    ]


def _hand_box(video, frame: int):
    """Detector box if annotated, else a rectangle around the keypoints/wrist."""
    keypoints = video.keypoints_at(frame)
    if keypoints is None or len(keypoints) == 0:
        keypoints = np.asarray(video.wrist, dtype=float)[frame - 1:frame]
    return resolve_hand_box(video.box_at(frame), keypoints)


def _request(config: PipelineConfig, images, text: str, role: str, round: int = 1) -> VlmRequest:
    return VlmRequest(
        images=tuple(to_png_bytes(img, config.max_image_side) for img in images),
        text=text,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        role=role,
        round=round,
    )


class _PromptDump:
    """Writes every prompt (images + text + response) under one directory."""

    def __init__(self, root: str, video_id: str):
        self.dir = Path(root) / video_id
        self.dir.mkdir(parents=True, exist_ok=True)

    def save(self, plan_id: int, draw: int, stage: str, images, text: str, response: str) -> None:
        stem = f"plan{plan_id:03d}_draw{draw:02d}_{stage}"
        for i, img in enumerate(images):
            (self.dir / f"{stem}_img{i}.png").write_bytes(to_png_bytes(img))
        (self.dir / f"{stem}.txt").write_text(
            text + "\n\n--- response ---\n" + response, encoding="utf-8"
        )


def threshold_baseline(
    index_tips,
    thumb_tips,
    threshold: float,
    video_id: str = "",
    n_obs: int | None = None,
    config_digest: str = "",
) -> TILResult:
    """Fingertip-pinch distance thresholding with a 10% hysteresis band.

    Contact fires on the first frame the index-thumb distance drops below
    the threshold; separation fires once it climbs back above 1.1x the
    threshold. Frames with non-finite tips keep the previous state.
    """
    a = np.asarray(index_tips, dtype=float)
    b = np.asarray(thumb_tips, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise MissingHandError(f"tip tracks must both be (n, 3); got {a.shape} and {b.shape}")
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    n = n_obs if n_obs is not None else len(a)
    dist = np.linalg.norm(a - b, axis=1)
    contacts: list[int] = []
    separations: list[int] = []
    in_contact = False
    for t in range(len(dist)):
        if not np.isfinite(dist[t]):
            continue
        if not in_contact and dist[t] < threshold:
            contacts.append(t + 1)
            in_contact = True
        elif in_contact and dist[t] >= 1.1 * threshold:
            separations.append(t + 1)
            in_contact = False
    events = tuple(
        _synthetic_event(i + 1, t, attr)
        for i, (t, attr) in enumerate(
            sorted([(t, "contact") for t in contacts] + [(t, "separation") for t in separations])
        )
    )
    return TILResult(
        contacts=tuple(contacts),
        separations=tuple(separations),
        events=events,
        diagnostics=Diagnostics(
            plans_total=len(events), plans_resolved=len(events)
        ),
        video_id=video_id,
        n_obs=n,
        mode="threshold",
        sampling="sass-3d",
        config_digest=config_digest,
    )


def greedy_vlm(video, config: PipelineConfig, gateway: VlmGateway) -> TILResult:
    """One grid over the whole video, one localizer query per attribute.

    The video is subsampled at a uniform stride so n_adj^2 tiles cover it;
    short videos repeat the last frame to fill the grid. No dynamics, no
    sampling, no feedback.
    """
    n_obs = video.n_obs
    n_tiles = config.n_adj ** 2
    stride = max(1, (n_obs - 1) // (n_tiles - 1)) if n_tiles > 1 else 1
    frames = list(range(1, n_obs + 1, stride))[:n_tiles]
    while len(frames) < n_tiles:
        frames.append(frames[-1])
    window = AdjacentWindow(frames=tuple(frames), anchor_position=1)
    grid = grid_image(window, video.load_frame)
    diag = Diagnostics(plans_total=2)
    dump = _PromptDump(config.dump_dir, video.id) if config.dump_dir else None

    contacts: list[int] = []
    separations: list[int] = []
    events: list[EventRecord] = []
    try:
        for plan_id, attribute in enumerate(("contact", "separation"), start=1):
            bundle = build_prompt("localizer", attribute, round=1)
            raw = gateway.query(_request(config, (grid.image,), bundle.text, role="localizer"))
            if dump:
                dump.save(plan_id, 1, f"localizer_{attribute}", (grid.image,), bundle.text, raw)
            flags: tuple[str, ...] = ()
            try:
                tile = parse_tile_index(raw, n_tiles).value
            except UnparseableResponseError:
                diag.unparseable_tile += 1
                flags = ("tile unparseable, fell back to tile 1",)
                tile = 1
            final = window.frames[tile - 1]
            (contacts if attribute == "contact" else separations).append(final)
            events.append(
                EventRecord(
                    plan_id=plan_id,
                    anchor=final,
                    attribute=attribute,
                    window=window,
                    round1_time=final,
                    checker_verdict="none",
                    round2_time=None,
                    final_time=final,
                    resample_count=0,
                    flags=flags,
                )
            )
            diag.plans_resolved += 1
    except BackendUnavailableError as exc:
        diag.partial = True
        diag.notes.append(f"backend failure truncated the run: {exc}")

    return TILResult(
        contacts=tuple(sorted(contacts)),
        separations=tuple(sorted(separations)),
        events=tuple(events),
        diagnostics=diag,
        video_id=video.id,
        n_obs=n_obs,
        mode="greedy",
        sampling=config.sampling,
        config_digest=config.digest(),
    )


def _synthetic_event(plan_id: int, t: int, attribute: str) -> EventRecord:
    """Minimal record for baselines that do not run the sampling loop."""
    return EventRecord(
        plan_id=plan_id,
        anchor=t,
        attribute=attribute,
        window=AdjacentWindow(frames=(t,), anchor_position=1),
        round1_time=t,
        checker_verdict="none",
        round2_time=None,
        final_time=t,
        resample_count=0,
    )


def run_trials(video, config: PipelineConfig, gateway_factory, trials: int) -> list[TILResult]:
    """Repeat localization with per-trial seeds seed, seed+1, ..."""
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    results = []
    for i in range(trials):
        cfg = dataclasses.replace(config, seed=config.seed + i)
        results.append(localize(video, cfg, gateway_factory()))
    return results
