"""Anchor-candidate construction and velocity-weighted anchor sampling.

Each zero-acceleration time seeds a plan of candidate frames; anchors are
drawn from the plan without replacement, with weights that favor slower
hand motion: w(V_m) = exp(-lambda * V_m) / sum_n exp(-lambda * V_n).

Randomness comes from numpy's PCG64 generator (`numpy.random.default_rng`),
so a fixed seed reproduces the draw sequence bit-for-bit on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CandidatesExhausted, ConfigError


@dataclass
class SamplerConfig:
    """Knobs of the anchor sampler; `lambda_` is per (m/s)."""

    n_ac: int = 5
    lambda_: float = 1.0
    seed: int = 0
    n_adj: int = 2

    def __post_init__(self):
        if self.n_ac < 1:
            raise ConfigError(f"n_ac must be >= 1, got {self.n_ac}")
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if self.n_adj < 2:
            raise ConfigError(f"n_adj must be >= 2, got {self.n_adj}")


@dataclass
class AnchorPlan:
    """Candidate frames around one zero-acceleration time.

    `remaining` and `consumed` partition `candidates`; a draw moves one
    frame from the former to the latter. `resolved` flips once a valid
    interaction transition was localized from this plan.
    """

    center_time: float
    candidates: tuple[int, ...]
    remaining: list[int] = field(default_factory=list)
    consumed: list[int] = field(default_factory=list)
    resolved: bool = False

    def __post_init__(self):
        if not self.remaining and not self.consumed:
            self.remaining = list(self.candidates)


def build_candidates(center_time: float, n_ac: int, n_obs: int) -> AnchorPlan:
    """Symmetric window of up to n_ac frames around a continuous time.

    The center frame is the nearest integer (ties round half up). The
    window is clamped to [1, n_obs] and deduplicated, which may shrink it
    near the video boundaries. For even n_ac the raw symmetric window holds
    one frame too many; the endpoint farther from `center_time` is dropped.
    """
    if not (1 <= center_time <= n_obs):
        raise ConfigError(f"center_time {center_time} outside [1, {n_obs}]")
    if n_ac < 1:
        raise ConfigError(f"n_ac must be >= 1, got {n_ac}")
    center = math.floor(center_time + 0.5)
    half = n_ac // 2
    frames = [min(max(f, 1), n_obs) for f in range(center - half, center + half + 1)]
    window = sorted(set(frames))
    while len(window) > n_ac:
        if abs(window[0] - center_time) >= abs(window[-1] - center_time):
            window.pop(0)
        else:
            window.pop()
    return AnchorPlan(center_time=float(center_time), candidates=tuple(window))


def sampling_weights(candidate_speeds: np.ndarray, lambda_: float) -> np.ndarray:
    """Normalized exp(-lambda * V) weights, computed with max-subtraction.

    Slower candidates get larger weights; lambda = 0 yields the uniform
    distribution. Weights sum to 1 within 1e-12.
    """
    speeds = np.asarray(candidate_speeds, dtype=float)
    if speeds.size == 0:
        raise ConfigError("cannot weight an empty candidate list")
    if not np.all(np.isfinite(speeds)):
        raise ConfigError("candidate speeds must be finite")
    logits = -lambda_ * speeds
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def sample_anchor(
    plan: AnchorPlan,
    speeds: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> int:
    """Draw one anchor frame from the plan's remaining candidates.

    Weights are recomputed over the remaining subset on every draw, and the
    drawn frame moves to `consumed` so it can never be drawn again.
    `speeds` is the per-frame speed series of the whole video (1-based
    frame f at speeds[f - 1]).
    """
    if not plan.remaining:
        raise CandidatesExhausted(f"plan at t={plan.center_time} has no candidates left")
    candidate_speeds = np.array([speeds[f - 1] for f in plan.remaining], dtype=float)
    weights = sampling_weights(candidate_speeds, config.lambda_)
    anchor = int(rng.choice(plan.remaining, p=weights))
    plan.remaining.remove(anchor)
    plan.consumed.append(anchor)
    return anchor


def fallback_uniform(n_obs: int, n_adj: int) -> list[int]:
    """Uniformly spaced anchor frames for videos without a speed valley.

    The spacing equals the frame count of one grid image (n_adj squared).
    """
    if n_obs < 1:
        raise ConfigError(f"n_obs must be >= 1, got {n_obs}")
    return list(range(1, n_obs + 1, n_adj * n_adj))
