"""Synthetic-transformation evaluation: warp an image, match, score against ground truth."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .detect import fast_detect, orient_all
from .errors import NoKeypoints
from .image import Image, Similarity, warp_similarity
from .latch import describe_matrix
from .match import distance_matrix, match_brute_force
from .pattern import TripletPattern
from .synthetic import perturb

DEFAULT_RADIUS = 2.0


@dataclass
class EvalReport:
    keypoint_count: int
    transformed_keypoint_count: int
    matchable_count: int
    matched_count: int
    correct_count: int
    recall: float
    precision: float
    median_true_distance: float | None
    median_random_distance: float | None
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - t0) * 1e6


def transform_image(image: Image, rotate_deg: float, noise: float, brightness: float, seed: int) -> tuple[Image, Similarity]:
    """Rotate about the center, then add seeded noise and a brightness offset."""
    angle = math.radians(rotate_deg)
    warped = warp_similarity(image, angle, 1.0, 0.0, 0.0)
    if noise or brightness:
        warped = perturb(warped, noise, brightness, np.random.default_rng(seed))
    return warped, Similarity.about_center(image, angle)


def evaluate(
    image: Image,
    pattern: TripletPattern,
    rotate_deg: float = 0.0,
    noise: float = 0.0,
    brightness: float = 0.0,
    threshold: float = 20.0,
    seed: int = 0,
    radius: float = DEFAULT_RADIUS,
    workers: int | None = None,
) -> EvalReport:
    """Detect, describe and match ``image`` against a transformed copy of itself.

    A match is correct when the chosen transformed keypoint lies within
    ``radius`` of the original keypoint's true mapped position; an original
    keypoint is matchable when any transformed keypoint lies that close.
    """
    for name, value in (("rotate", rotate_deg), ("noise", noise), ("brightness", brightness)):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")
    timings = dict.fromkeys(("detect", "orient", "describe", "match"), 0.0)
    warped, sim = transform_image(image, rotate_deg, noise, brightness, seed)

    described = []
    for img in (image, warped):
        kps, dt = _timed(fast_detect, img, threshold, True)
        timings["detect"] += dt
        kps, dt = _timed(orient_all, img, kps)
        timings["orient"] += dt
        (kept, mat), dt = _timed(describe_matrix, img, kps, pattern, workers)
        timings["describe"] += dt
        described.append((kept, mat))
    (kp_a, desc_a), (kp_b, desc_b) = described
    if not kp_a or not kp_b:
        raise NoKeypoints(f"{len(kp_a)} original / {len(kp_b)} transformed keypoints after margin filtering")

    matches, dt = _timed(match_brute_force, desc_a, desc_b, None, workers)
    timings["match"] += dt

    xa = np.array([[k.x, k.y] for k in kp_a])
    xb = np.array([[k.x, k.y] for k in kp_b])
    mx, my = sim.forward(xa[:, 0], xa[:, 1])
    gap = np.hypot(mx[:, None] - xb[None, :, 0], my[:, None] - xb[None, :, 1])
    truth = np.argmin(gap, axis=1)
    matchable = gap[np.arange(len(kp_a)), truth] <= radius

    correct = sum(1 for m in matches if gap[m.probe_index, m.gallery_index] <= radius)
    dist = distance_matrix(desc_a, desc_b)
    true_d = dist[np.flatnonzero(matchable), truth[matchable]]
    others = np.ones(dist.shape, dtype=bool)
    others[np.flatnonzero(matchable), truth[matchable]] = False
    n_matchable = int(np.count_nonzero(matchable))

    return EvalReport(
        keypoint_count=len(kp_a),
        transformed_keypoint_count=len(kp_b),
        matchable_count=n_matchable,
        matched_count=len(matches),
        correct_count=correct,
        recall=correct / n_matchable if n_matchable else 0.0,
        precision=correct / len(matches) if matches else 0.0,
        median_true_distance=float(np.median(true_d)) if true_d.size else None,
        median_random_distance=float(np.median(dist[others])) if others.any() else None,
        timings={k: round(v, 1) for k, v in timings.items()},
    )
