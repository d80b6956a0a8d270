"""FAST-9 corner detection, non-maximum suppression and intensity-centroid orientation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import ImageTooSmall, Malformed, OutOfBounds, TooCloseToBorder
from .image import Image, bilinear_many

DEFAULT_THRESHOLD = 20.0
ORIENT_RADIUS = 15
BORDER = 3


@dataclass(frozen=True)
class Keypoint:
    """Oriented keypoint. ``theta`` is in radians, in ``(-pi, pi]``."""

    x: float
    y: float
    theta: float = 0.0
    score: float = 0.0


def corner_score(image: Image, x: int, y: int, threshold: float) -> float:
    """FAST response at pixel ``(x, y)``.

    The sum of ``|I(q) - I(p)| - threshold`` over the contiguous arc of at
    least 9 circle pixels that are all brighter (or all darker) than the
    center by more than ``threshold``; 0 if there is no such arc.
    """
    if not (BORDER <= x < image.width - BORDER and BORDER <= y < image.height - BORDER):
        raise OutOfBounds(f"({x}, {y}) is within {BORDER} px of the image border")
    return float(
        _kernels.segment_score(
            image.pixels, int(x), int(y), float(threshold),
            _kernels.CIRCLE_DX, _kernels.CIRCLE_DY, _kernels.ARC_LENGTH,
        )
    )


def score_image(image: Image, threshold: float) -> np.ndarray:
    """Corner response for every pixel; the 3-pixel border is left at 0."""
    return _kernels.score_map(
        image.pixels, float(threshold), _kernels.CIRCLE_DX, _kernels.CIRCLE_DY, _kernels.ARC_LENGTH
    )


def suppress_non_maxima(scores: np.ndarray) -> np.ndarray:
    """Boolean mask of strict 3x3 local maxima.

    Equal scores are resolved in favor of the lexicographically smallest
    ``(y, x)``, so no two survivors are 8-neighbors.
    """
    h, w = scores.shape
    padded = np.zeros((h + 2, w + 2), dtype=scores.dtype)
    padded[1:-1, 1:-1] = scores
    keep = scores > 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            neighbor = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            if (dy, dx) < (0, 0):
                keep &= neighbor < scores
            else:
                keep &= neighbor <= scores
    return keep


def fast_detect(image: Image, threshold: float = DEFAULT_THRESHOLD, do_nms: bool = True) -> list[Keypoint]:
    """Detect FAST-9 corners, sorted by ``(y, x)``; ``theta`` is left at 0."""
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    if image.width < 7 or image.height < 7:
        raise ImageTooSmall(f"FAST needs at least 7x7 pixels, got {image.width}x{image.height}")
    scores = score_image(image, threshold)
    keep = suppress_non_maxima(scores) if do_nms else scores > 0
    ys, xs = np.nonzero(keep)
    return [Keypoint(float(x), float(y), 0.0, float(scores[y, x])) for y, x in zip(ys, xs)]


def _disc_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    r = int(radius)
    v, u = np.mgrid[-r : r + 1, -r : r + 1]
    inside = u * u + v * v <= r * r
    return u[inside].astype(np.float64), v[inside].astype(np.float64)


def _wrap_angle(theta: float) -> float:
    # atan2 may return -pi; the keypoint convention is (-pi, pi]
    return math.pi if theta <= -math.pi else theta


def orient(image: Image, keypoint: Keypoint, radius: int = ORIENT_RADIUS) -> Keypoint:
    """Set ``theta = atan2(m01, m10)`` from intensity moments over a disc."""
    x, y = keypoint.x, keypoint.y
    if x - radius < 0 or y - radius < 0 or x + radius > image.width - 1 or y + radius > image.height - 1:
        raise TooCloseToBorder(f"orientation disc of radius {radius} around ({x}, {y}) leaves the image")
    u, v = _disc_offsets(radius)
    values = bilinear_many(image.pixels, x + u, y + v)
    m10 = float(np.dot(u, values))
    m01 = float(np.dot(v, values))
    theta = 0.0 if m10 == 0.0 and m01 == 0.0 else _wrap_angle(math.atan2(m01, m10))
    return replace(keypoint, theta=theta)


def orient_all(image: Image, keypoints: Iterable[Keypoint], radius: int = ORIENT_RADIUS) -> list[Keypoint]:
    """Orient every keypoint whose disc fits; others are dropped."""
    out = []
    for kp in keypoints:
        try:
            out.append(orient(image, kp, radius))
        except TooCloseToBorder:
            continue
    return out


def detect_and_orient(image: Image, threshold: float = DEFAULT_THRESHOLD, do_nms: bool = True) -> list[Keypoint]:
    return orient_all(image, fast_detect(image, threshold, do_nms))


KEYPOINT_HEADER = "x\ty\ttheta\tscore"


def format_keypoints(keypoints: Iterable[Keypoint]) -> bytes:
    """TSV with a header line; 9 significant digits, LF endings."""
    lines = [KEYPOINT_HEADER]
    lines += [f"{k.x:.9g}\t{k.y:.9g}\t{k.theta:.9g}\t{k.score:.9g}" for k in keypoints]
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_keypoints(buf: bytes) -> list[Keypoint]:
    out = []
    for lineno, line in enumerate(buf.decode("ascii").splitlines(), 1):
        if not line.strip() or (lineno == 1 and line.strip() == KEYPOINT_HEADER):
            continue
        fields = line.split("\t")
        try:
            x, y, theta, score = (float(f) for f in fields)
        except ValueError as exc:
            raise Malformed(f"keypoint line {lineno}: {line!r}") from exc
        out.append(Keypoint(x, y, theta, score))
    return out
