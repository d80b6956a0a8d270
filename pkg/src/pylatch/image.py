"""Grayscale raster type, binary PGM I/O, bilinear sampling and similarity warps.

Pixel centers sit at integer coordinates ``0..width-1`` / ``0..height-1``.
Intensities are stored as float64 in ``[0, 255]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadScale, Malformed, NotPGM, OutOfBounds, Truncated, UnsupportedDepth


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable grayscale image.

    ``pixels`` is a read-only ``(height, width)`` float64 array; ``data``
    exposes the same values flattened in row-major order.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise Malformed(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise Malformed("image contains non-finite intensities")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise Malformed("image intensities must lie in [0, 255]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_data(cls, width: int, height: int, data) -> Image:
        values = np.asarray(data, dtype=np.float64).ravel()
        if values.size != width * height:
            raise Malformed(f"expected {width * height} intensities, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.ravel()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self) -> str:
        return f"Image(width={self.width}, height={self.height})"


def _pgm_header(buf: bytes) -> tuple[list[bytes], int]:
    """Read the four header tokens, skipping ``#`` comments.

    Returns the tokens and the offset of the first payload byte.
    """
    tokens: list[bytes] = []
    i, n = 0, len(buf)
    while len(tokens) < 4:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise Truncated("PGM header ended early")
        if buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        tokens.append(buf[start:i])
        if len(tokens) == 1 and tokens[0] != b"P5":
            raise NotPGM(f"bad magic {tokens[0][:8]!r}, expected b'P5'")
    # exactly one whitespace byte separates maxval from the raster
    if i >= n or not buf[i : i + 1].isspace():
        raise Truncated("missing whitespace after PGM maxval")
    return tokens, i + 1


def load_pgm(buf: bytes) -> Image:
    """Decode an 8-bit binary PGM (``P5``) byte string."""
    if not buf.startswith(b"P5"):
        raise NotPGM(f"bad magic {bytes(buf[:2])!r}, expected b'P5'")
    tokens, offset = _pgm_header(bytes(buf))
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise Malformed(f"non-numeric PGM header token in {tokens[1:]!r}") from exc
    if width < 1 or height < 1 or maxval < 1:
        raise Malformed(f"invalid PGM header values {width}x{height} maxval={maxval}")
    if maxval > 255:
        raise UnsupportedDepth(f"maxval {maxval} > 255 (16-bit PGM is not supported)")
    payload = buf[offset : offset + width * height]
    if len(payload) < width * height:
        raise Truncated(f"expected {width * height} payload bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return Image(data.reshape(height, width))


def save_pgm(image: Image) -> bytes:
    """Encode ``image`` as binary PGM, rounding half away from zero."""
    # intensities are non-negative, so floor(v + 0.5) is round-half-away
    raster = np.floor(image.pixels + 0.5).astype(np.uint8)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + raster.tobytes()


def sample_bilinear(image: Image, x: float, y: float) -> float:
    """Bilinear intensity at ``(x, y)``; exact stored value at integer coordinates."""
    w, h = image.width, image.height
    if not (0.0 <= x <= w - 1) or not (0.0 <= y <= h - 1):
        raise OutOfBounds(f"({x}, {y}) outside [0, {w - 1}] x [0, {h - 1}]")
    x0, y0 = math.floor(x), math.floor(y)
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    p = image.pixels
    top = p[y0, x0] + fx * (p[y0, x1] - p[y0, x0])
    bot = p[y1, x0] + fx * (p[y1, x1] - p[y1, x0])
    return float(top + fy * (bot - top))


def bilinear_many(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sample_bilinear` over in-bounds coordinate arrays."""
    h, w = pixels.shape
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = pixels[y0, x0] + fx * (pixels[y0, x1] - pixels[y0, x0])
    bot = pixels[y1, x0] + fx * (pixels[y1, x1] - pixels[y1, x0])
    return top + fy * (bot - top)


def _exact_trig(angle: float) -> tuple[float, float]:
    # snap cos/sin of lattice angles so quarter turns map pixel centers exactly
    c, s = math.cos(angle), math.sin(angle)
    c = float(round(c)) if abs(c - round(c)) < 1e-12 else c
    s = float(round(s)) if abs(s - round(s)) < 1e-12 else s
    return c, s


@dataclass(frozen=True)
class Similarity:
    """Similarity transform about the image center: ``p' = c + s R (p - c) + t``."""

    angle: float
    scale: float
    tx: float
    ty: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise BadScale(f"scale must be finite and > 0, got {self.scale}")

    @classmethod
    def about_center(cls, image: Image, angle: float, scale: float = 1.0, tx: float = 0.0, ty: float = 0.0) -> Similarity:
        return cls(angle, scale, tx, ty, (image.width - 1) / 2.0, (image.height - 1) / 2.0)

    def forward(self, x, y):
        """Map source coordinates into the warped image."""
        c, s = _exact_trig(self.angle)
        dx, dy = np.subtract(x, self.cx), np.subtract(y, self.cy)
        return (
            self.cx + self.scale * (c * dx - s * dy) + self.tx,
            self.cy + self.scale * (s * dx + c * dy) + self.ty,
        )

    def inverse(self, u, v):
        """Map warped-image coordinates back to the source."""
        c, s = _exact_trig(self.angle)
        du = (np.subtract(u, self.cx) - self.tx) / self.scale
        dv = (np.subtract(v, self.cy) - self.ty) / self.scale
        return self.cx + c * du + s * dv, self.cy - s * du + c * dv


def warp_similarity(image: Image, angle: float, scale: float, tx: float, ty: float) -> Image:
    """Rotate/scale/translate ``image`` about its center, same output size.

    Output pixels whose inverse-mapped location falls outside the source are 0.
    Use :class:`Similarity` for the matching forward point map.
    """
    sim = Similarity.about_center(image, angle, scale, tx, ty)
    h, w = image.height, image.width
    vv, uu = np.mgrid[0:h, 0:w].astype(np.float64)
    xs, ys = sim.inverse(uu, vv)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    out = np.zeros((h, w), dtype=np.float64)
    out[inside] = bilinear_many(image.pixels, xs[inside], ys[inside])
    # a blend can overshoot its endpoints by an ulp
    return Image(np.clip(out, 0.0, 255.0))
