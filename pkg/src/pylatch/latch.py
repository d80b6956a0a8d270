"""LATCH descriptor extraction.

A keypoint's rotated 64x64 neighborhood is resampled upright, then every
triplet of the pattern contributes one bit: 1 iff the weighted squared
distance anchor->companion1 exceeds anchor->companion2.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import _kernels
from .detect import Keypoint
from .errors import BadDescriptorFile, TooCloseToBorder
from .image import Image
from .pattern import Triplet, TripletPattern, WeightMask

WINDOW_SIZE = _kernels.WINDOW
# ceil(31.5 * sqrt(2)) + 1 bilinear guard
MARGIN = 46

DESCRIPTOR_MAGIC = b"LTCH"
DESCRIPTOR_VERSION = 1
_FILE_HEADER = struct.Struct("<4sIIII")
_RECORD_HEAD = struct.Struct("<ffff")


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def in_margin(image: Image, keypoint: Keypoint) -> bool:
    """True when the keypoint is at least ``MARGIN`` pixels from every edge."""
    x, y = keypoint.x, keypoint.y
    return MARGIN <= x <= image.width - 1 - MARGIN and MARGIN <= y <= image.height - 1 - MARGIN


def _check_margin(image: Image, keypoint: Keypoint) -> None:
    if not in_margin(image, keypoint):
        raise TooCloseToBorder(
            f"keypoint ({keypoint.x}, {keypoint.y}) is closer than {MARGIN} px to the border "
            f"of a {image.width}x{image.height} image"
        )


def extract_window(image: Image, keypoint: Keypoint) -> np.ndarray:
    """Upright 64x64 window sampled along the keypoint's orientation.

    ``window[v, u]`` samples the image at ``(x, y) + R(theta) (u - 31.5, v - 31.5)``.
    """
    _check_margin(image, keypoint)
    out = np.empty(WINDOW_SIZE * WINDOW_SIZE, dtype=np.float64)
    _kernels.fill_window(image.pixels, float(keypoint.x), float(keypoint.y), float(keypoint.theta), 0.0, out)
    return out.reshape(WINDOW_SIZE, WINDOW_SIZE)


def _as_window(window) -> np.ndarray:
    win = np.ascontiguousarray(window, dtype=np.float64)
    if win.shape != (WINDOW_SIZE, WINDOW_SIZE):
        raise ValueError(f"window must be {WINDOW_SIZE}x{WINDOW_SIZE}, got {win.shape}")
    return win.ravel()


def triplet_bit(window, triplet: Triplet, mask: WeightMask) -> int:
    triplet.validate(mask.size)
    bits = np.empty(1, dtype=np.uint8)
    _kernels.window_bits(_as_window(window), np.array([triplet.coords], dtype=np.int64), *mask.taps, bits)
    return int(bits[0])


def window_bits(window, pattern: TripletPattern) -> np.ndarray:
    """Unpacked bit vector (length T) for an already-extracted window."""
    bits = np.empty(pattern.T, dtype=np.uint8)
    _kernels.window_bits(_as_window(window), pattern.array, *pattern.mask.taps, bits)
    return bits


def pack_bits(bits) -> bytes:
    """Pack a 0/1 vector LSB-first: bit t goes to byte t // 8, position t % 8."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(descriptor: bytes, nbits: int | None = None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(descriptor, dtype=np.uint8), bitorder="little")
    return bits if nbits is None else bits[:nbits]


def _reference_level(image: Image, keypoint: Keypoint) -> float:
    # Samples are taken relative to the pixel nearest the keypoint. The bit
    # test only sees differences, so this changes nothing mathematically,
    # but it makes additive brightness shifts of integer images cancel
    # exactly instead of up to rounding.
    return float(image.pixels[int(math.floor(keypoint.y + 0.5)), int(math.floor(keypoint.x + 0.5))])


def _describe_into(image: Image, keypoints: Sequence[Keypoint], pattern: TripletPattern, out: np.ndarray) -> None:
    xs = np.array([k.x for k in keypoints], dtype=np.float64)
    ys = np.array([k.y for k in keypoints], dtype=np.float64)
    thetas = np.array([k.theta for k in keypoints], dtype=np.float64)
    refs = np.array([_reference_level(image, k) for k in keypoints], dtype=np.float64)
    _kernels.describe_batch(image.pixels, xs, ys, thetas, refs, pattern.array, *pattern.mask.taps, out)


def describe(image: Image, keypoint: Keypoint, pattern: TripletPattern) -> bytes:
    """Packed descriptor of ``pattern.T // 8`` bytes for one keypoint."""
    _check_margin(image, keypoint)
    out = np.empty((1, pattern.T // 8), dtype=np.uint8)
    _describe_into(image, [keypoint], pattern, out)
    return out[0].tobytes()


def describe_matrix(
    image: Image, keypoints: Sequence[Keypoint], pattern: TripletPattern, workers: int | None = None
) -> tuple[list[Keypoint], np.ndarray]:
    """Describe in-margin keypoints; returns them with an ``(N, T/8)`` uint8 matrix."""
    kept = [k for k in keypoints if in_margin(image, k)]
    out = np.zeros((len(kept), pattern.T // 8), dtype=np.uint8)
    if not kept:
        return kept, out
    n_workers = min(resolve_workers(workers), len(kept))
    if n_workers == 1:
        _describe_into(image, kept, pattern, out)
        return kept, out
    bounds = np.linspace(0, len(kept), n_workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        jobs = [
            pool.submit(_describe_into, image, kept[lo:hi], pattern, out[lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        for job in jobs:
            job.result()
    return kept, out


def describe_all(
    image: Image, keypoints: Sequence[Keypoint], pattern: TripletPattern, workers: int | None = None
) -> list[tuple[Keypoint, bytes]]:
    """Describe every keypoint that satisfies the margin, in input order."""
    kept, mat = describe_matrix(image, keypoints, pattern, workers)
    return [(k, row.tobytes()) for k, row in zip(kept, mat)]


def write_descriptors(keypoints: Sequence[Keypoint], descriptors, descriptor_bytes: int | None = None) -> bytes:
    """Serialize to the little-endian ``LTCH`` v1 descriptor file format."""
    mat = np.asarray(descriptors, dtype=np.uint8)
    if descriptor_bytes is None:
        descriptor_bytes = mat.shape[1] if mat.ndim == 2 and mat.shape[0] else 0
    mat = mat.reshape(len(keypoints), descriptor_bytes)
    parts = [_FILE_HEADER.pack(DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION, len(keypoints), descriptor_bytes, 0)]
    for kp, row in zip(keypoints, mat):
        parts.append(_RECORD_HEAD.pack(kp.x, kp.y, kp.theta, kp.score))
        parts.append(row.tobytes())
    return b"".join(parts)


def read_descriptors(buf: bytes) -> tuple[list[Keypoint], np.ndarray]:
    """Parse an ``LTCH`` descriptor file into keypoints and an ``(N, B)`` matrix."""
    if len(buf) < _FILE_HEADER.size:
        raise BadDescriptorFile("descriptor file shorter than its header")
    magic, version, count, nbytes, _reserved = _FILE_HEADER.unpack_from(buf, 0)
    if magic != DESCRIPTOR_MAGIC:
        raise BadDescriptorFile(f"bad magic {magic!r}, expected {DESCRIPTOR_MAGIC!r}")
    if version != DESCRIPTOR_VERSION:
        raise BadDescriptorFile(f"unsupported descriptor file version {version}")
    record = _RECORD_HEAD.size + nbytes
    if len(buf) != _FILE_HEADER.size + count * record:
        raise BadDescriptorFile(
            f"expected {_FILE_HEADER.size + count * record} bytes for {count} records, got {len(buf)}"
        )
    keypoints: list[Keypoint] = []
    mat = np.empty((count, nbytes), dtype=np.uint8)
    offset = _FILE_HEADER.size
    for i in range(count):
        x, y, theta, score = _RECORD_HEAD.unpack_from(buf, offset)
        keypoints.append(Keypoint(x, y, theta, score))
        mat[i] = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=offset + _RECORD_HEAD.size)
        offset += record
    return keypoints, mat
