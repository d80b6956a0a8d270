"""Compiled inner loops.

Everything here is a plain sequential loop compiled with ``nogil`` so callers
can fan work out over threads. No ``fastmath``: summation order is fixed
row-major so results are reproducible bit for bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# radius-3 Bresenham circle, clockwise from 12 o'clock
CIRCLE_DX = np.array([0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1], dtype=np.int64)
CIRCLE_DY = np.array([-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3], dtype=np.int64)
ARC_LENGTH = 9

WINDOW = 64
HALF = 31.5


@njit(cache=True, nogil=True)
def segment_score(pixels, x, y, threshold, cdx, cdy, arc):
    """Thresholded SAD over the firing arc, or 0 when the segment test fails."""
    center = pixels[y, x]
    n = cdx.shape[0]
    state = np.empty(n, dtype=np.int8)
    diff = np.empty(n, dtype=np.float64)
    for k in range(n):
        d = pixels[y + cdy[k], x + cdx[k]] - center
        diff[k] = d
        if d > threshold:
            state[k] = 1
        elif d < -threshold:
            state[k] = -1
        else:
            state[k] = 0

    # all-equal circle: the whole ring is one arc
    start = -1
    for k in range(n):
        if state[k] != state[k - 1]:
            start = k
            break
    if start < 0:
        if state[0] == 0:
            return 0.0
        total = 0.0
        for k in range(n):
            total += abs(diff[k]) - threshold
        return total

    k = 0
    while k < n:
        idx = (start + k) % n
        s = state[idx]
        run = 1
        while k + run < n and state[(start + k + run) % n] == s:
            run += 1
        if s != 0 and run >= arc:
            total = 0.0
            for j in range(run):
                total += abs(diff[(start + k + j) % n]) - threshold
            return total
        k += run
    return 0.0


@njit(cache=True, nogil=True)
def score_map(pixels, threshold, cdx, cdy, arc):
    h, w = pixels.shape
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(3, h - 3):
        for x in range(3, w - 3):
            out[y, x] = segment_score(pixels, x, y, threshold, cdx, cdy, arc)
    return out


@njit(cache=True, nogil=True)
def _bilinear(pixels, x, y, ref):
    # callers guarantee x, y >= 0, so truncation is floor
    h, w = pixels.shape
    x0 = int(x)
    y0 = int(y)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    p00 = pixels[y0, x0] - ref
    p01 = pixels[y0, x1] - ref
    p10 = pixels[y1, x0] - ref
    p11 = pixels[y1, x1] - ref
    top = p00 + fx * (p01 - p00)
    bot = p10 + fx * (p11 - p10)
    return top + fy * (bot - top)


@njit(cache=True, nogil=True)
def fill_window(pixels, x, y, theta, ref, out):
    """Resample the rotated 64x64 window around (x, y) into ``out`` (flat, 4096).

    ``ref`` is subtracted from every source pixel before blending.
    """
    c = math.cos(theta)
    s = math.sin(theta)
    for v in range(WINDOW):
        dv = v - HALF
        row = v * WINDOW
        for u in range(WINDOW):
            du = u - HALF
            out[row + u] = _bilinear(pixels, x + c * du - s * dv, y + s * du + c * dv, ref)


def mask_taps(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat window offsets and weights of the non-zero mask entries, row-major.

    Zero-weight terms add exactly 0.0 to a non-negative running sum, so
    skipping them leaves every distance bit-identical to the full loop.
    """
    ii, jj = np.nonzero(weights)
    offsets = (ii * WINDOW + jj).astype(np.int64)
    return offsets, weights[ii, jj].astype(np.float64)


@njit(cache=True, nogil=True)
def window_bits(win, triplets, offsets, weights, out):
    """Triplet test for every row of ``triplets`` (ax ay bx by cx cy) on a flat window."""
    n = offsets.shape[0]
    for t in range(triplets.shape[0]):
        a = triplets[t, 1] * WINDOW + triplets[t, 0]
        b = triplets[t, 3] * WINDOW + triplets[t, 2]
        c = triplets[t, 5] * WINDOW + triplets[t, 4]
        d1 = 0.0
        d2 = 0.0
        for k in range(n):
            o = offsets[k]
            w = weights[k]
            va = win[a + o]
            e1 = va - win[b + o]
            e2 = va - win[c + o]
            d1 += w * (e1 * e1)
            d2 += w * (e2 * e2)
        out[t] = 1 if d1 > d2 else 0


@njit(cache=True, nogil=True)
def pack_bits(bits, out):
    # bit t -> byte t // 8, position t % 8 (LSB first)
    for b in range(out.shape[0]):
        out[b] = 0
    for t in range(bits.shape[0]):
        if bits[t]:
            out[t >> 3] |= np.uint8(1 << (t & 7))


@njit(cache=True, nogil=True)
def describe_batch(pixels, xs, ys, thetas, refs, triplets, offsets, weights, out):
    win = np.empty(WINDOW * WINDOW, dtype=np.float64)
    bits = np.empty(triplets.shape[0], dtype=np.uint8)
    for i in range(xs.shape[0]):
        fill_window(pixels, xs[i], ys[i], thetas[i], refs[i], win)
        window_bits(win, triplets, offsets, weights, bits)
        pack_bits(bits, out[i])


@njit(cache=True, nogil=True)
def dataset_bits(patches, triplets, offsets, weights, out):
    """``out[c, i]`` = bit of candidate ``c`` on flat patch ``patches[i]``."""
    bits = np.empty(triplets.shape[0], dtype=np.uint8)
    for i in range(patches.shape[0]):
        window_bits(patches[i], triplets, offsets, weights, bits)
        for c in range(triplets.shape[0]):
            out[c, i] = bits[c]
