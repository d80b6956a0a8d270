"""Independent scalar reference implementations used as test oracles.

Plain Python floats and loops only; nothing here imports the code paths
under test except the data containers.
"""

from __future__ import annotations

import math


def bilinear(rows, x, y):
    """Four-weight bilinear blend on a list-of-lists raster."""
    h, w = len(rows), len(rows[0])
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    ax, ay = x - x0, y - y0
    return (
        (1 - ax) * (1 - ay) * rows[y0][x0]
        + ax * (1 - ay) * rows[y0][x1]
        + (1 - ax) * ay * rows[y1][x0]
        + ax * ay * rows[y1][x1]
    )


def window(rows, x, y, theta):
    c, s = math.cos(theta), math.sin(theta)
    out = []
    for v in range(64):
        line = []
        for u in range(64):
            du, dv = u - 31.5, v - 31.5
            line.append(bilinear(rows, x + c * du - s * dv, y + s * du + c * dv))
        out.append(line)
    return out


def eq1_bit(win, coords, mask):
    """Naive double loop over the full K x K mask."""
    ax, ay, bx, by, cx, cy = coords
    k = len(mask)
    d1 = 0.0
    d2 = 0.0
    for i in range(k):
        for j in range(k):
            e1 = win[ay + i][ax + j] - win[by + i][bx + j]
            e2 = win[ay + i][ax + j] - win[cy + i][cx + j]
            d1 += mask[i][j] * (e1 * e1)
            d2 += mask[i][j] * (e2 * e2)
    return 1 if d1 > d2 else 0


def descriptor(rows, x, y, theta, triplets, mask):
    """Full scalar pipeline: window, one bit test per triplet, LSB-first packing."""
    win = window(rows, x, y, theta)
    bits = [eq1_bit(win, t, mask) for t in triplets]
    out = bytearray(len(bits) // 8)
    for t, b in enumerate(bits):
        if b:
            out[t // 8] += 2 ** (t % 8)
    return bytes(out)


CIRCLE = [(0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
          (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3)]


def fast_score(rows, x, y, t, arc=9):
    """Enumerate every start/length arc; score the longest firing one."""
    p = rows[y][x]
    vals = [rows[y + dy][x + dx] for dx, dy in CIRCLE]
    best = None
    for sign in (1, -1):
        fires = [(sign * (v - p)) > t for v in vals]
        if all(fires):
            return sum(abs(v - p) - t for v in vals)
        for start in range(16):
            if fires[start - 1] or not fires[start]:
                continue
            length = 0
            while length < 16 and fires[(start + length) % 16]:
                length += 1
            if length >= arc and (best is None or length > best[0]):
                best = (length, sum(abs(vals[(start + i) % 16] - p) - t for i in range(length)))
    return best[1] if best else 0.0


def segment_test(rows, x, y, t, arc=9):
    p = rows[y][x]
    vals = [rows[y + dy][x + dx] for dx, dy in CIRCLE]
    for sign in (1, -1):
        fires = [(sign * (v - p)) > t for v in vals]
        for start in range(16):
            if all(fires[(start + i) % 16] for i in range(arc)):
                return True
    return False


def hamming(a: bytes, b: bytes) -> int:
    total = 0
    for x, y in zip(a, b):
        for bit in range(8):
            total += ((x >> bit) & 1) != ((y >> bit) & 1)
    return total


def knn2(probe, gallery, nbits):
    best_i, best_d, second = -1, None, nbits + 1
    for i, g in enumerate(gallery):
        d = hamming(probe, g)
        if best_d is None or d < best_d:
            if best_d is not None:
                second = best_d
            best_i, best_d = i, d
        elif d < second:
            second = d
    return best_i, best_d, second


def match(probes, gallery, ratio=None, cross_check=False, max_distance=None, dist=None):
    """Scalar double-loop matcher; ``dist`` may supply a precomputed distance table."""
    nbits = len(gallery[0]) * 8
    d = dist if dist is not None else [[hamming(p, g) for g in gallery] for p in probes]

    def nearest(row):
        bi, bd, sd = -1, None, nbits + 1
        for i, v in enumerate(row):
            if bd is None or v < bd:
                if bd is not None:
                    sd = bd
                bi, bd = i, v
            elif v < sd:
                sd = v
        return bi, bd, sd

    out = []
    for pi, row in enumerate(d):
        gi, bd, sd = nearest(row)
        if ratio is not None and not bd < ratio * sd:
            continue
        if max_distance is not None and bd > max_distance:
            continue
        if cross_check:
            back, _, _ = nearest([d[q][gi] for q in range(len(probes))])
            if back != pi:
                continue
        out.append((pi, gi, bd, sd))
    return out


def quality(bits, pairs):
    hits = 0
    for i, j, same in pairs:
        if (bits[i] == bits[j]) == same:
            hits += 1
    return hits / len(pairs)


def hamming_int(a: bytes, b: bytes) -> int:
    """Same count as ``hamming`` via Python big-int popcount; fast enough for 500x500 tables."""
    return bin(int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).count("1")
