"""Brute-force Hamming matching of packed binary descriptors."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyGallery, LengthMismatch


@dataclass(frozen=True)
class MatchPair:
    probe_index: int
    gallery_index: int
    distance: int
    second_distance: int


@dataclass(frozen=True)
class MatchOptions:
    """Optional filters; ``None`` disables ratio / max_distance."""

    ratio: float | None = None
    cross_check: bool = False
    max_distance: int | None = None

    def __post_init__(self) -> None:
        if self.ratio is not None and not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")


def as_matrix(descriptors) -> np.ndarray:
    """Stack descriptors (bytes or uint8 rows) into a C-contiguous ``(N, B)`` uint8 array."""
    if isinstance(descriptors, np.ndarray):
        mat = np.ascontiguousarray(descriptors, dtype=np.uint8)
        return mat.reshape(0, 0) if mat.size == 0 and mat.ndim != 2 else mat
    rows = [np.frombuffer(bytes(d), dtype=np.uint8) for d in descriptors]
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise LengthMismatch(f"descriptors of differing lengths {sorted(lengths)}")
    return np.ascontiguousarray(np.stack(rows))


def _words(mat: np.ndarray) -> np.ndarray:
    # popcount over 64-bit words when the row length allows it
    if mat.shape[1] % 8 == 0 and mat.shape[1]:
        return mat.view(np.uint64)
    return mat


def hamming(a: bytes, b: bytes) -> int:
    """Number of differing bits between two equal-length descriptors."""
    if len(a) != len(b):
        raise LengthMismatch(f"descriptor lengths differ: {len(a)} vs {len(b)}")
    x = _words(np.frombuffer(bytes(a), dtype=np.uint8)[None, :])
    y = _words(np.frombuffer(bytes(b), dtype=np.uint8)[None, :])
    return int(np.bitwise_count(x ^ y).sum())


def distance_matrix(probes, gallery) -> np.ndarray:
    """All-pairs Hamming distances, shape ``(len(probes), len(gallery))``."""
    p, g = as_matrix(probes), as_matrix(gallery)
    if p.shape[1] != g.shape[1]:
        raise LengthMismatch(f"probe descriptors are {p.shape[1]} bytes, gallery {g.shape[1]}")
    pw, gw = _words(p), _words(g)
    out = np.empty((pw.shape[0], gw.shape[0]), dtype=np.int64)
    # bound the (rows, gallery, words) temporary
    step = max(1, (1 << 22) // max(1, gw.shape[0] * gw.shape[1]))
    for lo in range(0, pw.shape[0], step):
        xor = pw[lo : lo + step, None, :] ^ gw[None, :, :]
        out[lo : lo + step] = np.bitwise_count(xor).sum(axis=2, dtype=np.int64)
    return out


def _two_smallest(dist: np.ndarray, sentinel: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # argmin returns the first minimum, i.e. the smallest gallery index
    best = np.argmin(dist, axis=1)
    rows = np.arange(dist.shape[0])
    best_d = dist[rows, best]
    if dist.shape[1] == 1:
        second = np.full(dist.shape[0], sentinel, dtype=np.int64)
    else:
        masked = dist.copy()
        masked[rows, best] = np.iinfo(np.int64).max
        second = masked.min(axis=1)
    return best, best_d, second


def knn2(probe: bytes, gallery) -> tuple[int, int, int]:
    """Nearest and runner-up gallery distances for one probe.

    Returns ``(best_index, best_dist, second_dist)``; ``second_dist`` is
    ``T + 1`` for a single-entry gallery.
    """
    g = as_matrix(gallery)
    if g.shape[0] == 0:
        raise EmptyGallery("gallery is empty")
    d = distance_matrix([probe], g)
    best, best_d, second = _two_smallest(d, g.shape[1] * 8 + 1)
    return int(best[0]), int(best_d[0]), int(second[0])


def _nearest_block(p: np.ndarray, g: np.ndarray, lo: int, hi: int, sentinel: int, out: tuple) -> None:
    best, best_d, second = _two_smallest(distance_matrix(p[lo:hi], g), sentinel)
    out[0][lo:hi], out[1][lo:hi], out[2][lo:hi] = best, best_d, second


def _nearest_all(p: np.ndarray, g: np.ndarray, workers: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = p.shape[0]
    sentinel = g.shape[1] * 8 + 1
    out = (np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64))
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    if workers == 1:
        _nearest_block(p, g, 0, n, sentinel, out)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [
                pool.submit(_nearest_block, p, g, lo, hi, sentinel, out)
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for job in jobs:
                job.result()
    return out


def match_brute_force(
    probes, gallery, options: MatchOptions | None = None, workers: int | None = None
) -> list[MatchPair]:
    """Match every probe to its nearest gallery descriptor, then filter.

    A pair survives when ``best < ratio * second`` (if a ratio is set),
    ``best <= max_distance`` (if set) and, with cross-check, the gallery
    entry's own nearest probe is this probe. Ties go to the lowest index.
    """
    from .latch import resolve_workers

    options = options or MatchOptions()
    p, g = as_matrix(probes), as_matrix(gallery)
    if g.shape[0] == 0:
        raise EmptyGallery("gallery is empty")
    if p.shape[0] == 0:
        return []
    if p.shape[1] != g.shape[1]:
        raise LengthMismatch(f"probe descriptors are {p.shape[1]} bytes, gallery {g.shape[1]}")
    n_workers = resolve_workers(workers)
    best, best_d, second = _nearest_all(p, g, n_workers)

    keep = np.ones(p.shape[0], dtype=bool)
    if options.ratio is not None:
        keep &= best_d < options.ratio * second
    if options.max_distance is not None:
        keep &= best_d <= options.max_distance
    if options.cross_check:
        back, _, _ = _nearest_all(g, p, n_workers)
        keep &= back[best] == np.arange(p.shape[0])

    return [
        MatchPair(int(i), int(best[i]), int(best_d[i]), int(second[i]))
        for i in np.flatnonzero(keep)
    ]


def format_matches(matches: Sequence[MatchPair]) -> bytes:
    """TSV: ``probe_index<TAB>gallery_index<TAB>distance<TAB>second_distance``."""
    return "".join(
        f"{m.probe_index}\t{m.gallery_index}\t{m.distance}\t{m.second_distance}\n" for m in matches
    ).encode("ascii")


def parse_matches(buf: bytes) -> list[MatchPair]:
    return [MatchPair(*(int(v) for v in line.split("\t"))) for line in buf.decode("ascii").splitlines() if line]
