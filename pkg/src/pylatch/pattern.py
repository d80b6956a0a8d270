"""Triplet arrangements: data model, pattern files, and the training procedure.

Training scores a pool of random candidate triplets by how well their bit
predicts same/not-same labels on a patch dataset, then picks the best ones
greedily while skipping candidates whose bits correlate with those already
chosen.
"""

from __future__ import annotations

import functools
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import (
    BadHeader,
    BadTripletCount,
    CoordinateOutOfRange,
    DataError,
    DegenerateTriplet,
    EmptyPairs,
    GridSizeMismatch,
    InsufficientCandidates,
    LabelParse,
    LengthMismatch,
    MissingInfo,
    NoNegatives,
    NoPositives,
)
from .image import load_pgm

logger = logging.getLogger(__name__)

WINDOW = 64
DEFAULT_T = 512
DEFAULT_K = 8
DEFAULT_CORR_THRESHOLD = 0.2
CORR_STEP = 0.05
DEFAULT_CANDIDATES = 50_000

GRID_SIDE = 1024
PATCHES_PER_ROW = GRID_SIDE // WINDOW
PATCHES_PER_GRID = PATCHES_PER_ROW**2


class BadWeights(DataError):
    pass


@dataclass(frozen=True)
class Triplet:
    """Top-left corners of the anchor and the two companion patches."""

    ax: int
    ay: int
    bx: int
    by: int
    cx: int
    cy: int

    @property
    def coords(self) -> tuple[int, int, int, int, int, int]:
        return (self.ax, self.ay, self.bx, self.by, self.cx, self.cy)

    def validate(self, k: int) -> None:
        hi = WINDOW - k
        for value in self.coords:
            if int(value) != value or not 0 <= value <= hi:
                raise CoordinateOutOfRange(f"coordinate {value} outside [0, {hi}] for K={k}")
        if (self.bx, self.by) == (self.cx, self.cy):
            raise DegenerateTriplet(f"companions coincide at ({self.bx}, {self.by})")


@dataclass(frozen=True, eq=False)
class WeightMask:
    """Per-pixel weights shared by every K x K patch."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64, order="C", copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise BadWeights(f"mask must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
            raise BadWeights("mask weights must be finite, non-negative and not all zero")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "taps", _kernels.mask_taps(w))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def ones(cls, k: int = DEFAULT_K) -> WeightMask:
        return cls(np.ones((k, k)))

    @classmethod
    def emulating(cls, inner: int, k: int = DEFAULT_K) -> WeightMask:
        """Top-left ``inner x inner`` ones inside a K x K mask, zeros elsewhere."""
        w = np.zeros((k, k))
        w[:inner, :inner] = 1.0
        return cls(w)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightMask):
            return NotImplemented
        return self.weights.shape == other.weights.shape and bool(np.array_equal(self.weights, other.weights))


@dataclass(frozen=True, eq=False)
class TripletPattern:
    triplets: tuple[Triplet, ...]
    mask: WeightMask
    array: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        triplets = tuple(self.triplets)
        if not triplets or len(triplets) % 8:
            raise BadTripletCount(f"triplet count must be a positive multiple of 8, got {len(triplets)}")
        for t in triplets:
            t.validate(self.mask.size)
        arr = np.array([t.coords for t in triplets], dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "triplets", triplets)
        object.__setattr__(self, "array", arr)

    @property
    def T(self) -> int:
        return len(self.triplets)

    @property
    def K(self) -> int:
        return self.mask.size

    @property
    def descriptor_bytes(self) -> int:
        return self.T // 8

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TripletPattern):
            return NotImplemented
        return self.triplets == other.triplets and self.mask == other.mask

    def __repr__(self) -> str:
        return f"TripletPattern(T={self.T}, K={self.K})"


_HEADER_RE = re.compile(r"^LATCHPAT v1 T=(\d+) K=(\d+)$")


def load_pattern(buf: bytes | str) -> TripletPattern:
    """Parse the text pattern format (see :func:`save_pattern`)."""
    text = buf.decode("ascii") if isinstance(buf, (bytes, bytearray)) else buf
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    m = _HEADER_RE.match(lines[0].rstrip("\r")) if lines else None
    if m is None:
        raise BadHeader(f"expected 'LATCHPAT v1 T=<T> K=<K>', got {lines[0][:40] if lines else ''!r}")
    t_count, k = int(m.group(1)), int(m.group(2))
    if t_count < 8 or t_count % 8 or not 1 <= k <= WINDOW:
        raise BadHeader(f"invalid header values T={t_count} K={k}")

    body = [ln.rstrip("\r") for ln in lines[1:]]
    try:
        split = body.index("WEIGHTS")
    except ValueError:
        split = len(body)
    triplet_lines, weight_lines = body[:split], body[split + 1 :]
    if len(triplet_lines) != t_count:
        raise BadTripletCount(f"header declares T={t_count}, found {len(triplet_lines)} triplet lines")

    triplets = []
    for lineno, line in enumerate(triplet_lines, start=2):
        fields = line.split()
        if len(fields) != 6:
            raise BadTripletCount(f"line {lineno}: expected 6 integers, got {len(fields)} fields")
        try:
            coords = [int(f) for f in fields]
        except ValueError as exc:
            raise CoordinateOutOfRange(f"line {lineno}: non-integer coordinate in {line!r}") from exc
        trip = Triplet(*coords)
        trip.validate(k)
        triplets.append(trip)

    if split == len(body):
        mask = WeightMask.ones(k)
    else:
        rows = [ln.split() for ln in weight_lines if ln.strip()]
        if len(rows) != k or any(len(r) != k for r in rows):
            raise BadWeights(f"WEIGHTS section must be {k} lines of {k} values")
        try:
            mask = WeightMask(np.array([[float(v) for v in r] for r in rows]))
        except ValueError as exc:
            raise BadWeights(str(exc)) from exc
    return TripletPattern(tuple(triplets), mask)


def save_pattern(pattern: TripletPattern) -> bytes:
    lines = [f"LATCHPAT v1 T={pattern.T} K={pattern.K}"]
    lines += [" ".join(str(c) for c in t.coords) for t in pattern.triplets]
    lines.append("WEIGHTS")
    lines += [" ".join(repr(float(v)) for v in row) for row in pattern.mask.weights]
    return ("\n".join(lines) + "\n").encode("ascii")


@functools.lru_cache(maxsize=1)
def default_pattern() -> TripletPattern:
    """The shipped 512-triplet pattern with the 7x7-emulating 8x8 mask."""
    data = resources.files("pylatch").joinpath("data/default_pattern.txt").read_bytes()
    return load_pattern(data)


@dataclass(frozen=True, eq=False)
class PatchDataset:
    """Labeled 64x64 patches; equal labels mean the same physical point.

    ``patches`` has shape ``(N, 64, 64)``.
    """

    patches: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        patches = np.ascontiguousarray(self.patches, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if patches.ndim != 3 or patches.shape[1:] != (WINDOW, WINDOW):
            raise DataError(f"patches must have shape (N, 64, 64), got {patches.shape}")
        if labels.shape != (patches.shape[0],):
            raise DataError(f"{patches.shape[0]} patches but {labels.size} labels")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size


def ingest_brown(files: Mapping[str, bytes], info_name: str = "info.txt") -> PatchDataset:
    """Slice a patch-grid directory into a :class:`PatchDataset`.

    ``files`` maps file names to contents. Every ``*.pgm`` entry, in sorted
    name order, is a 1024x1024 grid of 16x16 patches read row-major; the
    info file holds one ``<point_id> <aux>`` line per patch.
    """
    by_base = {name.replace("\\", "/").rsplit("/", 1)[-1]: data for name, data in files.items()}
    if info_name not in by_base:
        raise MissingInfo(f"no {info_name} in dataset")
    labels = []
    for lineno, line in enumerate(by_base[info_name].decode("ascii", errors="replace").splitlines(), 1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.split()[0]))
        except ValueError as exc:
            raise LabelParse(f"{info_name} line {lineno}: {line!r}") from exc

    grid_names = sorted(n for n in by_base if n.lower().endswith(".pgm"))
    if len(labels) > PATCHES_PER_GRID * len(grid_names):
        raise MissingInfo(
            f"{len(labels)} info lines but only {PATCHES_PER_GRID * len(grid_names)} patch slots "
            f"in {len(grid_names)} bitmap(s)"
        )

    patches = np.empty((len(labels), WINDOW, WINDOW), dtype=np.float64)
    for g, name in enumerate(grid_names):
        first = g * PATCHES_PER_GRID
        if first >= len(labels):
            break
        grid = load_pgm(by_base[name])
        if (grid.width, grid.height) != (GRID_SIDE, GRID_SIDE):
            raise GridSizeMismatch(f"{name} is {grid.width}x{grid.height}, expected {GRID_SIDE}x{GRID_SIDE}")
        tiles = grid.pixels.reshape(PATCHES_PER_ROW, WINDOW, PATCHES_PER_ROW, WINDOW).swapaxes(1, 2)
        tiles = tiles.reshape(PATCHES_PER_GRID, WINDOW, WINDOW)
        n = min(PATCHES_PER_GRID, len(labels) - first)
        patches[first : first + n] = tiles[:n]
    return PatchDataset(patches, np.array(labels, dtype=np.int64))


Pair = tuple[int, int, bool]


def make_pairs(dataset: PatchDataset, max_pairs: int, seed: int) -> list[Pair]:
    """Balanced same/not-same index pairs.

    Positives come from consecutive patches sharing a label, topped up with
    seeded random same-label pairs; negatives are seeded uniform pairs with
    different labels, as many as there are positives.
    """
    labels = dataset.labels
    n = labels.size
    if n == 0:
        raise DataError("empty dataset")
    if max_pairs < 2:
        raise ValueError(f"max_pairs must be >= 2, got {max_pairs}")
    uniq, counts = np.unique(labels, return_counts=True)
    if not np.any(counts >= 2):
        raise NoPositives("no label occurs more than once")
    if uniq.size < 2:
        raise NoNegatives("only one distinct label")

    rng = np.random.default_rng(seed)
    want = max_pairs // 2
    seen: set[tuple[int, int]] = set()
    positives: list[Pair] = []
    for i in range(n - 1):
        if len(positives) >= want:
            break
        if labels[i] == labels[i + 1]:
            seen.add((i, i + 1))
            positives.append((i, i + 1, True))

    groups = [np.flatnonzero(labels == lab) for lab in uniq[counts >= 2]]
    available = sum(g.size * (g.size - 1) // 2 for g in groups)
    attempts = 0
    while len(positives) < min(want, available) and attempts < 50 * want:
        attempts += 1
        g = groups[int(rng.integers(len(groups)))]
        a, b = rng.choice(g.size, size=2, replace=False)
        i, j = sorted((int(g[a]), int(g[b])))
        if (i, j) not in seen:
            seen.add((i, j))
            positives.append((i, j, True))

    negatives: list[Pair] = []
    attempts = 0
    while len(negatives) < len(positives) and attempts < 50 * max(want, 1):
        attempts += 1
        a, b = (int(v) for v in rng.integers(n, size=2))
        if labels[a] == labels[b]:
            continue
        i, j = min(a, b), max(a, b)
        if (i, j) not in seen:
            seen.add((i, j))
            negatives.append((i, j, False))
    return positives + negatives


def sample_candidates(count: int, k: int = DEFAULT_K, seed: int = 0) -> list[Triplet]:
    """``count`` distinct, non-degenerate uniform random triplets."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    hi = WINDOW - k
    out: list[Triplet] = []
    seen: set[tuple[int, ...]] = set()
    while len(out) < count:
        block = rng.integers(0, hi + 1, size=(max(count - len(out), 16), 6))
        for row in block.tolist():
            if row[2:4] == row[4:6]:
                continue
            key = tuple(row)
            if key in seen:
                continue
            seen.add(key)
            out.append(Triplet(*row))
            if len(out) == count:
                break
    return out


def triplet_bits(triplet: Triplet, mask: WeightMask, dataset: PatchDataset) -> np.ndarray:
    """Bit of ``triplet`` on every (upright) patch of ``dataset``."""
    from .latch import triplet_bit

    return np.array([triplet_bit(p, triplet, mask) for p in dataset.patches], dtype=np.uint8)


def candidate_bits(
    candidates: Sequence[Triplet], mask: WeightMask, dataset: PatchDataset, workers: int | None = None
) -> np.ndarray:
    """``(len(candidates), len(dataset))`` bit matrix, same kernel as :func:`triplet_bits`."""
    from .latch import resolve_workers

    for c in candidates:
        c.validate(mask.size)
    trip = np.array([c.coords for c in candidates], dtype=np.int64).reshape(-1, 6)
    out = np.empty((trip.shape[0], len(dataset)), dtype=np.uint8)
    n_workers = min(resolve_workers(workers), max(trip.shape[0], 1))
    bounds = np.linspace(0, trip.shape[0], n_workers + 1).astype(int)

    def run(lo: int, hi: int) -> None:
        block = np.empty((hi - lo, len(dataset)), dtype=np.uint8)
        flat = dataset.patches.reshape(len(dataset), -1)
        _kernels.dataset_bits(flat, trip[lo:hi], *mask.taps, block)
        out[lo:hi] = block

    if n_workers == 1:
        run(0, trip.shape[0])
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for job in [pool.submit(run, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]:
                job.result()
    return out


def _pair_arrays(pairs: Sequence[Pair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise EmptyPairs("no pairs to score against")
    arr = np.array([(i, j, int(bool(s))) for i, j, s in pairs], dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2].astype(bool)


def triplet_quality(bits, pairs: Sequence[Pair]) -> float:
    """Fraction of pairs whose same/not-same flag equals ``bits[i] == bits[j]``."""
    bits = np.asarray(bits)
    i, j, same = _pair_arrays(pairs)
    return float(np.count_nonzero((bits[i] == bits[j]) == same)) / same.size


def _quality_counts(bit_matrix: np.ndarray, pairs: Sequence[Pair], chunk: int = 2048) -> np.ndarray:
    i, j, same = _pair_arrays(pairs)
    counts = np.empty(bit_matrix.shape[0], dtype=np.int64)
    for lo in range(0, bit_matrix.shape[0], chunk):
        block = bit_matrix[lo : lo + chunk]
        counts[lo : lo + chunk] = np.count_nonzero((block[:, i] == block[:, j]) == same, axis=1)
    return counts


def _corr_from_sums(n: int, sab, sa, sb):
    num = n * sab - sa * sb
    den = np.sqrt(np.multiply(n * sa - sa * sa, n * sb - sb * sb, dtype=np.float64))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(r, -1.0, 1.0)


def bit_correlation(a, b) -> float:
    """Pearson correlation of two 0/1 sequences; 0 if either is constant."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise LengthMismatch(f"bit vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise LengthMismatch("correlation needs at least 2 samples")
    return float(_corr_from_sums(a.size, int(a @ b), int(a.sum()), int(b.sum())))


def select_triplets(
    candidates: Sequence[Triplet],
    dataset: PatchDataset,
    pairs: Sequence[Pair],
    T: int = DEFAULT_T,
    corr_threshold: float = DEFAULT_CORR_THRESHOLD,
    mask: WeightMask | None = None,
    workers: int | None = None,
    bit_matrix: np.ndarray | None = None,
) -> TripletPattern:
    """Greedy quality-ordered, correlation-filtered choice of ``T`` triplets.

    Candidates are walked in descending quality (ties: lower index first).
    One is accepted when its absolute correlation with every accepted bit
    vector is at most the threshold. If a walk ends short of ``T``, the
    threshold grows by 0.05 and the remaining candidates are walked again.
    Constant-bit candidates are never accepted.
    """
    mask = mask if mask is not None else WeightMask.ones(DEFAULT_K)
    if len(candidates) < T:
        raise InsufficientCandidates(f"{len(candidates)} candidates cannot fill T={T}")
    bits = bit_matrix if bit_matrix is not None else candidate_bits(candidates, mask, dataset, workers)
    n = bits.shape[1]
    counts = _quality_counts(bits, pairs)
    order = np.argsort(-counts, kind="stable")
    ones = bits.sum(axis=1, dtype=np.int64)
    informative = (ones > 0) & (ones < n)

    fbits = bits.astype(np.float64)
    accepted: list[int] = []
    acc_rows = np.empty((T, n), dtype=np.float64)
    acc_ones = np.empty(T, dtype=np.float64)
    pending = [int(c) for c in order if informative[c]]

    step = 0
    while True:
        threshold = round(corr_threshold + CORR_STEP * step, 10)
        if threshold > 1.0:
            raise InsufficientCandidates(
                f"accepted {len(accepted)} of {T} triplets before the correlation threshold exceeded 1.0"
            )
        rest = []
        for idx, c in enumerate(pending):
            if len(accepted) == T:
                break
            k = len(accepted)
            if k:
                sab = acc_rows[:k] @ fbits[c]
                r = _corr_from_sums(n, sab, acc_ones[:k], float(ones[c]))
                if np.max(np.abs(r)) > threshold:
                    rest.append(c)
                    continue
            acc_rows[k] = fbits[c]
            acc_ones[k] = ones[c]
            accepted.append(c)
        if len(accepted) == T:
            logger.info("selected %d triplets at correlation threshold %.2f", T, threshold)
            return TripletPattern(tuple(candidates[c] for c in accepted), mask)
        pending = rest
        step += 1


def train_pattern(
    dataset: PatchDataset,
    candidates: int = DEFAULT_CANDIDATES,
    bits: int = DEFAULT_T,
    corr_threshold: float = DEFAULT_CORR_THRESHOLD,
    seed: int = 0,
    mask: WeightMask | None = None,
    max_pairs: int = 20_000,
    workers: int | None = None,
) -> TripletPattern:
    """Pairs, candidate pool and greedy selection in one call."""
    mask = mask if mask is not None else WeightMask.ones(DEFAULT_K)
    if candidates < bits:
        raise InsufficientCandidates(f"{candidates} candidates cannot fill T={bits}")
    pairs = make_pairs(dataset, max_pairs, seed)
    pool = sample_candidates(candidates, mask.size, seed)
    return select_triplets(pool, dataset, pairs, bits, corr_threshold, mask, workers)
