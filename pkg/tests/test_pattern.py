import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from planted import disjoint, planted_dataset
from pylatch.errors import (
    BadHeader,
    BadTripletCount,
    CoordinateOutOfRange,
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
from pylatch.image import Image, save_pgm
from pylatch.pattern import (
    PatchDataset,
    Triplet,
    TripletPattern,
    WeightMask,
    bit_correlation,
    candidate_bits,
    default_pattern,
    ingest_brown,
    load_pattern,
    make_pairs,
    sample_candidates,
    save_pattern,
    select_triplets,
    triplet_bits,
    triplet_quality,
)

LINES8 = "\n".join(f"{i} {i} {i + 8} 0 0 {i + 8}" for i in range(8))


def test_load_minimal_pattern():
    pat = load_pattern(f"LATCHPAT v1 T=8 K=8\n{LINES8}\n".encode())
    assert pat.T == 8 and pat.K == 8
    assert pat.mask == WeightMask.ones(8)
    assert pat.triplets[3] == Triplet(3, 3, 11, 0, 0, 11)


def test_load_with_weights_section():
    weights = "\n".join(" ".join("0.5" for _ in range(8)) for _ in range(8))
    pat = load_pattern(f"LATCHPAT v1 T=8 K=8\n{LINES8}\nWEIGHTS\n{weights}\n".encode())
    assert np.all(pat.mask.weights == 0.5)


@pytest.mark.parametrize(
    "text, exc",
    [
        ("LATCHPAT v1 T=8 K=8\n" + LINES8.replace("7 7 15", "57 7 15"), CoordinateOutOfRange),
        ("LATCHPAT v2 T=8 K=8\n" + LINES8, BadHeader),
        ("LATCHPAT v1 T=7 K=8\n" + LINES8, BadHeader),
        ("garbage", BadHeader),
        ("LATCHPAT v1 T=16 K=8\n" + LINES8, BadTripletCount),
        ("LATCHPAT v1 T=8 K=8\n" + LINES8.replace("0 0 8\n", "0 0 8 1\n", 1), BadTripletCount),
        ("LATCHPAT v1 T=8 K=8\n" + LINES8.replace("1 1 9 0 0 9", "1 1 9 0 9 0"), DegenerateTriplet),
        ("LATCHPAT v1 T=8 K=8\n" + LINES8.replace("2 2 10", "2 -1 10"), CoordinateOutOfRange),
    ],
)
def test_load_pattern_errors(text, exc):
    with pytest.raises(exc):
        load_pattern(text.encode())


def test_coordinate_bound_follows_k():
    line = "57 0 0 0 1 1"
    text = "LATCHPAT v1 T=8 K=7\n" + "\n".join([line] * 8)
    assert load_pattern(text).K == 7
    with pytest.raises(CoordinateOutOfRange):
        load_pattern(text.replace("K=7", "K=8"))


def test_default_pattern_shape_and_mask():
    pat = default_pattern()
    assert pat.T == 512
    assert pat.K == 8
    assert pat.descriptor_bytes == 64
    w = pat.mask.weights
    assert w[7, 7] == 0.0
    assert np.all(w[:7, :7] == 1.0) and np.all(w[7, :] == 0.0) and np.all(w[:, 7] == 0.0)
    assert len(set(pat.triplets)) == 512


def test_pattern_round_trip_default():
    pat = default_pattern()
    assert load_pattern(save_pattern(pat)) == pat
    assert save_pattern(load_pattern(save_pattern(pat))) == save_pattern(pat)


def test_weight_mask_round_trip_reals():
    mask = WeightMask(np.random.default_rng(0).uniform(0, 1, size=(8, 8)))
    pat = TripletPattern(tuple(sample_candidates(16, 8, 1)), mask)
    assert load_pattern(save_pattern(pat)) == pat


def _grid(values):
    return save_pgm(Image(values))


def test_ingest_brown_three_patches():
    grid = np.random.default_rng(0).integers(0, 256, size=(1024, 1024)).astype(float)
    ds = ingest_brown({"patches0000.pgm": _grid(grid), "info.txt": b"7 0\n7 0\n9 0\n"})
    assert len(ds) == 3
    assert ds.labels.tolist() == [7, 7, 9]
    assert np.array_equal(ds.patches[0], grid[:64, :64])
    assert np.array_equal(ds.patches[2], grid[:64, 128:192])


def test_ingest_brown_row_major_across_grids():
    rng = np.random.default_rng(1)
    g0, g1 = (rng.integers(0, 256, size=(1024, 1024)).astype(float) for _ in range(2))
    info = "".join(f"{i} 0\n" for i in range(300)).encode()
    ds = ingest_brown({"b.pgm": _grid(g1), "a.pgm": _grid(g0), "info.txt": info})
    assert np.array_equal(ds.patches[17], g0[64:128, 64:128])
    assert np.array_equal(ds.patches[256], g1[:64, :64])
    assert np.array_equal(ds.patches[299], g1[128:192, 11 * 64 : 12 * 64])


def test_ingest_brown_errors():
    grid = _grid(np.zeros((1024, 1024)))
    with pytest.raises(MissingInfo):
        ingest_brown({"p.pgm": grid, "info.txt": b"1 0\n" * 300})
    with pytest.raises(MissingInfo):
        ingest_brown({"p.pgm": grid})
    with pytest.raises(GridSizeMismatch):
        ingest_brown({"p.pgm": _grid(np.zeros((512, 1024))), "info.txt": b"1 0\n"})
    with pytest.raises(LabelParse):
        ingest_brown({"p.pgm": grid, "info.txt": b"1 0\nx 0\n"})


def _labels(labels):
    return PatchDataset(np.zeros((len(labels), 64, 64)), np.array(labels))


def test_make_pairs_forced_by_labels():
    pairs = make_pairs(_labels([1, 1, 2, 2]), 4, seed=0)
    pos = [(i, j) for i, j, s in pairs if s]
    neg = [(i, j) for i, j, s in pairs if not s]
    assert pos == [(0, 1), (2, 3)]
    assert len(neg) == 2 and len(set(neg)) == 2
    labels = [1, 1, 2, 2]
    assert all(labels[i] != labels[j] for i, j in neg)


def test_make_pairs_errors():
    with pytest.raises(NoPositives):
        make_pairs(_labels([1, 2, 3]), 4, 0)
    with pytest.raises(NoNegatives):
        make_pairs(_labels([5, 5, 5]), 4, 0)


def test_make_pairs_deterministic_and_balanced():
    labels = np.random.default_rng(2).integers(0, 30, size=200)
    ds = _labels(labels)
    a, b = make_pairs(ds, 500, 9), make_pairs(ds, 500, 9)
    assert a == b
    pos = [p for p in a if p[2]]
    assert len(pos) == 250 and len(a) == 500
    for i, j, same in a:
        assert (labels[i] == labels[j]) == same and i != j
    assert len({(i, j) for i, j, _ in a}) == len(a)
    assert make_pairs(ds, 500, 10) != a


def test_sample_candidates_single_valid():
    (t,) = sample_candidates(1, 8, seed=123)
    t.validate(8)


def test_sample_candidates_deterministic_unique_in_range():
    a = sample_candidates(10_000, 8, seed=4)
    assert a == sample_candidates(10_000, 8, seed=4)
    assert len(set(a)) == 10_000
    coords = np.array([t.coords for t in a])
    assert coords.min() == 0 and coords.max() == 56
    assert all((t.bx, t.by) != (t.cx, t.cy) for t in a)


def test_triplet_bits_constant_patches_are_zero():
    ds = PatchDataset(np.full((5, 64, 64), 33.0), np.arange(5))
    assert triplet_bits(Triplet(0, 0, 10, 10, 20, 20), WeightMask.ones(), ds).tolist() == [0] * 5


def test_triplet_bits_single_patch():
    ds = PatchDataset(np.random.default_rng(0).uniform(0, 255, (1, 64, 64)), [0])
    assert triplet_bits(Triplet(0, 0, 10, 10, 20, 20), WeightMask.ones(), ds).shape == (1,)


def test_triplet_bits_match_naive_oracle():
    rng = np.random.default_rng(5)
    ds = PatchDataset(rng.uniform(0, 255, (12, 64, 64)), np.arange(12))
    mask = WeightMask.emulating(7)
    cands = sample_candidates(40, 8, seed=6)
    mat = candidate_bits(cands, mask, ds, workers=3)
    m = mask.weights.tolist()
    for c, t in enumerate(cands):
        bits = triplet_bits(t, mask, ds)
        expect = [oracles.eq1_bit(p.tolist(), t.coords, m) for p in ds.patches]
        assert bits.tolist() == expect
        assert mat[c].tolist() == expect


def test_quality_examples():
    pairs = [(0, 1, True), (2, 3, True), (0, 2, False), (1, 3, False)]
    assert triplet_quality([1, 1, 0, 0], pairs) == 1.0
    assert triplet_quality([1, 1, 1, 1], pairs) == 0.5
    assert triplet_quality([0, 0, 0, 0], pairs[:3]) == pytest.approx(2 / 3)
    with pytest.raises(EmptyPairs):
        triplet_quality([0, 1], [])


def test_quality_of_random_bits_is_half():
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, size=5000)
    idx = rng.integers(0, 5000, size=(20_000, 2))
    pairs = [(int(i), int(j), bool(k % 2)) for k, (i, j) in enumerate(idx)]
    assert abs(triplet_quality(bits, pairs) - 0.5) <= 0.05


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=4, max_size=40), st.integers(0, 1000))
def test_quality_complement_invariant(bits, seed):
    rng = np.random.default_rng(seed)
    n = len(bits)
    pairs = [(int(rng.integers(n)), int(rng.integers(n)), bool(rng.integers(2))) for _ in range(15)]
    comp = [1 - b for b in bits]
    assert triplet_quality(bits, pairs) == triplet_quality(comp, pairs)
    assert triplet_quality(bits, pairs) == pytest.approx(oracles.quality(bits, pairs))


def test_bit_correlation_examples():
    a = [0, 1, 1, 0, 1]
    assert bit_correlation(a, a) == pytest.approx(1.0)
    assert bit_correlation(a, [1 - v for v in a]) == pytest.approx(-1.0)
    assert bit_correlation([1, 1, 1, 1, 1], a) == 0.0
    with pytest.raises(LengthMismatch):
        bit_correlation([0, 1], [0, 1, 1])
    with pytest.raises(LengthMismatch):
        bit_correlation([1], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_bit_correlation_symmetric_and_pearson(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    r = bit_correlation(a, b)
    assert r == bit_correlation(b, a)
    assert -1.0 <= r <= 1.0
    if a.min() != a.max() and b.min() != b.max():
        assert r == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)


def test_select_ranks_planted_first_by_exhaustive_quality():
    planted = Triplet(2, 3, 40, 5, 20, 44)
    assert disjoint(planted)
    ds = planted_dataset(50, planted, seed=21)
    pairs = make_pairs(ds, 400, seed=0)
    candidates = [planted] + sample_candidates(60, 8, seed=22)
    mask = WeightMask.ones()
    m = mask.weights.tolist()
    patches = [p.tolist() for p in ds.patches]
    q = [oracles.quality([oracles.eq1_bit(p, c.coords, m) for p in patches], pairs) for c in candidates]
    assert q[0] == 1.0
    assert max(q[1:]) < 1.0 and abs(np.mean(q[1:]) - 0.5) < 0.1
    pat = select_triplets(candidates, ds, pairs, T=8, corr_threshold=0.2, mask=mask)
    assert pat.triplets[0] == planted


def _bits_dataset(bit_rows):
    # dataset content is irrelevant when the bit matrix is supplied
    n = bit_rows.shape[1]
    return PatchDataset(np.zeros((n, 64, 64)), np.arange(n) // 2)


def test_select_skips_duplicates_of_accepted():
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 2, size=(10, 400)).astype(np.uint8)
    rows[5] = rows[0]
    ds = _bits_dataset(rows)
    pairs = make_pairs(ds, 200, 0)
    cands = sample_candidates(10, 8, seed=1)
    pat = select_triplets(cands, ds, pairs, T=8, corr_threshold=0.5, bit_matrix=rows)
    chosen = [cands.index(t) for t in pat.triplets]
    assert not (0 in chosen and 5 in chosen)


def test_select_accepts_independent_bits_in_quality_order():
    rng = np.random.default_rng(8)
    rows = rng.integers(0, 2, size=(16, 10_000)).astype(np.uint8)
    ds = _bits_dataset(rows)
    pairs = make_pairs(ds, 4000, 0)
    cands = sample_candidates(16, 8, seed=2)
    pat = select_triplets(cands, ds, pairs, T=16, corr_threshold=0.2, bit_matrix=rows)
    q = [triplet_quality(r, pairs) for r in rows]
    order = sorted(range(16), key=lambda c: (-q[c], c))
    assert [cands.index(t) for t in pat.triplets] == order


def test_select_escalates_threshold_and_skips_constants():
    rng = np.random.default_rng(4)
    base = rng.integers(0, 2, size=2000).astype(np.uint8)
    rows = np.array([np.where(rng.random(2000) < 0.1, 1 - base, base) for _ in range(8)], dtype=np.uint8)
    rows = np.vstack([rows, np.zeros((1, 2000), dtype=np.uint8)])
    ds = _bits_dataset(rows)
    pairs = make_pairs(ds, 400, 0)
    cands = sample_candidates(9, 8, seed=5)
    # all informative rows correlate at ~0.8, so acceptance needs escalation
    pat = select_triplets(cands, ds, pairs, T=8, corr_threshold=0.2, bit_matrix=rows)
    assert cands[8] not in pat.triplets
    with pytest.raises(InsufficientCandidates):
        select_triplets(cands + [], ds, pairs, T=16, corr_threshold=0.2, bit_matrix=rows)


def test_select_insufficient_candidates():
    ds = _bits_dataset(np.zeros((4, 10), dtype=np.uint8))
    with pytest.raises(InsufficientCandidates):
        select_triplets(sample_candidates(4, 8, 0), ds, [(0, 1, True)], T=8)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_select_accepted_set_is_maximal(seed):
    rng = np.random.default_rng(seed)
    n_c, n = 40, 300
    latent = rng.integers(0, 2, size=(5, n))
    rows = np.array(
        [np.where(rng.random(n) < rng.uniform(0.05, 0.5), 1 - latent[c % 5], latent[c % 5]) for c in range(n_c)],
        dtype=np.uint8,
    )
    ds = _bits_dataset(rows)
    pairs = make_pairs(ds, 200, 0)
    cands = sample_candidates(n_c, 8, seed=1)
    pat = select_triplets(cands, ds, pairs, T=8, corr_threshold=0.3, bit_matrix=rows)
    assert pat == select_triplets(cands, ds, pairs, T=8, corr_threshold=0.3, bit_matrix=rows)
    chosen = [cands.index(t) for t in pat.triplets]
    q = [triplet_quality(r, pairs) for r in rows]
    last_q = q[chosen[-1]]
    final = max(max(abs(bit_correlation(rows[a], rows[b])) for b in chosen[:i]) for i, a in enumerate(chosen) if i)
    for c in range(n_c):
        if c in chosen or rows[c].min() == rows[c].max():
            continue
        worst = max(abs(bit_correlation(rows[c], rows[a])) for a in chosen)
        assert q[c] <= last_q or worst > final - 1e-12 or worst > 0.3
