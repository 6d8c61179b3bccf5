import math

import numpy as np
import pytest

from tradeprofiles.encoder import DailyStateSeries, TradingState
from tradeprofiles.profiles import (
    DissimilarityMatrix,
    ProfileError,
    build_profile_vector,
    dissimilarity,
    dissimilarity_matrix,
    jaccard,
    pack_bits,
    read_binary,
    write_binary,
    write_csv,
)

B, S, BS = TradingState.BUY, TradingState.SELL, TradingState.BUYSELL


def vec(name, bits):
    return pack_bits(name, np.asarray(bits, dtype=bool))


def test_layout():
    v = build_profile_vector(DailyStateSeries("a", "X", {0: B, 1: S, 2: BS}), 3)
    assert v.n_bits == 9
    assert list(np.flatnonzero(v.bits())) == [0, 4, 8]


def test_single_bit():
    v = build_profile_vector(DailyStateSeries("a", "X", {2: B}), 253)
    assert v.n_bits == 759 and v.popcount == 1 and list(np.flatnonzero(v.bits())) == [2]


def test_day_out_of_range():
    with pytest.raises(ProfileError):
        build_profile_vector(DailyStateSeries("a", "X", {2: B}), 2)


def test_popcount_equals_active_days():
    rng = np.random.default_rng(3)
    days = rng.choice(100, size=40, replace=False)
    s = DailyStateSeries("a", "X", {int(d): TradingState(int(rng.integers(3))) for d in days})
    v = build_profile_vector(s, 100)
    assert v.popcount == s.n_active
    slots = v.bits().reshape(3, 100).sum(axis=0)
    assert slots.max() == 1


def test_jaccard_examples():
    a = vec("a", [1, 1, 0, 0])
    assert jaccard(a, a) == 1.0
    assert jaccard(vec("a", [1, 0, 0, 0]), vec("b", [0, 1, 0, 0])) == 0.0
    assert jaccard(a, vec("b", [1, 0, 1, 0])) == pytest.approx(1 / 3, abs=0)


def test_jaccard_errors():
    with pytest.raises(ProfileError):
        jaccard(vec("a", [1, 0]), vec("b", [1, 0, 0]))
    with pytest.raises(ProfileError):
        jaccard(vec("a", [0, 0]), vec("b", [0, 0]))


def test_dissimilarity_examples():
    assert dissimilarity(1) == 0
    assert dissimilarity(0) == pytest.approx(1.41421356, abs=1e-8)
    assert dissimilarity(1 / 3) == pytest.approx(1.15470054, abs=1e-8)
    for bad in (-0.1, 1.1):
        with pytest.raises(ProfileError):
            dissimilarity(bad)


def test_matrix_small_examples():
    a, b = vec("a", [1, 1, 0, 0]), vec("b", [1, 1, 0, 0])
    assert dissimilarity_matrix([a, b]).square().tolist() == [[0, 0], [0, 0]]
    c = vec("c", [0, 0, 1, 1])
    assert dissimilarity_matrix([a, c])[0, 1] == math.sqrt(2)
    d = vec("d", [1, 0, 1, 0])
    m = dissimilarity_matrix([a, b, d]).square()
    assert m[0, 1] == 0
    assert m[0, 2] == m[2, 0] == dissimilarity(1 / 3)
    assert np.array_equal(m, m.T)


def random_vectors(rng, n, n_bits, density=0.05):
    out = []
    for k in range(n):
        bits = rng.random(n_bits) < density
        bits[rng.integers(n_bits)] = True
        out.append(pack_bits(f"v{k}", bits))
    return out


def test_kernel_matches_naive_loop():
    rng = np.random.default_rng(11)
    vs = random_vectors(rng, 60, 759, 0.03)
    m = dissimilarity_matrix(vs)
    bits = [v.bits() for v in vs]
    pairs = [(i, j) for i in range(60) for j in range(i)]
    for i, j in pairs[:1000]:
        inter = union = 0
        for x, y in zip(bits[i], bits[j]):
            inter += x and y
            union += x or y
        assert m[i, j] == math.sqrt(2 * (1 - inter / union))


def test_matrix_properties_and_workers():
    rng = np.random.default_rng(5)
    vs = random_vectors(rng, 150, 300, 0.1)
    one = dissimilarity_matrix(vs, workers=1)
    four = dissimilarity_matrix(vs, workers=4)
    assert np.array_equal(one.tri, four.tri)
    sq = one.square()
    assert np.array_equal(sq, sq.T)
    assert np.all(np.diag(sq) == 0)
    assert sq.min() >= 0 and sq.max() <= math.sqrt(2)


def test_streamed_matrix(tmp_path):
    rng = np.random.default_rng(6)
    vs = random_vectors(rng, 40, 200)
    mem = dissimilarity_matrix(vs)
    path = tmp_path / "m.bin"
    disk = dissimilarity_matrix(vs, path=path)
    assert np.array_equal(np.asarray(disk.tri), mem.tri)
    write_binary(mem, tmp_path / "n.bin")
    assert (tmp_path / "n.bin").read_bytes() == path.read_bytes()


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    m = dissimilarity_matrix(random_vectors(rng, 25, 100))
    write_binary(m, tmp_path / "m.bin")
    for mmap in (False, True):
        back = read_binary(tmp_path / "m.bin", mmap=mmap)
        assert back.ids == m.ids and np.array_equal(np.asarray(back.tri), m.tri)
    assert (tmp_path / "m.bin").read_bytes()[:8] == b"TPDISS01"


def test_binary_rejects_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOTMAGIC" + b"\0" * 16)
    with pytest.raises(ProfileError):
        read_binary(tmp_path / "x.bin")


def test_csv_debug_format(tmp_path):
    m = DissimilarityMatrix.from_square(["a", "b"], [[0, 0.5], [0.5, 0]])
    write_csv(m, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].split(",") == ["", "a", "b"]
    assert len(lines) == 3


def test_from_square_validation():
    with pytest.raises(ProfileError):
        DissimilarityMatrix.from_square(["a", "b"], [[0, 1], [2, 0]])
    with pytest.raises(ProfileError):
        DissimilarityMatrix.from_square(["a", "b"], [[1, 1], [1, 0]])
    with pytest.raises(ProfileError):
        DissimilarityMatrix.from_square(["a", "b"], [[0, -1], [-1, 0]])
