import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ari_pair_counting
from tradeprofiles.compare import (
    CompareError,
    ContingencyTable,
    adjusted_rand_index,
    ari_sweep,
    cluster_size_distribution,
    evaluate_thresholds,
    read_sweep_csv,
    restrict_partition,
    write_size_distribution_csv,
    write_sweep_csv,
)
from tradeprofiles.hclust import cut, linkage
from tradeprofiles.partition import Partition, PartitionError, read_partition_csv, write_partition_csv
from tradeprofiles.profiles import DissimilarityMatrix


def P(text):
    """'ab|cd' -> partition with blocks {a,b} and {c,d}."""
    return Partition.from_blocks(block for block in text.split("|"))


def test_ari_examples():
    assert adjusted_rand_index(P("ab|cd"), P("ab|cd")) == 1.0
    assert adjusted_rand_index(P("ab|cd"), P("ac|bd")) == -0.5
    assert ari_pair_counting([0, 0, 1, 1], [0, 1, 0, 1]) == -0.5


def test_ari_degenerate_cases():
    assert adjusted_rand_index(P("a|b|c"), P("a|b|c")) == 1.0
    assert adjusted_rand_index(P("abc"), P("abc")) == 1.0
    # mismatched trivial partitions fall out of the formula
    assert adjusted_rand_index(P("abc"), P("a|b|c")) == 0.0


def test_ari_element_mismatch():
    with pytest.raises(CompareError):
        adjusted_rand_index(P("ab"), P("ac"))


def test_contingency_sums():
    t = ContingencyTable.of(P("abc|de"), P("ab|cde"))
    assert t.n == 5 and sum(t.counts.values()) == 5
    for u, a in t.row_sums.items():
        assert a == sum(c for (x, _), c in t.counts.items() if x == u)
    for v, b in t.col_sums.items():
        assert b == sum(c for (_, y), c in t.counts.items() if y == v)


def test_null_mean_near_zero():
    rng = np.random.default_rng(0)
    elems = [f"e{k}" for k in range(100)]
    base = np.repeat(np.arange(5), 20)
    ref = Partition.from_labels(elems, base)
    vals = [adjusted_rand_index(ref, Partition.from_labels(elems, rng.permutation(base))) for _ in range(1000)]
    assert abs(np.mean(vals)) <= 0.02


labels = st.lists(st.integers(0, 4), min_size=1, max_size=30)


@settings(max_examples=200)
@given(labels, st.data())
def test_ari_symmetric_bounded_and_matches_pair_counting(x, data):
    y = data.draw(st.lists(st.integers(0, 4), min_size=len(x), max_size=len(x)))
    elems = [f"e{k}" for k in range(len(x))]
    p, q = Partition.from_labels(elems, x), Partition.from_labels(elems, y)
    a = adjusted_rand_index(p, q)
    assert a == adjusted_rand_index(q, p)
    assert a <= 1.0
    assert (a == 1.0) == (p == q) or len(x) < 2
    assert a == ari_pair_counting(x, y)


def test_restrict_examples():
    p = P("ab|cd")
    assert adjusted_rand_index(restrict_partition(p, "abcd"), p) == 1.0
    assert restrict_partition(p, "c").n_clusters == 1
    assert sorted(map(sorted, restrict_partition(p, "acd").blocks())) == [["a"], ["c", "d"]]
    with pytest.raises(CompareError):
        restrict_partition(p, "ax")


@given(st.lists(st.integers(0, 3), min_size=1, max_size=20), st.integers(0, 2**32 - 1))
def test_restrict_commutes(x, seed):
    elems = [f"e{k}" for k in range(len(x))]
    p = Partition.from_labels(elems, x)
    rng = np.random.default_rng(seed)
    s = [e for e in elems if rng.random() < 0.7]
    s2 = [e for e in s if rng.random() < 0.7]
    assert restrict_partition(restrict_partition(p, s), s2) == restrict_partition(p, s2)


def tree_of(points):
    pts = np.asarray(points, dtype=float)
    d = np.abs(pts[:, None] - pts[None, :])
    return linkage(DissimilarityMatrix.from_square([f"x{k}" for k in range(len(pts))], d), "average")


def test_sweep_recovers_grid_aligned_cut():
    tree = tree_of([0, 0.1, 0.2, 1.0, 1.05, 2.3, 2.32, 2.4])
    for t_star in (0.13, 0.5, 0.8):
        ref = cut(tree, t_star)
        res = ari_sweep(tree, ref, max_height=3.0)
        assert res.best_ari == 1.0
        assert cut(tree, res.best_threshold) == ref
        assert res.best_threshold <= t_star


def test_sweep_identical_profiles():
    ids = [f"x{k}" for k in range(5)]
    tree = linkage(DissimilarityMatrix.from_square(ids, np.zeros((5, 5))), "average")
    ref = Partition.from_labels(ids, [0] * 5)
    vals = evaluate_thresholds(tree, ref, [0.01, 0.5, 1.0, 1.4])
    assert vals == [1.0] * 4
    res = ari_sweep(tree, ref)
    assert res.best_threshold == 0.01 and res.best_ari == 1.0


def test_sweep_best_is_first_maximum_and_grids():
    tree = tree_of([0, 0.3, 0.6, 5.0, 5.3])
    ref = Partition.from_labels([f"x{k}" for k in range(5)], [0, 0, 0, 1, 1])
    res = ari_sweep(tree, ref)
    assert res.best_ari == max(res.ari_values)
    first = res.ari_values.index(res.best_ari)
    assert res.thresholds[first] == res.best_threshold
    assert res.thresholds == sorted(res.thresholds)
    coarse = [t for t, s in zip(res.thresholds, res.stages) if s == "coarse"]
    assert coarse == [round(0.1 * k, 10) for k in range(16)]


def test_sweep_subset_must_match_reference():
    tree = tree_of([0, 1, 2])
    with pytest.raises(CompareError):
        ari_sweep(tree, Partition.from_labels(["x0", "x1"], [0, 0]), subset=["x0", "x1", "x2"])
    with pytest.raises(CompareError):
        ari_sweep(tree, Partition.from_labels(["x0"], [0]), fine_step=0.2)


def test_size_distribution_examples():
    elems = [f"e{k}" for k in range(10)]
    assert cluster_size_distribution(Partition.from_labels(elems, range(10))) == ({1: 10}, {1: 1.0})
    assert cluster_size_distribution(Partition.from_labels(elems, [0] * 10))[0] == {10: 1}
    hist, dens = cluster_size_distribution(P("ab|cd|e"))
    assert hist == {1: 1, 2: 2} and dens == {1: 1 / 3, 2: 2 / 3}
    assert cluster_size_distribution(P("ab|cd|e"), min_size=2)[0] == {2: 2}


def test_sweep_csv_roundtrip(tmp_path):
    tree = tree_of([0, 0.3, 0.6, 5.0, 5.3])
    ref = Partition.from_labels([f"x{k}" for k in range(5)], [0, 0, 0, 1, 1])
    res = ari_sweep(tree, ref, method="average")
    write_sweep_csv(res, tmp_path / "s.csv")
    assert read_sweep_csv(tmp_path / "s.csv") == res


def test_size_csv(tmp_path):
    write_size_distribution_csv({"x": P("ab|cd|e")}, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines() == [
        "partition,size,count,density",
        "x,1,1,0.3333333333333333",
        "x,2,2,0.6666666666666666",
    ]


def test_partition_csv_roundtrip(tmp_path):
    p = P("ab|cde|f")
    write_partition_csv(p, tmp_path / "p.csv")
    assert read_partition_csv(tmp_path / "p.csv") == p
    (tmp_path / "bad.csv").write_text("element_id,cluster_id\na,zz\n")
    with pytest.raises(PartitionError):
        read_partition_csv(tmp_path / "bad.csv")


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition({"a": 0, "b": 2})
    with pytest.raises(PartitionError):
        Partition.from_labels(["a", "a"], [0, 1])
