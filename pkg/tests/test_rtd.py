import json

import numpy as np
import pytest

from oracles import sweep_barcode
from rsnntopo.errors import InputDomainError
from rsnntopo.rtd import (
    classical_mds,
    cross_barcode_h0,
    mean_pairwise_divergence,
    rtd_score,
    save_coordinates,
)


def sym(vals, n):
    m = np.zeros((n, n))
    for (i, j), v in vals.items():
        m[i, j] = m[j, i] = v
    return m


def random_matrix(rng, n, integer=False):
    a = rng.integers(1, 5, (n, n)).astype(float) if integer else rng.random((n, n))
    a = np.triu(a, 1)
    return a + a.T


EX1_W = sym({(0, 1): 1, (1, 2): 2, (0, 2): 3}, 3)
EX1_WT = sym({(0, 1): 2, (1, 2): 1, (0, 2): 3}, 3)
EX2_W = sym({(0, 1): 1, (0, 2): 2, (1, 2): 3}, 3)


def test_first_example_bars():
    bars = cross_barcode_h0(EX1_W, EX1_WT).bars
    assert bars.tolist() == [[1.0, 1.0], [1.0, 2.0]]
    assert sweep_barcode(EX1_W, EX1_WT) == [(1.0, 1.0), (1.0, 2.0)]


def test_first_example_rtd_from_oracle():
    # swapping points 0 and 2 exchanges the two matrices, so both directions agree
    rep = rtd_score(EX1_W, EX1_WT)
    assert rep.rtd_ab == 1.0 and rep.rtd_ba == 1.0
    assert rep.rtd == 1.0


def test_second_example():
    assert cross_barcode_h0(EX2_W, 2 * EX2_W).total_length() == 0.0
    assert cross_barcode_h0(2 * EX2_W, EX2_W).bars.tolist() == [[1.0, 2.0], [2.0, 4.0]]
    assert rtd_score(EX2_W, 2 * EX2_W).rtd == 1.5


def test_identical_inputs_have_zero_length_bars():
    rng = np.random.default_rng(0)
    a = random_matrix(rng, 6)
    bc = cross_barcode_h0(a, a)
    assert len(bc.bars) == 5
    assert np.all(bc.lengths == 0)


@pytest.mark.parametrize("integer", [False, True])
def test_matches_sweep_oracle(integer):
    rng = np.random.default_rng(10 + integer)
    for _ in range(60):
        n = int(rng.integers(2, 8))
        a, b = random_matrix(rng, n, integer), random_matrix(rng, n, integer)
        got = [tuple(r) for r in cross_barcode_h0(a, b).bars.tolist()]
        assert got == pytest.approx(sweep_barcode(a, b))


def test_bar_count_and_order():
    rng = np.random.default_rng(4)
    for n in range(1, 8):
        a, b = random_matrix(rng, n), random_matrix(rng, n)
        bars = cross_barcode_h0(a, b).bars
        assert bars.shape == (max(n - 1, 0), 2)
        assert np.all(bars[:, 1] >= bars[:, 0])


def test_dominance_measures_merge_delay():
    # when b <= a entrywise, the union filtration is b itself
    rng = np.random.default_rng(5)
    a = random_matrix(rng, 6)
    b = a * rng.uniform(0.2, 1.0, a.shape)
    b = np.minimum(b, b.T)
    bars = cross_barcode_h0(a, b).bars
    assert [tuple(r) for r in bars.tolist()] == pytest.approx(sweep_barcode(a, b))
    births = sorted(bars[:, 0])
    from scipy.sparse.csgraph import minimum_spanning_tree
    mst_b = minimum_spanning_tree(b).data
    assert births == pytest.approx(sorted(mst_b))


def test_total_length_is_mst_difference():
    from scipy.sparse.csgraph import minimum_spanning_tree
    rng = np.random.default_rng(6)
    for _ in range(20):
        a, b = random_matrix(rng, 9), random_matrix(rng, 9)
        expect = minimum_spanning_tree(a).sum() - minimum_spanning_tree(np.minimum(a, b)).sum()
        assert cross_barcode_h0(a, b).total_length() == pytest.approx(expect, abs=1e-12)


def test_rtd_axioms():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        a, b = random_matrix(rng, n), random_matrix(rng, n)
        assert rtd_score(a, a).rtd == 0.0
        rep = rtd_score(a, b)
        assert rep.rtd >= 0
        assert rep.rtd == pytest.approx(rtd_score(b, a).rtd, abs=1e-12)
        p = rng.permutation(n)
        assert rtd_score(a[np.ix_(p, p)], b[np.ix_(p, p)]).rtd == pytest.approx(rep.rtd, abs=1e-12)


def test_size_mismatch():
    with pytest.raises(InputDomainError):
        rtd_score(np.zeros((3, 3)), np.zeros((4, 4)))
    with pytest.raises(InputDomainError):
        cross_barcode_h0(np.zeros((2, 3)), np.zeros((2, 3)))


def test_report_json(tmp_path):
    rep = rtd_score(EX2_W, 2 * EX2_W, labels=("x", "y"))
    rep.save(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["rtd"] == 1.5 and d["labels"] == ["x", "y"] and d["n"] == 3
    assert set(d["diagnostics"]) == {"mean_pairwise_divergence"}


def test_mean_pairwise_divergence():
    rng = np.random.default_rng(8)
    a = random_matrix(rng, 5)
    assert mean_pairwise_divergence(a, a) == 0.0
    shifted = a + 0.3 * (1 - np.eye(5))
    assert mean_pairwise_divergence(a, shifted) == pytest.approx(0.3)
    b = random_matrix(rng, 5)
    loop = [abs(a[i, j] - b[i, j]) for i in range(5) for j in range(i + 1, 5)]
    assert mean_pairwise_divergence(a, b) == pytest.approx(sum(loop) / len(loop), abs=1e-15)


def _pairwise(x):
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))


def test_mds_reconstruction(tmp_path):
    assert not classical_mds(np.zeros((4, 4)), 2).any()
    line = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], float)
    assert _pairwise(classical_mds(line, 1)) == pytest.approx(line, abs=1e-9)
    pts = np.random.default_rng(9).normal(size=(8, 3))
    d = _pairwise(pts)
    coords = classical_mds(d, 3)
    assert _pairwise(coords) == pytest.approx(d, abs=1e-9)
    save_coordinates(coords, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("dim0,dim1,dim2\n")
    with pytest.raises(InputDomainError):
        classical_mds(d, 8)
