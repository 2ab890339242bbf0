import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncount.factorizations import (BaryTree, NaiveFactorization, SquareRootToeplitz, TreeNode, gram_entry,
                                     norms, online_noise_stream, sqrt_coeff, sqrt_coeffs, tree_query_nodes)
from oracles import (balanced_digit_table, gram_exact, plain_digit_weight, prefix_matrix, sqrt_coeff_exact,
                     sqrt_matrix)

TREE_CASES = [(2, 8, "plain"), (2, 11, "plain"), (2, 8, "plain_reduced"), (3, 9, "plain"), (3, 27, "subtract"),
              (3, 27, "subtract_reduced"), (3, 10, "subtract_reduced"), (5, 25, "subtract_reduced"),
              (5, 31, "subtract"), (7, 50, "subtract_reduced"), (4, 17, "plain")]


def test_sqrt_coeff_examples():
    assert sqrt_coeff(0) == 1
    assert [sqrt_coeff(t) for t in (1, 2, 3)] == [0.5, 0.375, 0.3125]
    r10 = sqrt_coeff(10)
    assert 1 / math.sqrt(11 * math.pi) <= r10 <= 1 / math.sqrt(10 * math.pi)


def test_sqrt_coeffs_match_exact_binomials():
    r = sqrt_coeffs(60)
    for t in range(60):
        assert r[t] == pytest.approx(float(sqrt_coeff_exact(t)), rel=1e-13)
    assert np.all(np.diff(r) < 0) and np.all(r > 0)


def test_sqrt_coeff_bracket():
    r = sqrt_coeffs(5000)
    t = np.arange(1, 5000)
    assert np.all(1 / np.sqrt(np.pi * (t + 1)) <= r[1:])
    assert np.all(r[1:] <= 1 / np.sqrt(np.pi * t))


def test_gram_examples():
    assert gram_entry(SquareRootToeplitz(2), 0, 0) == pytest.approx(1.25)
    assert gram_entry(SquareRootToeplitz(2), 1, 1) == pytest.approx(1.0)
    assert gram_entry(SquareRootToeplitz(4), 0, 0) == pytest.approx(1.48828125, abs=1e-15)


def test_gram_matches_exact_rational_sums():
    f = SquareRootToeplitz(20)
    for i in range(20):
        for j in range(20):
            assert f.gram(i, j) == pytest.approx(float(gram_exact(20, i, j)), rel=1e-12)


def test_sqrt_matrix_squares_to_prefix():
    for T in (1, 5, 32):
        f = SquareRootToeplitz(T)
        R = f.right_matrix()
        assert np.allclose(R, sqrt_matrix(T))
        assert np.allclose(f.left_matrix() @ R, prefix_matrix(T), atol=1e-12)


def test_reconstruction_all_factorizations():
    rng = np.random.default_rng(0)
    cases = [NaiveFactorization(40), SquareRootToeplitz(40)] + [BaryTree(b, T, v) for b, T, v in TREE_CASES]
    for f in cases:
        x = rng.integers(-3, 4, size=f.T)
        rx = f.right_matrix() @ x
        truth = np.cumsum(x)
        for t in range(f.T):
            assert f.decode(t, rx) == pytest.approx(truth[t], abs=1e-9)
        assert np.allclose(f.left_matrix() @ f.right_matrix(), prefix_matrix(f.T), atol=1e-9)


@pytest.mark.parametrize("T", [1000, 4096])
def test_tree_reconstruction_large(T):
    rng = np.random.default_rng(T)
    for f in (BaryTree(3, T, "subtract_reduced"), BaryTree(2, T, "plain")):
        x = rng.integers(-5, 6, size=T)
        rx = f.right_matrix() @ x
        assert np.allclose(f.left_sparse() @ rx, np.cumsum(x))


def test_tree_structure():
    f = BaryTree(3, 27, "subtract")
    assert f.h == 3 and f.m == (3**4 - 1) // 2
    R = f.right_matrix()
    for row in range(f.m):
        node = f.node_at(row)
        lo, hi = node.interval(3)
        expected = np.zeros(27)
        expected[lo:hi] = 1
        assert np.array_equal(R[row], expected)


def test_reduced_zeroes_one_child_per_parent_and_decoder_avoids_it():
    for b, T in [(3, 27), (5, 25), (3, 20)]:
        f = BaryTree(b, T, "subtract_reduced")
        R = f.right_matrix()
        zero_rows = {r for r in range(f.m) if not R[r].any()}
        # nodes entirely past T have empty rows after truncation; set those aside
        beyond = {r for r in zero_rows if f.node_at(r).interval(b)[0] >= T}
        zeroed = [f.node_at(r) for r in zero_rows - beyond]
        assert all(n.index % b == (b - 1) // 2 and n.level < f.h for n in zeroed)
        assert all(f.is_zeroed(n) for n in zeroed)
        internal_parents = {(n.level + 1, n.index // b) for n in zeroed}
        assert len(internal_parents) == len(zeroed)
        used = {f.node_index(n) for t in range(T) for _, n in f.query_nodes(t)}
        assert not used & (zero_rows - beyond)
        L = f.left_matrix()
        assert not L[:, sorted(zero_rows - beyond)].any()


def test_query_node_examples():
    f = BaryTree(2, 8, "plain")
    assert len(tree_query_nodes(f, 6)) == 3
    g = BaryTree(3, 3, "subtract_reduced")
    assert tree_query_nodes(g, 1) == [(1, TreeNode(1, 0)), (-1, TreeNode(0, 2))]
    for b, T, v in TREE_CASES:
        f = BaryTree(b, T, v)
        if f.subtract and b**f.h == T:
            assert tree_query_nodes(f, T - 1) == [(1, TreeNode(f.h, 0))]
    with pytest.raises(IndexError):
        tree_query_nodes(f, f.T)


def test_query_sizes_match_digit_oracles():
    for b in (2, 3, 5):
        for h in range(1, 6 if b < 5 else 5):
            sizes = BaryTree(b, b**h, "plain").query_sizes()
            assert [plain_digit_weight(t + 1, b) for t in range(b**h)] == list(sizes)
    for b in (3, 5, 7):
        for h in range(1, 6 if b < 7 else 5):
            table = balanced_digit_table(b, h)
            sizes = BaryTree(b, b**h, "subtract").query_sizes()
            assert [table[t + 1] for t in range(b**h)] == list(sizes)


def test_norm_examples():
    assert norms(BaryTree(2, 8, "plain")).l_two_to_inf == pytest.approx(math.sqrt(3))
    assert norms(BaryTree(3, 3, "subtract")).l_two_to_inf == pytest.approx(math.sqrt(2))
    n = norms(NaiveFactorization(16))
    assert (n.l_two_to_inf, n.l_frobenius_over_sqrtT, n.r_one_to_two) == (1, 1, 4)
    s = norms(SquareRootToeplitz(4))
    assert s.l_two_to_inf ** 2 == pytest.approx(1.48828125)
    assert s.r_one_to_two ** 2 == pytest.approx(1.48828125)


def test_norms_match_dense_matrices():
    for f in [SquareRootToeplitz(30), NaiveFactorization(9)] + [BaryTree(b, T, v) for b, T, v in TREE_CASES]:
        L, R = f.left_matrix(), f.right_matrix()
        n = f.norms()
        assert n.l_two_to_inf == pytest.approx(np.sqrt((L**2).sum(axis=1).max()))
        assert n.l_frobenius_over_sqrtT == pytest.approx(np.sqrt((L**2).sum() / f.T))
        assert n.r_one_to_two == pytest.approx(np.sqrt((R**2).sum(axis=0).max()))


def test_noise_stream_matches_left_matrix():
    for f in [SquareRootToeplitz(25), NaiveFactorization(10), BaryTree(3, 25, "subtract_reduced"),
              BaryTree(2, 13, "plain")]:
        # a zero scale gives zeros; a unit scale must be a fixed linear image of z
        assert list(online_noise_stream(f, 0.0, 1)) == [0.0] * f.T
        a = list(online_noise_stream(f, 1.0, 7))
        b = list(online_noise_stream(f, 1.0, 7))
        assert a == b and len(a) == f.T


def test_online_noise_variance_matches_row_norms():
    for f in [NaiveFactorization(8), SquareRootToeplitz(8), BaryTree(3, 9, "subtract_reduced")]:
        draws = np.array([list(f.noise_stream(2.0, seed)) for seed in range(4000)])
        expected = 4.0 * f.row_norms_sq()
        assert np.allclose(draws.var(axis=0), expected, rtol=0.12)


def test_batch_noise_variance_matches_row_norms():
    rng = np.random.default_rng(3)
    for f in [NaiveFactorization(64), SquareRootToeplitz(64), BaryTree(3, 27, "subtract_reduced")]:
        out = f.sample_noise(100_000, 1.5, rng)
        assert np.allclose((out**2).mean(axis=0), 2.25 * f.row_norms_sq(), rtol=0.03)


def test_laplace_noise_scale():
    f = NaiveFactorization(4)
    out = f.sample_noise(200_000, 1.0, np.random.default_rng(0), "laplace")
    assert np.allclose(out.var(axis=0), 2.0, rtol=0.03)
    assert np.allclose(np.abs(out).mean(axis=0), 1.0, rtol=0.02)


def test_gram_monotonicity_small():
    f = SquareRootToeplitz(24)
    C = np.array([[f.gram(i, j) for j in range(24)] for i in range(24)])
    assert np.allclose(C, C.T)
    assert np.allclose(C, f.right_matrix().T @ f.right_matrix())


def test_invalid_trees():
    with pytest.raises(ValueError):
        BaryTree(2, 8, "subtract")
    with pytest.raises(ValueError):
        BaryTree(4, 8, "subtract_reduced")
    with pytest.raises(ValueError):
        BaryTree(1, 8)
    with pytest.raises(ValueError):
        BaryTree(3, 9, "bogus")


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 3, 4, 5, 7]), st.integers(1, 300), st.sampled_from(["plain", "subtract", "subtract_reduced",
                                                                               "plain_reduced"]), st.data())
def test_tree_query_nodes_telescope_to_prefix(b, T, variant, data):
    if variant.startswith("subtract") and b % 2 == 0:
        return
    f = BaryTree(b, T, variant)
    t = data.draw(st.integers(0, T - 1))
    cover = np.zeros(b ** f.h)
    for sign, node in f.query_nodes(t):
        lo, hi = node.interval(b)
        cover[lo:hi] += sign
        assert not f.is_zeroed(node)
    assert np.array_equal(cover[: t + 1], np.ones(t + 1))
    assert not cover[t + 1:].any()
