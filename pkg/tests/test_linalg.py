import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import polar

from helpers import random_orthonormal
from spcrglm import _kernels
from spcrglm.linalg import (
    center_columns,
    fix_column_signs,
    pc_scores,
    procrustes_A,
    soft_threshold,
    top_right_singular_vectors,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
eta = st.floats(0, 1e3)


@pytest.mark.parametrize("z,t,expected", [(3, 1, 2), (-3, 1, -2), (0.5, 1, 0), (1, 1, 0), (0, 0, 0)])
def test_soft_threshold_examples(z, t, expected):
    assert soft_threshold(z, t) == expected


def test_soft_threshold_rejects_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(finite, finite, eta)
def test_soft_threshold_properties(a, b, t):
    assert soft_threshold(-a, t) == -soft_threshold(a, t)
    assert abs(soft_threshold(a, t) - soft_threshold(b, t)) <= abs(a - b) * (1 + 1e-15)
    if abs(a) <= t:
        assert soft_threshold(a, t) == 0


@given(finite, eta)
def test_soft_threshold_solves_one_dimensional_lasso(a, t):
    s = soft_threshold(a, t)
    grid = s + np.linspace(-1, 1, 201)
    obj = 0.5 * (grid - a) ** 2 + t * np.abs(grid)
    assert 0.5 * (s - a) ** 2 + t * abs(s) <= obj.min() + 1e-9 * (1 + a * a)


def test_center_constant_column():
    raw = np.column_stack([np.full(6, 4.5), np.arange(6.0)])
    D = center_columns(raw)
    assert np.all(D.X[:, 0] == 0)
    assert D.col_means[0] == 4.5


def test_center_already_centered_unchanged():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    X -= X.mean(axis=0)
    np.testing.assert_allclose(center_columns(X).X, X, atol=1e-12)


def test_center_random_column_sums():
    raw = np.random.default_rng(1).normal(size=(5, 3))
    assert np.all(np.abs(center_columns(raw).X.sum(axis=0)) < 1e-10)


def test_center_requires_two_rows():
    with pytest.raises(ValueError):
        center_columns(np.ones((1, 3)))


@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 6)), elements=st.floats(-1e3, 1e3)),
       st.booleans())
def test_center_invariant(raw, scale):
    D = center_columns(raw, scale=scale)
    n = raw.shape[0]
    assert np.all(np.abs(D.X.sum(axis=0)) <= 1e-9 * n * max(1.0, np.abs(raw).max()))
    np.testing.assert_allclose(D.transform(raw), D.X, atol=1e-12 * (1 + np.abs(raw).max()))


def test_scaling_gives_unit_variance():
    raw = np.random.default_rng(2).normal(scale=[1, 10, 0.1], size=(50, 3))
    np.testing.assert_allclose(center_columns(raw, scale=True).X.std(axis=0), 1.0)


def test_pc_scores_examples():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(7, 4))
    e = np.zeros((4, 1))
    e[2] = 1
    np.testing.assert_array_equal(pc_scores(X, e)[:, 0], X[:, 2])
    assert not np.any(pc_scores(X, np.zeros((4, 2))))
    B = rng.normal(size=(4, 3))
    naive = np.zeros((7, 3))
    for i in range(7):
        for j in range(3):
            for l in range(4):
                naive[i, j] += X[i, l] * B[l, j]
    np.testing.assert_allclose(pc_scores(X, B), naive, atol=1e-12)


def test_fix_column_signs():
    B = np.array([[0.1, 2.0], [-3.0, -1.0]])
    np.testing.assert_array_equal(fix_column_signs(B), [[-0.1, 2.0], [3.0, -1.0]])


def test_procrustes_identity_gram_returns_B():
    rng = np.random.default_rng(4)
    X, _ = np.linalg.qr(rng.normal(size=(20, 6)))
    B = random_orthonormal(rng, 6, 3)
    res = procrustes_A(X, B)
    assert not res.degenerate
    np.testing.assert_allclose(res.A, B, atol=1e-10)


def test_procrustes_zero_B_degenerate():
    X = np.random.default_rng(5).normal(size=(10, 4))
    res = procrustes_A(X, np.zeros((4, 2)))
    assert res.degenerate
    assert np.linalg.norm(res.A.T @ res.A - np.eye(2)) <= 1e-10
    np.testing.assert_array_equal(res.A, np.eye(4)[:, :2])


def test_procrustes_rank_deficient_completion():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(15, 5))
    B = np.zeros((5, 3))
    B[:, 0] = rng.normal(size=5)
    res = procrustes_A(X, B)
    assert res.degenerate
    assert np.linalg.norm(res.A.T @ res.A - np.eye(3)) <= 1e-10
    M = X.T @ X @ B
    # the recovered direction is still the optimal one
    assert np.trace(res.A.T @ M) == pytest.approx(np.linalg.norm(M[:, 0]), rel=1e-12)


def test_procrustes_beats_random_rotations():
    rng = np.random.default_rng(7)
    X, B = rng.normal(size=(20, 6)), rng.normal(size=(6, 2))
    M = X.T @ X @ B
    best = np.trace(procrustes_A(X, B).A.T @ M)
    for _ in range(1000):
        Q = random_orthonormal(rng, 6, 2)
        assert best >= np.trace(Q.T @ M) - 1e-9


def test_procrustes_square_is_polar_factor():
    rng = np.random.default_rng(8)
    X, B = rng.normal(size=(30, 4)), rng.normal(size=(4, 4))
    A = procrustes_A(X, B).A
    U, _ = polar(X.T @ X @ B)
    np.testing.assert_allclose(A, U, atol=1e-10)
    assert np.linalg.norm(A.T @ A - np.eye(4)) <= 1e-10


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 5))
def test_procrustes_orthonormal_always(seed, p, kk):
    rng = np.random.default_rng(seed)
    k = min(p, kk + 1)
    X = rng.normal(size=(max(p + 1, 8), p))
    B = rng.normal(size=(p, k)) * (rng.random((p, k)) < 0.5)
    A, _ = procrustes_A(X, B)
    assert np.linalg.norm(A.T @ A - np.eye(k)) <= 1e-10
    M = X.T @ X @ B
    U, d, Vt = np.linalg.svd(M, full_matrices=False)
    assert np.linalg.norm(U * d @ Vt - M) <= 1e-8 * max(np.linalg.norm(M), 1e-300)
    Ak, degenerate = _kernels.procrustes(np.ascontiguousarray(M))
    np.testing.assert_allclose(Ak, A, atol=1e-10)


def test_top_singular_vectors_rank_one():
    rng = np.random.default_rng(9)
    X = np.zeros((12, 4))
    X[:, 2] = rng.normal(size=12)
    X -= X.mean(axis=0)
    np.testing.assert_allclose(top_right_singular_vectors(X, 1)[:, 0], [0, 0, 1, 0], atol=1e-12)


def test_top_singular_vectors_wide_matrix_padded():
    X = np.random.default_rng(10).normal(size=(3, 6))
    V = top_right_singular_vectors(X, 5)
    np.testing.assert_allclose(V.T @ V, np.eye(5), atol=1e-10)
