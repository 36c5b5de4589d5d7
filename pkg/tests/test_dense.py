from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbki.dense import (
    VandermondeMatrix,
    as_dense,
    orthonormalize,
    orthonormalize_against,
    principal_angles,
    sigma_max,
    sigma_min,
    singular_values,
    svd,
    vandermonde,
    vandermonde_inverse_inf_norm,
)


def _fraction_inverse(M):
    """Gauss-Jordan inverse over the rationals (oracle)."""
    n = len(M)
    A = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        p = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [x / piv for x in A[c]]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return [row[n:] for row in A]


# ---------------------------------------------------------------- orthonormalize


def test_orthonormalize_already_orthogonal():
    Q, rank = orthonormalize(np.array([[1.0, 0.0], [0.0, 2.0]]), drop_tol=0.0)
    assert rank == 2
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-15)


def test_orthonormalize_drops_dependent_column():
    Q, rank = orthonormalize(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert rank == 1
    assert Q.shape == (2, 1)


def test_orthonormalize_random_gaussian_range():
    M = np.random.default_rng(3).standard_normal((6, 3))
    Q, rank = orthonormalize(M)
    assert rank == 3
    assert np.max(np.abs(Q.T @ Q - np.eye(3))) <= 1e-12
    # oracle: left singular vectors span range(M)
    U = np.linalg.svd(M, full_matrices=False)[0]
    assert np.max(principal_angles(Q, U)) <= 1e-10


def test_orthonormalize_against_existing_basis():
    rng = np.random.default_rng(0)
    B, _ = orthonormalize(rng.standard_normal((10, 3)))
    W = np.hstack([B[:, :1] * 2.0, rng.standard_normal((10, 2))])
    Q = orthonormalize_against(B, W, drop_tol=1e-12)
    assert Q.shape[1] == 2
    assert np.max(np.abs(B.T @ Q)) <= 1e-13


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_orthonormalize_properties(n, m, seed):
    M = np.random.default_rng(seed).standard_normal((n, m))
    Q, rank = orthonormalize(M)
    assert rank == min(n, m)
    assert np.max(np.abs(Q.T @ Q - np.eye(rank))) <= 1e-12
    # range(Q) inside range(M)
    P = M @ np.linalg.pinv(M)
    assert np.max(np.abs(P @ Q - Q)) <= 1e-9


def test_as_dense_shapes_and_values():
    assert as_dense(np.array([1.0, 2.0])).shape == (2, 1)
    with pytest.raises(ValueError):
        as_dense(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_dense(np.array([[1.0, np.nan]]))


# ---------------------------------------------------------------- svd


def test_svd_diagonal():
    np.testing.assert_allclose(svd(np.diag([3.0, 2.0, 1.0])).singular_values, [3, 2, 1])


def test_svd_vandermonde_reconstructs():
    W = vandermonde([1.0, 0.5, 0.0], 3)
    r = svd(W)
    assert np.max(np.abs(r.reconstruct() - W)) <= 1e-12


def test_svd_one_by_one():
    r = svd(np.array([[-5.0]]))
    assert r.singular_values[0] == 5.0
    assert r.reconstruct()[0, 0] == pytest.approx(-5.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_svd_invariants(n, d, seed):
    M = np.random.default_rng(seed).standard_normal((n, d))
    r = svd(M)
    s = r.singular_values
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert np.max(np.abs(r.reconstruct() - M)) <= 1e-12 * max(1.0, s[0]) * 10
    np.testing.assert_allclose(r.U.T @ r.U, np.eye(s.size), atol=1e-12)
    np.testing.assert_allclose(r.V.T @ r.V, np.eye(s.size), atol=1e-12)


# ---------------------------------------------------------------- sigma_min / sigma_max


def test_sigma_min_identity():
    assert sigma_min(np.eye(4)) == pytest.approx(1.0, abs=1e-15)


def test_sigma_min_rank_deficient():
    assert sigma_min(np.array([[1.0, 1.0], [1.0, 1.0]])) <= 1e-14


def test_sigma_min_vandermonde_matches_inverse_norm():
    W = vandermonde([1.0, 0.5, 0.0], 3)
    inv = np.array([[float(x) for x in row] for row in _fraction_inverse(W.tolist())])
    expected = 1.0 / np.linalg.norm(inv, 2)
    assert sigma_min(W) == pytest.approx(expected, rel=1e-12)
    assert sigma_max(W) == pytest.approx(singular_values(W)[0])


# ---------------------------------------------------------------- principal angles


def test_principal_angles_identical():
    E = np.eye(5)[:, :2]
    assert np.max(principal_angles(E, E)) == 0.0


def test_principal_angles_orthogonal_lines():
    a = principal_angles(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
    assert a[0] == pytest.approx(math.pi / 2, abs=1e-15)


@pytest.mark.parametrize("theta", [1e-12, 1e-9, 1e-6, 0.3, 1.2])
def test_principal_angles_known_rotation(theta):
    rng = np.random.default_rng(11)
    Q, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    X = Q[:, :8]
    # rotate the first basis vector towards a direction outside the subspace
    Y = X.copy()
    Y[:, 0] = math.cos(theta) * X[:, 0] + math.sin(theta) * Q[:, 8]
    ang = principal_angles(X, Y)
    assert abs(np.max(ang) - theta) <= 1e-10


# ---------------------------------------------------------------- Vandermonde inverse norm


def test_vandermonde_inverse_reference_nodes():
    chain = vandermonde_inverse_inf_norm(VandermondeMatrix((1.0, 0.5, 0.0), 3))
    # oracle: exact rational inverse; both orientations give 8 here
    inv = _fraction_inverse(vandermonde([1.0, 0.5, 0.0], 3).tolist())
    col = max(sum(abs(inv[i][j]) for i in range(3)) for j in range(3))
    row = max(sum(abs(x) for x in r) for r in inv)
    assert col == row == 8
    assert chain.exact == pytest.approx(8.0, rel=1e-13)
    assert chain.gautschi_product == pytest.approx(8.0, rel=1e-13)
    assert chain.gap_power == pytest.approx(16.0, rel=1e-13)
    assert chain.row_exact == pytest.approx(8.0, rel=1e-13)


@pytest.mark.parametrize("node", [0.0, 0.3, 1.0])
def test_vandermonde_inverse_single_node(node):
    chain = vandermonde_inverse_inf_norm([node])
    assert chain.exact == 1.0 and chain.gap_power == 1.0


def test_vandermonde_inverse_chain_random_t5():
    rng = np.random.default_rng(5)
    for _ in range(10):
        nodes = np.sort(rng.uniform(0, 1, 5))[::-1]
        c = vandermonde_inverse_inf_norm(nodes)
        inv = _fraction_inverse(vandermonde(nodes, 5).tolist())
        col = float(max(sum(abs(inv[i][j]) for i in range(5)) for j in range(5)))
        assert c.exact == pytest.approx(col, rel=1e-7)
        assert c.exact <= c.gautschi_product * (1 + 1e-9)
        assert c.gautschi_product <= c.gap_power * (1 + 1e-9)
        assert c.row_exact <= c.gap_power * (1 + 1e-9)


def test_row_orientation_can_exceed_product():
    c = vandermonde_inverse_inf_norm([0.45, 0.15])
    assert c.row_exact > c.gautschi_product
    assert c.exact <= c.gautschi_product


def test_vandermonde_validation():
    with pytest.raises(ValueError):
        VandermondeMatrix((0.5, 0.5), 2)
    with pytest.raises(ValueError):
        VandermondeMatrix((1.5, 0.5), 2)
    with pytest.raises(ValueError):
        vandermonde_inverse_inf_norm(VandermondeMatrix((1.0, 0.5), 3))
