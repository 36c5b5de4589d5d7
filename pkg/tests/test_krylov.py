import math
import warnings

import numpy as np
import pytest

from rbki.dense import orthonormalize, principal_angles, svd
from rbki.krylov import (
    KrylovBasis,
    KrylovConfig,
    build_krylov_basis,
    error_metrics,
    estimate_singular_values,
    gaussian_start_block,
    krylov_span,
    matvecs_to_target,
    target_satisfied,
    rbki,
    rbki_trace,
    simulated_block,
    truncate,
)
from rbki.matgen import SpectrumSpec, synth_matrix
from rbki.operators import DenseOperator


# ---------------------------------------------------------------- starting block


def test_start_block_deterministic():
    np.testing.assert_array_equal(gaussian_start_block(50, 3, 7), gaussian_start_block(50, 3, 7))
    assert not np.array_equal(gaussian_start_block(50, 3, 7), gaussian_start_block(50, 3, 8))


def test_start_block_column_norm_concentrates():
    g = gaussian_start_block(2000, 1, 0)
    assert 1000 <= float(g[:, 0] @ g[:, 0]) <= 3000


def test_start_block_mean():
    assert abs(gaussian_start_block(1000, 1000, 1).mean()) < 0.01


# ---------------------------------------------------------------- basis


def test_basis_q1_is_range_of_AtG():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((12, 9))
    G = rng.standard_normal((12, 3))
    basis = build_krylov_basis(DenseOperator(A), G, 1)
    Q, _ = orthonormalize(A.T @ G)
    assert np.max(principal_angles(basis.Z, Q)) <= 1e-10


def test_basis_spans_space_for_distinct_diagonal():
    A = np.diag([1.0, 0.5, 0.25])
    basis = build_krylov_basis(DenseOperator(A), np.random.default_rng(1).standard_normal((3, 1)), 3)
    assert basis.Z.shape[1] == 3
    assert np.linalg.matrix_rank(basis.Z) == 3


def test_basis_matvec_count_convention():
    rng = np.random.default_rng(2)
    op = DenseOperator(rng.standard_normal((60, 50)))
    basis = build_krylov_basis(op, rng.standard_normal((60, 4)), 5)
    # one block with A^T, then four rounds of A followed by A^T
    assert basis.matvec_cost == 4 * (1 + 2 * 4) == 36
    assert op.matvec_count == 36


def test_basis_orthonormal_and_capped():
    rng = np.random.default_rng(3)
    op = DenseOperator(rng.standard_normal((20, 10)))
    with pytest.warns(RuntimeWarning, match="exceeds d"):
        basis = build_krylov_basis(op, rng.standard_normal((20, 4)), 5)
    Z = basis.Z
    assert Z.shape[1] == 10
    assert np.max(np.abs(Z.T @ Z - np.eye(10))) <= 1e-12


# ---------------------------------------------------------------- rbki


@pytest.mark.parametrize("b", [1, 2, 5])
def test_exact_rank_recovered(b):
    k = 5
    rng = np.random.default_rng(b)
    U, _ = np.linalg.qr(rng.standard_normal((40, k)))
    V, _ = np.linalg.qr(rng.standard_normal((30, k)))
    A = (U * np.array([5.0, 4.0, 3.0, 2.0, 1.0])) @ V.T
    approx = rbki(DenseOperator(A), KrylovConfig(k, b, -(-k // b) + 2, seed=0))
    assert np.linalg.norm(A - approx.to_dense()) <= 1e-8 * np.linalg.norm(A)


def test_diagonal_top_two():
    A = np.diag([3.0, 2.0, 1.0, 0.5])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        approx = rbki(DenseOperator(A), KrylovConfig(2, 2, 6, seed=0))
    np.testing.assert_allclose(approx.sigma_sq_estimates, [9.0, 4.0], atol=1e-6)
    opt = math.sqrt(1.0 + 0.25)
    assert np.linalg.norm(A - approx.to_dense()) / opt == pytest.approx(1.0, abs=1e-6)


def test_rbki_cost_and_apply():
    A, _ = synth_matrix(SpectrumSpec("geometric", 80, 60, seed=1, ratio=0.8))
    op = DenseOperator(A)
    cfg = KrylovConfig(6, 3, 4, seed=5)
    approx = rbki(op, cfg)
    assert approx.matvec_cost == 2 * cfg.b * cfg.q == op.matvec_count
    assert approx.rank == 6
    x = np.random.default_rng(0).standard_normal(60)
    np.testing.assert_allclose(approx.apply(x), approx.to_dense() @ x, atol=1e-12)
    y = np.random.default_rng(1).standard_normal(80)
    np.testing.assert_allclose(approx.apply_transpose(y), approx.to_dense().T @ y, atol=1e-12)


def test_rbki_deterministic():
    A, _ = synth_matrix(SpectrumSpec("polynomial", 50, 50, seed=2))
    a = rbki(DenseOperator(A), KrylovConfig(5, 2, 4, seed=3)).to_dense()
    b = rbki(DenseOperator(A), KrylovConfig(5, 2, 4, seed=3)).to_dense()
    np.testing.assert_array_equal(a, b)


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(0, 1, 1)
    with pytest.raises(ValueError):
        KrylovConfig(3, 4, 1)
    with pytest.raises(ValueError):
        rbki(DenseOperator(np.eye(3)), KrylovConfig(4, 1, 2))


# ---------------------------------------------------------------- error metrics


def test_metrics_exact_truncation():
    A, ref = synth_matrix(SpectrumSpec("geometric", 30, 20, seed=0, ratio=0.7))
    op = DenseOperator(A)
    k = 4
    Z = ref.V[:, :k]
    basis = KrylovBasis(Z=Z, b=k, q=1, seed=0, matvec_cost=0)
    approx = truncate(basis, A @ Z, k, 0)
    m = error_metrics(op, approx, ref)
    assert m.frobenius_ratio == pytest.approx(1.0, abs=1e-12)
    assert m.spectral_ratio == pytest.approx(1.0, abs=1e-5)
    assert m.max_index_residual <= 1e-12


def test_metrics_zero_approximation():
    A = np.diag([2.0, 1.0])
    basis = KrylovBasis(Z=np.zeros((2, 0)), b=1, q=1, seed=0, matvec_cost=0)
    approx = truncate(basis, np.zeros((2, 0)), 1, 0)
    m = error_metrics(DenseOperator(A), approx, svd(A))
    assert m.frobenius_ratio == pytest.approx(math.sqrt(5.0), rel=1e-14)
    assert not m.solves(0.5)


# ---------------------------------------------------------------- trace


def test_trace_matches_direct_runs():
    A, ref = synth_matrix(SpectrumSpec("geometric", 60, 50, seed=3, ratio=0.85))
    op = DenseOperator(A)
    fro2 = float(np.sum(ref.s**2))
    points = list(rbki_trace(op, 5, 2, 6, 11, fro2))
    assert [p.q for p in points] == list(range(1, 7))
    for p in points[2:]:  # q >= ceil(k/b)
        direct = rbki(DenseOperator(A), KrylovConfig(5, 2, p.q, seed=11))
        err = np.linalg.norm(A - direct.to_dense())
        assert p.frobenius_error == pytest.approx(err, rel=1e-6, abs=1e-10)
        assert p.matvecs == direct.matvec_cost
        np.testing.assert_allclose(p.top_sigma_sq, direct.sigma_sq_estimates, rtol=1e-10, atol=1e-14)


def test_matvecs_to_target_and_accuracy():
    A, ref = synth_matrix(SpectrumSpec("geometric", 100, 100, seed=4, ratio=0.8))
    hit = matvecs_to_target(DenseOperator(A), ref.s, 5, 1, 0.1, seed=0)
    assert hit is not None
    assert target_satisfied(hit, ref.s, 5, 0.1)
    direct = rbki(DenseOperator(A), KrylovConfig(5, 1, hit.q, seed=0))
    assert error_metrics(DenseOperator(A), direct, ref).solves(0.1)


def test_estimate_singular_values():
    A, ref = synth_matrix(SpectrumSpec("geometric", 80, 80, seed=5, ratio=0.7))
    est = estimate_singular_values(DenseOperator(A), 4, 2, seed=0)
    np.testing.assert_allclose(est, ref.s[:4], rtol=1e-3)


@pytest.mark.slow
def test_large_dense_configuration_runs():
    A, ref = synth_matrix(SpectrumSpec("polynomial", 2000, 2000, seed=0, power=1.0))
    op = DenseOperator(A)
    fro2 = float(np.sum(ref.s**2))
    points = list(rbki_trace(op, 200, 20, 12, 0, fro2))
    assert len(points) == 12
    opt = math.sqrt(float(np.sum(ref.s[200:] ** 2)))
    ratios = [p.frobenius_error / opt for p in points]
    assert all(np.diff(ratios) <= 1e-9)
    assert ratios[-1] < 1.1


# ---------------------------------------------------------------- simulated blocks


def test_simulated_block_t1():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((8, 8))
    G = rng.standard_normal((8, 2))
    np.testing.assert_array_equal(simulated_block(DenseOperator(A), G, 1), G)


def test_simulated_block_diagonal():
    a = np.array([1.0, 0.8, 0.5, 0.3])
    g = np.random.default_rng(1).standard_normal((4, 1))
    B = simulated_block(DenseOperator(np.diag(a)), g, 3)
    lam = a**2
    np.testing.assert_allclose(B, np.hstack([g, lam[:, None] * g, lam[:, None] ** 2 * g]), rtol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_simulated_block_krylov_identity(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((30, 30)) / math.sqrt(30)
    op = DenseOperator(A)
    G = rng.standard_normal((30, 2))
    M = lambda X: A @ (A.T @ X)  # noqa: E731
    s, t = 3, 2
    lhs = krylov_span(M, G, s + t - 1)
    rhs = krylov_span(M, simulated_block(op, G, t), s)
    assert lhs.shape == rhs.shape
    assert np.max(principal_angles(lhs, rhs)) <= 1e-8
