import threading
import warnings

import numpy as np
import pytest

from rbki.operators import (
    DenseOperator,
    LinearOperator,
    MatvecCounter,
    PerturbationConfig,
    aslinearoperator,
    operator_norm,
    smooth_perturb,
)


def test_counter_counts_columns():
    A = np.random.default_rng(0).standard_normal((7, 5))
    op = DenseOperator(A)
    op.apply(np.ones(5))
    op.apply(np.ones((5, 3)))
    op.apply_transpose(np.ones((7, 2)))
    assert op.matvec_count == 6
    op.apply(np.ones((5, 4)), count=False)
    assert op.matvec_count == 6


def test_counter_thread_safe():
    c = MatvecCounter()

    def work():
        for _ in range(1000):
            c.add(1)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.value == 8000
    with pytest.raises(ValueError):
        c.add(-1)


def test_callable_operator_matches_dense():
    A = np.random.default_rng(1).standard_normal((6, 4))
    op = LinearOperator(A.shape, lambda X: A @ X, lambda Y: A.T @ Y)
    np.testing.assert_allclose(op.to_dense(), A)
    assert op.matvec_count == 0
    with pytest.raises(ValueError):
        op.apply(np.ones(6))
    assert aslinearoperator(op) is op
    assert isinstance(aslinearoperator(A), DenseOperator)


def test_operator_norm_close_to_spectral_norm():
    A = np.random.default_rng(2).standard_normal((40, 30))
    assert operator_norm(DenseOperator(A), rtol=1e-10, maxiter=500) == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_perturbation_small_gamma():
    A = np.random.default_rng(3).standard_normal((10, 8))
    gamma = 1e-9
    op = smooth_perturb(DenseOperator(A), PerturbationConfig(gamma, seed=4))
    assert np.max(np.abs(op.gram_shift)) <= gamma
    for seed in range(5):
        v = np.random.default_rng(seed).standard_normal(8)
        v /= np.linalg.norm(v)
        diff = op.apply_shifted_gram(v) - A.T @ (A @ v)
        assert np.linalg.norm(diff) <= gamma * 1.000001


def test_perturbation_deterministic_and_validated():
    A = np.eye(4)
    a = smooth_perturb(DenseOperator(A), PerturbationConfig(0.1, seed=9)).gram_shift
    b = smooth_perturb(DenseOperator(A), PerturbationConfig(0.1, seed=9)).gram_shift
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        PerturbationConfig(0.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        smooth_perturb(DenseOperator(A), PerturbationConfig(10.0), norm_estimate=1.0)
    assert any("exceeds" in str(w.message) for w in caught)


def test_repeated_eigenvalue_split_by_smoothing():
    """After perturbation every adjacent eigenvalue gap is positive (100 seeds)."""
    from rbki.gaps import smoothed_gap_stats

    A = np.diag([1.0, 1.0, 0.5, 0.25, 0.1])
    for seed in range(100):
        op = smooth_perturb(DenseOperator(A), PerturbationConfig(1e-3, seed=seed), norm_estimate=1.0)
        assert smoothed_gap_stats(op, 4).min_relative_gap > 0
