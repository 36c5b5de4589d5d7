"""Matrix-free operators with an instrumented product counter."""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dense import as_dense


class MatvecCounter:
    """Monotone, thread-safe tally of single-vector products."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("counter increments must be nonnegative")
        with self._lock:
            self._value += n

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


def _width(X: np.ndarray) -> int:
    return 1 if X.ndim == 1 else X.shape[1]


class LinearOperator:
    """Access to ``A`` (n x d) and ``A^T`` through callables.

    Applying the operator to an ``m``-column block adds ``m`` to the counter.
    Pass ``count=False`` for bookkeeping products (error metrics, checks)
    that are not part of the algorithm being measured.
    """

    #: diagonal shift added to ``A^T A`` when Krylov bases are built (see
    #: :func:`smooth_perturb`); ``None`` for an unshifted operator
    gram_shift: np.ndarray | None = None

    def __init__(
        self,
        shape: tuple[int, int],
        matvec: Callable[[np.ndarray], np.ndarray],
        rmatvec: Callable[[np.ndarray], np.ndarray],
        counter: MatvecCounter | None = None,
    ):
        n, d = (int(x) for x in shape)
        if n < 1 or d < 1:
            raise ValueError(f"operator shape must be positive, got {shape}")
        self.shape = (n, d)
        self._matvec = matvec
        self._rmatvec = rmatvec
        self.counter = counter if counter is not None else MatvecCounter()

    @property
    def matvec_count(self) -> int:
        return self.counter.value

    def apply(self, X, count: bool = True) -> np.ndarray:
        """``A @ X`` for a vector or a block of column vectors."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.shape[1]:
            raise ValueError(f"expected {self.shape[1]} rows, got {X.shape[0]}")
        if count:
            self.counter.add(_width(X))
        return self._matvec(X)

    def apply_transpose(self, Y, count: bool = True) -> np.ndarray:
        """``A^T @ Y`` for a vector or a block of column vectors."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.shape[0] != self.shape[0]:
            raise ValueError(f"expected {self.shape[0]} rows, got {Y.shape[0]}")
        if count:
            self.counter.add(_width(Y))
        return self._rmatvec(Y)

    def to_dense(self, chunk: int = 256) -> np.ndarray:
        """Materialize ``A`` by uncounted products with identity columns."""
        n, d = self.shape
        out = np.empty((n, d))
        for start in range(0, d, chunk):
            stop = min(d, start + chunk)
            E = np.zeros((d, stop - start))
            E[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[:, start:stop] = self.apply(E, count=False)
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, matvecs={self.matvec_count})"


class DenseOperator(LinearOperator):
    """Operator backed by an explicit matrix."""

    def __init__(self, A, counter: MatvecCounter | None = None):
        self.matrix = as_dense(A, "A")
        M = self.matrix
        super().__init__(M.shape, lambda X: M @ X, lambda Y: M.T @ Y, counter)

    def to_dense(self, chunk: int = 256) -> np.ndarray:
        return self.matrix.copy()


def aslinearoperator(A) -> LinearOperator:
    if isinstance(A, LinearOperator):
        return A
    return DenseOperator(A)


def spectral_norm_estimate(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_transpose: Callable[[np.ndarray], np.ndarray],
    dim: int,
    rtol: float = 1e-6,
    maxiter: int | None = None,
    seed: int = 0,
) -> float:
    """Largest singular value by power iteration on ``B^T B``.

    ``apply``/``apply_transpose`` act on vectors of length ``dim`` and of the
    range dimension respectively. Stops when successive estimates agree to
    ``rtol`` or after ``maxiter`` steps (default ``ceil(10 log dim)``).
    """
    if maxiter is None:
        maxiter = max(1, math.ceil(10 * math.log(max(dim, 2))))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(maxiter):
        w = apply_transpose(apply(v))
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        new = math.sqrt(nrm)
        v = w / nrm
        if est > 0 and abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est


def operator_norm(op: LinearOperator, rtol: float = 1e-6, maxiter: int | None = None, seed: int = 0) -> float:
    """Uncounted power-iteration estimate of ``||A||_2``."""
    return spectral_norm_estimate(
        lambda v: op.apply(v, count=False),
        lambda u: op.apply_transpose(u, count=False),
        op.shape[1],
        rtol,
        maxiter,
        seed,
    )


@dataclass(frozen=True)
class PerturbationConfig:
    gamma: float
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")


class SmoothedOperator(LinearOperator):
    """``A`` together with a random diagonal shift of its Gram matrix.

    Products with ``A`` and ``A^T`` go to the wrapped operator (and its
    counter). Krylov bases built on this operator use ``A^T A + D`` as the
    iteration matrix; the low-rank approximation still uses the original ``A``.
    """

    def __init__(self, base: LinearOperator, shift: np.ndarray, gamma: float):
        super().__init__(base.shape, base._matvec, base._rmatvec, base.counter)
        self.base = base
        self.gram_shift = np.asarray(shift, dtype=np.float64)
        self.gamma = gamma

    def apply_shifted_gram(self, X, count: bool = True) -> np.ndarray:
        """``(A^T A + D) X``; costs two products per column."""
        X = np.asarray(X, dtype=np.float64)
        D = self.gram_shift if X.ndim == 1 else self.gram_shift[:, None]
        return self.apply_transpose(self.apply(X, count), count) + D * X

    def shifted_gram_dense(self) -> np.ndarray:
        A = self.base.to_dense()
        return A.T @ A + np.diag(self.gram_shift)


def smooth_perturb(op: LinearOperator, pcfg: PerturbationConfig, norm_estimate: float | None = None) -> SmoothedOperator:
    """Attach a seeded diagonal perturbation, entries uniform on [-gamma, gamma].

    The perturbation shifts the Gram matrix on the side where
    :func:`rbki.krylov.build_krylov_basis` keeps its basis (``A^T A``, size
    d x d); nonzero eigenvalues and gap statistics are those of ``A A^T``.
    """
    if norm_estimate is None:
        norm_estimate = operator_norm(op)
    if pcfg.gamma > norm_estimate * (1 + 1e-6):
        warnings.warn(
            f"gamma={pcfg.gamma:.3g} exceeds the estimated ||A||_2={norm_estimate:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    base = op.base if isinstance(op, SmoothedOperator) else op
    rng = np.random.default_rng(pcfg.seed)
    shift = rng.uniform(-pcfg.gamma, pcfg.gamma, size=op.shape[1])
    return SmoothedOperator(base, shift, pcfg.gamma)
