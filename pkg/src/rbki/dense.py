"""Dense linear-algebra kernels shared by the Krylov code and the conditioning lab.

Matrices are plain 2-D ``float64`` numpy arrays. Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import scipy.linalg

EPS = float(np.finfo(np.float64).eps)

# Relative floor below which a Gram-Schmidt residual is treated as roundoff,
# whatever drop_tol says.
_RESIDUAL_FLOOR = 100.0 * EPS


class SvdConvergenceError(np.linalg.LinAlgError):
    """Raised when no LAPACK driver manages to converge."""


def as_dense(M, name: str = "matrix") -> np.ndarray:
    """Validate ``M`` as a finite 2-D float64 array and return it."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        bad = np.argwhere(~np.isfinite(A))[0]
        raise ValueError(f"{name} has a non-finite entry at {tuple(int(i) for i in bad)}")
    return A


@contextlib.contextmanager
def strict_mode() -> Iterator[None]:
    """Pin BLAS/LAPACK to one thread so reductions run in a fixed order."""
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


# --------------------------------------------------------------------------
# Orthonormalization
# --------------------------------------------------------------------------


def _sweep(V: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    if basis is not None and basis.shape[1]:
        V = V - basis @ (basis.T @ V)
    return V


def _columns_cgs2(W: np.ndarray, abs_tol: float, col_norms: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Classical Gram-Schmidt with one reorthogonalization, column by column.

    Returns the accepted orthonormal columns and their indices in ``W``.
    """
    rows = W.shape[0]
    Q = np.empty((rows, W.shape[1]))
    kept: list[int] = []
    for j in range(W.shape[1]):
        v = W[:, j].copy()
        m = len(kept)
        if m:
            Qm = Q[:, :m]
            v -= Qm @ (Qm.T @ v)
            v -= Qm @ (Qm.T @ v)
        nrm = float(np.linalg.norm(v))
        if nrm <= abs_tol or nrm <= _RESIDUAL_FLOOR * col_norms[j]:
            continue
        Q[:, m] = v / nrm
        kept.append(j)
    return Q[:, : len(kept)], kept


def orthonormalize_against(
    basis: np.ndarray | None,
    W: np.ndarray,
    drop_tol: float = 0.0,
    ref_norm: float | None = None,
) -> np.ndarray:
    """Orthonormalize the columns of ``W`` against an orthonormal ``basis``.

    Block classical Gram-Schmidt with exactly one full reorthogonalization
    pass. Columns whose residual after projection falls to
    ``drop_tol * ref_norm`` (``ref_norm`` defaults to ``||W||_F``) are dropped.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape[1] == 0:
        return np.empty((W.shape[0], 0))
    if ref_norm is None:
        ref_norm = float(np.linalg.norm(W))
    abs_tol = drop_tol * ref_norm
    col_norms = np.linalg.norm(W, axis=0)

    Q1, kept = _columns_cgs2(_sweep(W, basis), abs_tol, col_norms)
    if not kept:
        return Q1
    # second pass; the columns are unit length now
    Q2, _ = _columns_cgs2(_sweep(Q1, basis), 0.0, np.ones(Q1.shape[1]))
    return Q2


def orthonormalize(M, drop_tol: float = 0.0) -> tuple[np.ndarray, int]:
    """Orthonormal basis for ``range(M)``.

    Parameters
    ----------
    M : array_like
        Finite matrix whose columns are to be orthonormalized, in order.
    drop_tol : float
        Columns whose residual after projecting out the previously accepted
        columns is at most ``drop_tol * ||M||_F`` are treated as dependent and
        dropped. Residuals at roundoff level are always dropped.

    Returns
    -------
    Q : ndarray
        ``rows x rank`` matrix with orthonormal columns.
    rank : int
    """
    if drop_tol < 0:
        raise ValueError(f"drop_tol must be nonnegative, got {drop_tol}")
    A = as_dense(M, "M")
    if not np.any(A):
        return np.empty((A.shape[0], 0)), 0
    Q = orthonormalize_against(None, A, drop_tol)
    return Q, Q.shape[1]


# --------------------------------------------------------------------------
# SVD and friends
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``M = U diag(s) V^T`` with nonincreasing ``s``."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    @property
    def U(self) -> np.ndarray:
        return self.left_vectors

    @property
    def s(self) -> np.ndarray:
        return self.singular_values

    @property
    def V(self) -> np.ndarray:
        return self.right_vectors

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> None:
    if U.shape[1] == 0:
        return
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1.0
    Vt[flip[: Vt.shape[0]], :] *= -1.0


def svd(M, full_matrices: bool = False) -> SvdResult:
    """SVD with a deterministic sign convention.

    The largest-magnitude entry of every left singular vector is positive.
    With ``full_matrices=True`` the left factor is square; only its first
    ``min(rows, cols)`` columns pair with singular values.
    """
    A = as_dense(M, "M")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=full_matrices)
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=full_matrices, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(
                f"SVD did not converge for a {A.shape[0]}x{A.shape[1]} matrix"
            ) from exc
    U = np.array(U, copy=True)
    Vt = np.array(Vt, copy=True)
    _fix_signs(U, Vt)
    return SvdResult(U, s, Vt.T)


def singular_values(M) -> np.ndarray:
    A = as_dense(M, "M")
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(
            f"SVD did not converge for a {A.shape[0]}x{A.shape[1]} matrix"
        ) from exc


def sigma_min(M) -> float:
    """Smallest singular value of ``M`` (square or rectangular)."""
    return float(singular_values(M)[-1])


def sigma_max(M) -> float:
    return float(singular_values(M)[0])


def principal_angles(Q1, Q2) -> np.ndarray:
    """Principal angles between ``range(Q1)`` and ``range(Q2)``, nondecreasing.

    Both inputs need orthonormal columns. Cosines come from the singular
    values of ``Q1^T Q2`` (clamped to [-1, 1]); angles below pi/4 are taken
    from sines instead, since arccos cannot resolve angles under ~1e-8.
    """
    A = as_dense(Q1, "Q1")
    B = as_dense(Q2, "Q2")
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row dimensions differ: {A.shape[0]} vs {B.shape[0]}")
    if A.shape[1] < B.shape[1]:
        A, B = B, A
    m = B.shape[1]
    if m == 0:
        return np.empty(0)
    cos = np.clip(np.linalg.svd(A.T @ B, compute_uv=False), -1.0, 1.0)
    angles = np.arccos(cos)  # cos is descending, so angles ascend
    sin = np.clip(np.linalg.svd(B - A @ (A.T @ B), compute_uv=False), -1.0, 1.0)
    small = np.arcsin(sin[::-1])  # ascending
    mask = cos**2 >= 0.5
    angles[mask] = small[mask]
    return np.sort(angles)


# --------------------------------------------------------------------------
# Vandermonde
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VandermondeMatrix:
    """Rows ``(1, lam_i, ..., lam_i**(degree-1))`` for strictly decreasing nodes in [0, 1]."""

    nodes: tuple[float, ...]
    degree: int

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if not nodes:
            raise ValueError("at least one node is required")
        if any(not (0.0 <= x <= 1.0) for x in nodes):
            raise ValueError("nodes must lie in [0, 1]")
        if any(a <= b for a, b in zip(nodes, nodes[1:])):
            raise ValueError("nodes must be strictly decreasing (distinct)")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.nodes), self.degree

    def matrix(self) -> np.ndarray:
        return vandermonde(self.nodes, self.degree)


def vandermonde(nodes: Sequence[float], degree: int) -> np.ndarray:
    """``len(nodes) x degree`` matrix with entry (i, j) = nodes[i]**j."""
    lam = np.asarray(nodes, dtype=np.float64)
    return np.vander(lam, degree, increasing=True)


class GautschiChain(NamedTuple):
    """``exact <= gautschi_product <= gap_power``; ``row_exact <= gap_power`` as well."""

    exact: float
    gautschi_product: float
    gap_power: float
    row_exact: float = 1.0


def _inverse_abs_sums(nodes: Sequence[float]) -> tuple[float, float]:
    """Largest absolute column sum and row sum of ``W^{-1}`` (rows of ``W`` indexed by nodes)."""
    W = vandermonde(nodes, len(nodes))
    if np.linalg.cond(W) < 1e8:
        Wi = np.abs(np.linalg.inv(W))
        return float(np.max(Wi.sum(axis=0))), float(np.max(Wi.sum(axis=1)))
    import mpmath

    t = len(nodes)
    with mpmath.workdps(30 + 3 * t):
        Wm = mpmath.matrix([[mpmath.mpf(x) ** j for j in range(t)] for x in nodes])
        Wi = Wm**-1
        col = max(sum(abs(Wi[i, j]) for i in range(t)) for j in range(t))
        row = max(sum(abs(Wi[i, j]) for j in range(t)) for i in range(t))
        return float(col), float(row)


def vandermonde_inverse_inf_norm(W) -> GautschiChain:
    """Exact inverse norm of a square Vandermonde matrix next to two upper bounds.

    ``W`` is a square :class:`VandermondeMatrix` (or a node sequence).
    ``exact`` is ``||W^{-T}||_inf``, the infinity norm of the inverse of the
    Vandermonde matrix whose columns are indexed by the nodes, which is the
    orientation the product bound ``max_i prod_{j != i} (1 + mu_j) /
    |mu_i - mu_j|`` holds for. ``gap_power`` is ``(2 / eta)**(t - 1)`` with
    ``eta`` the smallest adjacent gap. ``row_exact`` is ``||W^{-1}||_inf``
    for rows indexed by nodes; it can exceed the product bound (nodes
    ``(0.45, 0.15)``) but stays below ``gap_power``.
    """
    if not isinstance(W, VandermondeMatrix):
        nodes = tuple(float(x) for x in W)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate nodes: the Vandermonde matrix is singular")
        W = VandermondeMatrix(tuple(sorted(nodes, reverse=True)), len(nodes))
    mu = W.nodes
    t = len(mu)
    if W.degree != t:
        raise ValueError(f"need a square Vandermonde matrix, got {t}x{W.degree}")
    if t > 30:
        raise ValueError("explicit inversion is limited to t <= 30")
    if t == 1:
        return GautschiChain(1.0, 1.0, 1.0, 1.0)

    exact, row_exact = _inverse_abs_sums(mu)
    log_prod = max(
        sum(math.log1p(mu[j]) - math.log(abs(mu[i] - mu[j])) for j in range(t) if j != i)
        for i in range(t)
    )
    eta = min(a - b for a, b in zip(mu, mu[1:]))
    log_power = (t - 1) * math.log(2.0 / eta)
    return GautschiChain(exact, _safe_exp(log_prod), _safe_exp(log_power), row_exact)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf
