"""Randomized block Krylov iteration for rank-k approximation.

The basis lives on the right: ``Z`` (d x m, orthonormal) spans
``A^T K_q(A A^T, G)``, grown block by block with alternating products by
``A`` and ``A^T``. The approximation is ``[[A Z]]_k Z^T``, i.e. the best rank-k
approximation of ``A`` whose row space lies in ``range(Z)``.

Matvec accounting: ``A^T G`` costs ``b``; each later block costs ``b`` for
``A Z_i`` and ``b`` for ``A^T (A Z_i)``, so a q-block basis costs
``b (2q - 1)``. Projecting onto the basis reuses the cached ``A Z_i`` and adds
``b`` for the last block, for ``2bq`` in total.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .dense import EPS, SvdResult, orthonormalize_against, svd
from .operators import DenseOperator, LinearOperator, spectral_norm_estimate

DEFAULT_DROP_TOL = 1e-12


@dataclass
class KrylovConfig:
    k: int
    b: int
    q: int
    epsilon: float = 0.25
    delta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.k, self.b, self.q = int(self.k), int(self.b), int(self.q)
        if not 1 <= self.b <= self.k:
            raise ValueError(f"need 1 <= b <= k, got b={self.b}, k={self.k}")
        if self.q < self.depth:
            raise ValueError(f"q={self.q} is below ceil(k/b)={self.depth}; the basis would have fewer than k columns")
        self.epsilon = _clamp_unit("epsilon", self.epsilon)
        self.delta = _clamp_unit("delta", self.delta)

    @property
    def depth(self) -> int:
        """``t = ceil(k / b)``."""
        return -(-self.k // self.b)

    @property
    def padded_rank(self) -> int:
        """``k' = b * t``."""
        return self.b * self.depth

    def check_shape(self, shape: tuple[int, int]) -> None:
        n, d = shape
        if self.k > min(n, d):
            raise ValueError(f"k={self.k} exceeds min(n, d)={min(n, d)}")


def _clamp_unit(name: str, value: float) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    if value > 1:
        warnings.warn(f"{name}={value} clamped to 1", RuntimeWarning, stacklevel=3)
        return 1.0
    return value


def gaussian_start_block(n: int, b: int, seed) -> np.ndarray:
    """``n x b`` matrix of i.i.d. standard normals from a seeded generator."""
    if n < 1 or b < 1:
        raise ValueError(f"need n, b >= 1, got n={n}, b={b}")
    return np.random.default_rng(seed).standard_normal((n, b))


@dataclass
class KrylovBasis:
    Z: np.ndarray
    b: int
    q: int
    seed: object
    matvec_cost: int
    block_ends: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    # A @ Z for the leading columns, cached during the iteration
    products: np.ndarray | None = None

    @property
    def blocks_built(self) -> int:
        return len(self.block_ends)

    @property
    def bq_proxy(self) -> int:
        return self.b * self.q


class BlockKrylovIteration:
    """Incremental construction of the right-side block Krylov basis.

    Each :meth:`step` appends one orthonormalized block. The product
    ``A Z_i`` of the newest block is computed lazily, either by the next step
    or by :meth:`project`.
    """

    def __init__(self, op: LinearOperator, G, drop_tol: float = DEFAULT_DROP_TOL):
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 2 or G.shape[0] != op.shape[0]:
            raise ValueError(f"starting block must have {op.shape[0]} rows, got shape {G.shape}")
        self.op = op
        self.G = G
        self.drop_tol = drop_tol
        self.d = op.shape[1]
        self._blocks: list[np.ndarray] = []
        self._products: list[np.ndarray] = []
        self._Z = np.empty((self.d, 0))
        self.block_ends: list[int] = []
        self.exhausted = False
        self.notes: list[str] = []

    @property
    def Z(self) -> np.ndarray:
        return self._Z

    @property
    def ncols(self) -> int:
        return self._Z.shape[1]

    def _product(self, i: int) -> np.ndarray:
        while len(self._products) <= i:
            self._products.append(self.op.apply(self._blocks[len(self._products)]))
        return self._products[i]

    def step(self) -> int:
        """Add one block; returns the number of new columns (0 once exhausted)."""
        if self.exhausted:
            return 0
        if not self._blocks:
            W = self.op.apply_transpose(self.G)
        else:
            last = len(self._blocks) - 1
            W = self.op.apply_transpose(self._product(last))
            if self.op.gram_shift is not None:
                W = W + self.op.gram_shift[:, None] * self._blocks[last]
        Zi = orthonormalize_against(self._Z, W, self.drop_tol)
        room = self.d - self.ncols
        if Zi.shape[1] > room:
            Zi = Zi[:, :room]
        if Zi.shape[1] == 0:
            self.exhausted = True
            self.notes.append(f"invariant subspace reached after {len(self._blocks)} blocks")
            return 0
        self._blocks.append(Zi)
        self._Z = np.hstack([self._Z, Zi])
        self.block_ends.append(self.ncols)
        if self.ncols >= self.d:
            self.exhausted = True
            self.notes.append(f"basis filled R^{self.d} after {len(self._blocks)} blocks")
        return Zi.shape[1]

    def project(self) -> np.ndarray:
        """``A @ Z`` for the current basis, reusing cached block products."""
        if not self._blocks:
            return np.empty((self.op.shape[0], 0))
        self._product(len(self._blocks) - 1)
        return np.hstack(self._products)


def build_krylov_basis(
    op: LinearOperator,
    G,
    q: int,
    drop_tol: float = DEFAULT_DROP_TOL,
    seed=None,
) -> KrylovBasis:
    """Orthonormal basis of ``A^T K_q(A A^T, G)`` (or of ``K_q(A^T A + D, A^T G)``
    for a smoothed operator).

    Blocks are orthogonalized against all earlier ones (block Gram-Schmidt
    with one reorthogonalization); dependent directions are dropped. If
    ``q * b`` exceeds ``d`` the iteration stops once the basis spans ``R^d``
    and a note is recorded.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    start = op.matvec_count
    it = BlockKrylovIteration(op, G, drop_tol)
    b = it.G.shape[1]
    if q * b > op.shape[1]:
        msg = f"q*b={q * b} exceeds d={op.shape[1]}; basis capped at d columns"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        it.notes.append(msg)
    for _ in range(q):
        if it.step() == 0:
            break
    return KrylovBasis(
        Z=it.Z,
        b=b,
        q=q,
        seed=seed,
        matvec_cost=op.matvec_count - start,
        block_ends=list(it.block_ends),
        notes=list(it.notes),
        products=np.hstack(it._products) if it._products else None,
    )


@dataclass
class LowRankApprox:
    """Factored ``A_hat = core_left diag(core_singulars) (Z core_right)^T``."""

    basis: KrylovBasis
    core_left: np.ndarray
    core_singulars: np.ndarray
    core_right: np.ndarray
    k: int
    matvec_cost: int

    @property
    def Z(self) -> np.ndarray:
        return self.basis.Z

    @property
    def rank(self) -> int:
        return int(self.core_singulars.size)

    @property
    def right_vectors(self) -> np.ndarray:
        """Right singular vectors ``q_i`` of ``A_hat`` (d x rank)."""
        return self.basis.Z @ self.core_right

    @property
    def sigma_sq_estimates(self) -> np.ndarray:
        """``||A_hat q_i||^2``, the squared singular value estimates."""
        return self.core_singulars**2

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        coeff = self.right_vectors.T @ X
        s = self.core_singulars if X.ndim == 1 else self.core_singulars[:, None]
        return self.core_left @ (s * coeff)

    def apply_transpose(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        coeff = self.core_left.T @ Y
        s = self.core_singulars if Y.ndim == 1 else self.core_singulars[:, None]
        return self.right_vectors @ (s * coeff)

    def to_dense(self) -> np.ndarray:
        return (self.core_left * self.core_singulars) @ self.right_vectors.T


def truncate(basis: KrylovBasis, P: np.ndarray, k: int, matvec_cost: int) -> LowRankApprox:
    """Rank-k truncation ``[[P]]_k`` of the projection ``P = A Z``."""
    if P.shape[1] == 0:
        n = P.shape[0]
        return LowRankApprox(basis, np.empty((n, 0)), np.empty(0), np.empty((0, 0)), k, matvec_cost)
    core = svd(P)
    r = min(k, core.s.size)
    return LowRankApprox(
        basis,
        core.U[:, :r],
        core.s[:r].copy(),
        core.V[:, :r],
        k,
        matvec_cost,
    )


def rbki(op: LinearOperator, cfg: KrylovConfig, drop_tol: float = DEFAULT_DROP_TOL) -> LowRankApprox:
    """Run randomized block Krylov iteration and return the factored rank-k approximation."""
    cfg.check_shape(op.shape)
    start = op.matvec_count
    G = gaussian_start_block(op.shape[0], cfg.b, cfg.seed)
    it = BlockKrylovIteration(op, G, drop_tol)
    if cfg.q * cfg.b > op.shape[1]:
        msg = f"q*b={cfg.q * cfg.b} exceeds d={op.shape[1]}; basis capped at d columns"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        it.notes.append(msg)
    for _ in range(cfg.q):
        if it.step() == 0:
            break
    basis_cost = op.matvec_count - start
    P = it.project()
    basis = KrylovBasis(
        it.Z, cfg.b, cfg.q, cfg.seed, basis_cost, list(it.block_ends), list(it.notes), P
    )
    return truncate(basis, P, cfg.k, op.matvec_count - start)


@dataclass(frozen=True)
class TracePoint:
    q: int
    columns: int
    matvecs: int
    seconds: float
    frobenius_error: float
    top_sigma_sq: np.ndarray


def rbki_trace(
    op: LinearOperator,
    k: int,
    b: int,
    q_max: int,
    seed,
    frobenius_norm_sq: float,
    stop: Callable[[TracePoint], bool] | None = None,
    drop_tol: float = DEFAULT_DROP_TOL,
) -> Iterator[TracePoint]:
    """Accuracy after every block of one RBKI run.

    The Frobenius error at each prefix follows from
    ``||A - [[AZ]]_k Z^T||_F^2 = ||A||_F^2 - sum_{i<=k} s_i(AZ)^2`` using the
    incrementally updated Gram matrix of ``A Z``. Iteration ends at ``q_max``,
    when the basis is exhausted, or when ``stop`` returns True.
    """
    start = op.matvec_count
    t0 = time.perf_counter()
    it = BlockKrylovIteration(op, gaussian_start_block(op.shape[0], b, seed), drop_tol)
    gram = np.empty((0, 0))
    prev_cols = 0
    for q in range(1, q_max + 1):
        if it.step() == 0:
            break
        P = it.project()
        new = P[:, prev_cols:]
        old = P[:, :prev_cols]
        cross = old.T @ new
        gram = np.block([[gram, cross], [cross.T, new.T @ new]])
        prev_cols = P.shape[1]
        ev = np.linalg.eigvalsh(gram)[::-1][:k]
        ev = np.clip(ev, 0.0, None)
        err = math.sqrt(max(frobenius_norm_sq - float(ev.sum()), 0.0))
        point = TracePoint(q, prev_cols, op.matvec_count - start, time.perf_counter() - t0, err, ev)
        yield point
        if stop is not None and stop(point):
            break


# --------------------------------------------------------------------------
# Accuracy-target error metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorMetrics:
    frobenius_ratio: float
    spectral_ratio: float
    index_residuals: np.ndarray
    frobenius_error: float
    spectral_error: float

    @property
    def max_index_residual(self) -> float:
        return float(self.index_residuals.max()) if self.index_residuals.size else 0.0

    def solves(self, eps: float, norm: str = "frobenius") -> bool:
        """Both conditions of the low-rank approximation problem at accuracy ``eps``."""
        ratio = self.frobenius_ratio if norm == "frobenius" else self.spectral_ratio
        return ratio <= 1 + eps and self.max_index_residual <= eps


def _ratio(err: float, optimum: float, fro_norm: float) -> float:
    if optimum > 0:
        return err / optimum
    return 1.0 if err <= 1e-8 * fro_norm else math.inf


def error_metrics(
    op: LinearOperator,
    approx: LowRankApprox,
    reference_svd: SvdResult,
    k: int | None = None,
) -> ErrorMetrics:
    """Error ratios against ``[[A]]_k`` and the per-index singular value residuals.

    ``reference_svd`` must be an exact SVD of ``A``. Residuals are
    ``|‖A q_i‖^2 - sigma_i^2| / sigma_k^2``. None of the products here are
    counted.
    """
    k = approx.k if k is None else k
    if approx.rank > k:
        raise ValueError(f"approximation has rank {approx.rank} > k={k}")
    s = np.asarray(reference_svd.singular_values, dtype=np.float64)
    if s.size < k:
        raise ValueError(f"reference SVD has {s.size} values, need at least k={k}")
    n, d = op.shape
    fro_norm = float(np.sqrt(np.sum(s**2)))
    opt_fro = float(np.sqrt(np.sum(s[k:] ** 2)))
    opt_spec = float(s[k]) if s.size > k else 0.0

    if isinstance(op, DenseOperator):
        R = op.matrix - approx.to_dense()
        fro_err = float(np.linalg.norm(R))
    else:
        fro_sq = 0.0
        for start in range(0, d, 256):
            stop = min(d, start + 256)
            E = np.zeros((d, stop - start))
            E[np.arange(start, stop), np.arange(stop - start)] = 1.0
            fro_sq += float(np.sum((op.apply(E, count=False) - approx.apply(E)) ** 2))
        fro_err = math.sqrt(fro_sq)

    spec_err = spectral_norm_estimate(
        lambda v: op.apply(v, count=False) - approx.apply(v),
        lambda u: op.apply_transpose(u, count=False) - approx.apply_transpose(u),
        d,
        rtol=1e-6,
        maxiter=max(1, math.ceil(10 * math.log(max(n, 2)))),
    )

    sk2 = float(s[k - 1]) ** 2
    resid = np.empty(k)
    Q = approx.right_vectors
    AQ = op.apply(Q, count=False) if Q.shape[1] else np.empty((n, 0))
    for i in range(k):
        got = float(np.sum(AQ[:, i] ** 2)) if i < Q.shape[1] else 0.0
        diff = abs(got - float(s[i]) ** 2)
        resid[i] = diff / sk2 if sk2 > 0 else (0.0 if diff == 0 else math.inf)
    return ErrorMetrics(
        _ratio(fro_err, opt_fro, fro_norm),
        _ratio(spec_err, opt_spec, fro_norm),
        resid,
        fro_err,
        spec_err,
    )


# --------------------------------------------------------------------------
# Simulated starting blocks and generic Krylov spans
# --------------------------------------------------------------------------


def apply_gram_left(op: LinearOperator, X: np.ndarray) -> np.ndarray:
    """``M X`` with ``M = A A^T``, never forming ``M``."""
    return op.apply(op.apply_transpose(X))


def simulated_block(op: LinearOperator, G, t: int) -> np.ndarray:
    """``B = [G, M G, ..., M^{t-1} G]`` with ``M = A A^T`` (n x bt)."""
    G = np.asarray(G, dtype=np.float64)
    n = op.shape[0]
    if G.shape[0] != n:
        raise ValueError(f"G must have {n} rows, got {G.shape[0]}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if G.shape[1] * t > n:
        raise ValueError(f"b*t={G.shape[1] * t} exceeds n={n}")
    blocks = [G]
    for _ in range(t - 1):
        blocks.append(apply_gram_left(op, blocks[-1]))
    return np.hstack(blocks)


def krylov_span(
    apply_M: Callable[[np.ndarray], np.ndarray],
    B,
    s: int,
    drop_tol: float = 1e-10,
) -> np.ndarray:
    """Orthonormal basis of ``K_s(M, B)`` for a symmetric ``M`` given by its action.

    Block Lanczos with full reorthogonalization; dependent columns are dropped
    relative to the norm of each new block.
    """
    B = np.asarray(B, dtype=np.float64)
    Z = orthonormalize_against(None, B, drop_tol)
    last = Z
    for _ in range(s - 1):
        if last.shape[1] == 0:
            break
        last = orthonormalize_against(Z, apply_M(last), drop_tol)
        Z = np.hstack([Z, last])
    return Z


def exact_rank_floor(M: np.ndarray) -> float:
    """Rank threshold ``max(shape) * eps * ||M||_2``."""
    if M.size == 0:
        return 0.0
    return max(M.shape) * EPS * float(np.linalg.norm(M, 2))


def target_satisfied(point: TracePoint, sigma: np.ndarray, k: int, eps: float) -> bool:
    """Both accuracy conditions (Frobenius ratio and per-index residuals) at one trace point.

    Along the trace ``||A q_i||^2`` equals the i-th eigenvalue of the Gram
    matrix of ``A Z``, so the per-index residuals need no extra products.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    opt = float(np.sqrt(np.sum(sigma[k:] ** 2)))
    fro_norm = float(np.sqrt(np.sum(sigma**2)))
    if _ratio(point.frobenius_error, opt, fro_norm) > 1 + eps:
        return False
    est = np.zeros(k)
    est[: point.top_sigma_sq.size] = point.top_sigma_sq
    resid = np.abs(est - sigma[:k] ** 2) / sigma[k - 1] ** 2
    return bool(np.all(resid <= eps))


def matvecs_to_target(
    op: LinearOperator,
    sigma,
    k: int,
    b: int,
    eps: float,
    seed,
    q_max: int | None = None,
) -> TracePoint | None:
    """First trace point meeting both accuracy conditions at ``eps``, or None if none does by ``q_max``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if q_max is None:
        q_max = -(-op.shape[1] // b)
    fro2 = float(np.sum(sigma**2))
    hit = None
    for point in rbki_trace(op, k, b, q_max, seed, fro2, stop=lambda p: target_satisfied(p, sigma, k, eps)):
        hit = point
    if hit is not None and target_satisfied(hit, sigma, k, eps):
        return hit
    return None


def estimate_singular_values(op: LinearOperator, count: int, b: int, seed, extra: int = 2) -> np.ndarray:
    """Rough top-``count`` singular values from a short RBKI run (counted)."""
    n, d = op.shape
    count = min(count, n, d)
    b = min(b, count)
    q = -(-count // b) + extra
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        approx = rbki(op, KrylovConfig(count, b, q, seed=seed))
    return approx.core_singulars.copy()
