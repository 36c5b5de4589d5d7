"""Spectrum gap statistics, iteration-count recommendations and starting-block goodness."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dense import EPS, orthonormalize, singular_values


@dataclass(frozen=True)
class GapStats:
    """Gap statistics of the top-k eigenvalues ``lambda_i = sigma_i^2``.

    ``min_relative_gap`` is ``min_{i<k} (lambda_i - lambda_{i+1}) / lambda_i``
    and ``condition_number`` is ``lambda_1 / lambda_{k-1}``. For ``k = 1``
    both are taken to be 1 (nothing to separate).
    """

    k: int
    min_relative_gap: float
    condition_number: float
    additive_gap: float
    eigenvalues: tuple[float, ...]

    @classmethod
    def from_eigenvalues(cls, eigenvalues: Sequence[float], k: int) -> "GapStats":
        lam = np.asarray(eigenvalues, dtype=np.float64)
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if lam.size < k:
            raise ValueError(f"need at least k={k} values, got {lam.size}")
        if np.any(np.diff(lam[:k]) > 0):
            raise ValueError("values must be nonincreasing")
        if lam[k - 1] < 0:
            raise ValueError("eigenvalues must be nonnegative")
        if k == 1:
            if lam[0] <= 0:
                raise ValueError("lambda_1 must be positive")
            return cls(1, 1.0, 1.0, math.inf, tuple(lam.tolist()))
        if lam[k - 2] <= 0:
            raise ValueError(f"values must be positive through index k-1={k - 1}")
        top = lam[:k]
        diffs = top[:-1] - top[1:]
        delta = float(np.min(diffs / top[:-1]))
        kappa = float(top[0] / top[k - 2])
        additive = float(np.min(diffs))
        # additive gap >= lambda_1 * Delta / kappa
        assert additive >= top[0] * delta / kappa * (1 - 1e-12) - 1e-300
        return cls(k, delta, kappa, additive, tuple(lam.tolist()))

    def pairwise_gap(self, k: int, ell: int) -> float:
        """``(lambda_k - lambda_ell) / lambda_k`` (1-based indices)."""
        lam = self.eigenvalues
        if not 1 <= k < ell <= len(lam):
            raise ValueError(f"need 1 <= k < ell <= {len(lam)}, got k={k}, ell={ell}")
        return (lam[k - 1] - lam[ell - 1]) / lam[k - 1]

    def at(self, k: int) -> "GapStats":
        return GapStats.from_eigenvalues(self.eigenvalues, k)

    @property
    def log_kappa_over_delta(self) -> float:
        if self.min_relative_gap <= 0:
            return math.inf
        return math.log(self.condition_number / self.min_relative_gap)


def gap_stats(singular_values: Sequence[float], k: int) -> GapStats:
    """Gap statistics from singular values (squared internally)."""
    s = np.asarray(singular_values, dtype=np.float64)
    return GapStats.from_eigenvalues(s**2, k)


class QTerms(NamedTuple):
    depth_term: float
    confidence_term: float
    depth: int
    padded_rank: int


def _as_eigenvalues(spectrum) -> tuple[float, ...]:
    if isinstance(spectrum, GapStats):
        return spectrum.eigenvalues
    return tuple((np.asarray(spectrum, dtype=np.float64) ** 2).tolist())


def _clamp(name: str, value: float) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    if value > 1:
        warnings.warn(f"{name}={value} clamped to 1", RuntimeWarning, stacklevel=3)
        return 1.0
    return float(value)


def recommend_q_terms(
    spectrum,
    k: int,
    b: int,
    eps: float,
    delta: float,
    n: int,
    mode: str = "gap_independent",
    ell: int | None = None,
    c1: float = 1.0,
) -> QTerms:
    """The two summands of the iteration-count formula, before rounding up.

    ``spectrum`` is a sequence of singular values or a :class:`GapStats`
    (whose stored eigenvalues are re-evaluated at the padded rank).
    """
    if not 1 <= b <= k:
        raise ValueError(f"need 1 <= b <= k, got b={b}, k={k}")
    eps = _clamp("eps", eps)
    delta = _clamp("delta", delta)
    lam = _as_eigenvalues(spectrum)
    if mode == "gap_independent":
        depth = -(-k // b)
        rate = math.sqrt(eps)
    elif mode == "gap_dependent":
        if ell is None or ell <= k:
            raise ValueError("gap-dependent mode needs ell > k")
        depth = -(-ell // b)
        gap = GapStats.from_eigenvalues(lam, ell).pairwise_gap(k, ell)
        if gap <= 0:
            raise ValueError(f"gap from index {k} to {ell} is zero")
        rate = math.sqrt(gap)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    padded = b * depth
    if len(lam) < padded:
        raise ValueError(f"spectrum has {len(lam)} values; need {padded} (= b * ceil(rank / b))")
    gs = GapStats.from_eigenvalues(lam, padded)
    if gs.min_relative_gap <= 0:
        raise ValueError(
            "minimum relative gap is zero; perturb the operator with smooth_perturb() first"
        )
    return QTerms(
        c1 * depth / rate * gs.log_kappa_over_delta,
        c1 / rate * math.log(n / (delta * eps)),
        depth,
        padded,
    )


def recommend_q(
    spectrum,
    k: int,
    b: int,
    eps: float,
    delta: float,
    n: int,
    mode: str = "gap_independent",
    ell: int | None = None,
    c1: float = 1.0,
) -> int:
    """Iteration count from the RBKI complexity bound with calibration constant ``c1``.

    ``q = ceil(c1 t/sqrt(eps) log(kappa'/Delta') + c1/sqrt(eps) log(n/(delta eps)))``
    with ``t = ceil(k/b)`` and gap statistics at ``k' = b t``. In
    ``gap_dependent`` mode ``sqrt(eps)`` becomes ``sqrt(gap_{k->ell})`` and
    ``(k', t)`` are computed from ``ell``. Never returns less than ``t``.
    """
    terms = recommend_q_terms(spectrum, k, b, eps, delta, n, mode, ell, c1)
    return max(terms.depth, math.ceil(terms.depth_term + terms.confidence_term))


# --------------------------------------------------------------------------
# (k, L)-goodness
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GoodnessEstimate:
    k: int
    L: float
    sigma_min_UkB: float
    delta: float
    t: int
    n: int


def goodness_bound(sigma: float, k: int, n: int, t: int, delta: float) -> float:
    """``5 max{kn, t log(1/delta)} / sigma^2``; +inf when ``sigma`` is 0."""
    if sigma <= 0:
        return math.inf
    return 5.0 * max(k * n, t * math.log(1.0 / delta)) / sigma**2


def goodness_estimate(U, B, k: int, delta: float, t: int = 1) -> GoodnessEstimate:
    """Goodness of a starting block from ``sigma_min(U_k^T B)``.

    ``U`` holds the top left singular vectors of ``A`` (at least ``k``
    columns), with ``A`` scaled so that ``||A||_2 = 1``. Returns ``L = +inf``
    when ``U_k^T B`` is numerically rank deficient.
    """
    U = np.asarray(U, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if k > B.shape[1]:
        raise ValueError(f"B has {B.shape[1]} columns; need at least k={k}")
    if U.shape[1] < k or U.shape[0] != B.shape[0]:
        raise ValueError("U must have B's row count and at least k columns")
    n = B.shape[0]
    M = U[:, :k].T @ B
    sig = float(singular_values(M)[k - 1])
    floor = max(M.shape) * EPS * float(np.linalg.norm(B, 2))
    if sig <= floor:
        sig = 0.0
    return GoodnessEstimate(k, goodness_bound(sig, k, n, t, delta), sig, delta, t, n)


def inverse_overlap_sq(U, Q) -> float:
    """``||(U^T Q)^{-1}||_2^2`` for square ``U^T Q``."""
    M = np.asarray(U).T @ np.asarray(Q)
    s = singular_values(M)
    return math.inf if s[-1] == 0 else 1.0 / float(s[-1]) ** 2


def goodness_restrict(Qprime, U_kprime, k: int) -> np.ndarray:
    """Restrict a k'-dimensional good basis to a k-dimensional one.

    With ``C`` the first ``k`` columns of ``(U_{k'}^T Q')^{-1}`` and ``V`` an
    orthonormal basis of ``range(C)``, returns ``Q = Q' V``, which satisfies
    ``||(U_k^T Q)^{-1}|| <= ||(U_{k'}^T Q')^{-1}||``.
    """
    Qp = np.asarray(Qprime, dtype=np.float64)
    Up = np.asarray(U_kprime, dtype=np.float64)
    kp = Up.shape[1]
    if Qp.shape[1] != kp:
        raise ValueError(f"Q' must have {kp} columns, got {Qp.shape[1]}")
    if not 1 <= k <= kp:
        raise ValueError(f"need 1 <= k <= k'={kp}, got {k}")
    overlap = Up.T @ Qp
    s = singular_values(overlap)
    if s[-1] <= kp * EPS * s[0]:
        raise ValueError("U_k'^T Q' is singular")
    C = np.linalg.inv(overlap)[:, :k]
    V, rank = orthonormalize(C)
    if rank != k:
        raise ValueError("range of the restricted inverse lost rank")
    return Qp @ V


# --------------------------------------------------------------------------
# smoothed inputs
# --------------------------------------------------------------------------


def smoothed_gap_stats(op, k: int) -> GapStats:
    """Gap statistics of the perturbed Gram matrix ``A^T A + D`` (dense, desk scale)."""
    ev = np.linalg.eigvalsh(op.shifted_gram_dense())[::-1]
    return GapStats.from_eigenvalues(ev, k)


def smoothing_gamma(eps: float, sigma_next: float, n: int) -> float:
    """Perturbation size ``eps sigma_{k+1}^2 / (3n)`` that leaves the accuracy target intact."""
    return eps * sigma_next**2 / (3 * n)


def smoothing_gap_scale(gamma: float, n: int, norm: float, delta: float) -> float:
    """``gamma^2 delta / (n^2 ||A||^2)``, the predicted order of the smoothed gap."""
    return gamma**2 * delta / (n**2 * norm**2)


def fit_smoothing_constant(gaps: Sequence[float], gamma: float, n: int, norm: float, delta: float) -> float:
    """Largest ``c`` with ``gap >= c * scale`` in at least a ``1 - delta`` fraction of ``gaps``."""
    ratios = np.asarray(gaps, dtype=np.float64) / smoothing_gap_scale(gamma, n, norm, delta)
    return float(np.quantile(ratios, delta, method="lower"))
