"""Conditioning lab for square random block Krylov matrices.

With ``C = diag(lambda)`` (no loss of generality for Gaussian ``H``), the
matrix ``[H, C H, ..., C^{t-1} H]`` equals, up to a column permutation,

    K = [diag(g_1) V, diag(g_2) V, ..., diag(g_b) V]

where ``g_j`` are the columns of ``H`` and ``V`` is the ``k x t`` Vandermonde
matrix on the eigenvalues. Everything here works with that form.

Bounds that underflow doubles are carried as natural logarithms.
"""

from __future__ import annotations

import itertools
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np
from scipy import stats

from .dense import EPS, singular_values, svd, vandermonde
from .gaps import GapStats
from .records import TrialRecord

RANK_FACTOR = 1e3
EXHAUSTIVE_K = 16
MP_MAX_K = 64


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    """Independent stream for ``(master seed, trial index)``."""
    return np.random.SeedSequence([int(seed), int(trial)])


def rank_threshold(k: int, smax: float) -> float:
    return k * EPS * smax * RANK_FACTOR


# --------------------------------------------------------------------------
# spectra and Krylov samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumModel:
    """Eigenvalues ``1 = lambda_1 > ... > lambda_k >= 0`` of ``C``."""

    eigenvalues: tuple[float, ...]
    tag: str = "custom"
    allow_repeats: bool = False

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("need at least one eigenvalue")
        if not np.all(np.isfinite(lam)) or lam[-1] < 0 or lam[0] > 1:
            raise ValueError("eigenvalues must lie in [0, 1]")
        if lam[0] != 1.0:
            raise ValueError(f"lambda_1 must be 1 (normalize first), got {lam[0]}")
        diffs = np.diff(lam)
        if np.any(diffs > 0) or (not self.allow_repeats and np.any(diffs >= 0)):
            raise ValueError("eigenvalues must be strictly decreasing")

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def nodes(self) -> np.ndarray:
        return np.asarray(self.eigenvalues, dtype=np.float64)

    def gap_stats(self) -> GapStats:
        return GapStats.from_eigenvalues(self.eigenvalues, self.k)

    @classmethod
    def geometric(cls, k: int, ratio: float) -> "SpectrumModel":
        if not 0 < ratio < 1:
            raise ValueError(f"ratio must be in (0, 1), got {ratio}")
        return cls(tuple((ratio ** np.arange(k)).tolist()), f"geometric:{ratio}")

    @classmethod
    def polynomial(cls, k: int, power: float) -> "SpectrumModel":
        if power <= 0:
            raise ValueError(f"power must be positive, got {power}")
        return cls(tuple((np.arange(1, k + 1, dtype=np.float64) ** (-power)).tolist()), f"polynomial:{power}")

    @classmethod
    def clustered(cls, k: int, gap_positions: Sequence[int], drop: float = 0.1, within: float = 0.95) -> "SpectrumModel":
        lam = within ** np.arange(k, dtype=np.float64)
        for pos in gap_positions:
            lam[pos:] *= drop
        tag = "clustered:" + ",".join(str(p) for p in gap_positions) + f":{drop}:{within}"
        return cls(tuple(lam.tolist()), tag)

    @classmethod
    def from_values(cls, values: Sequence[float], normalize: bool = True, allow_repeats: bool = False) -> "SpectrumModel":
        lam = np.asarray(values, dtype=np.float64)
        if normalize:
            if lam.size == 0 or lam[0] <= 0:
                raise ValueError("first eigenvalue must be positive")
            lam = lam / lam[0]
        return cls(tuple(lam.tolist()), "list", allow_repeats)

    @classmethod
    def parse(cls, text: str, k: int) -> "SpectrumModel":
        """``geometric:0.9``, ``polynomial:1``, ``clustered:8,16:0.1[:0.95]``,
        ``list:1,0.5,0.25`` or ``file:spectrum.json``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        parts = rest.split(":") if rest else []
        try:
            if kind == "geometric":
                return cls.geometric(k, float(parts[0]))
            if kind == "polynomial":
                return cls.polynomial(k, float(parts[0]))
            if kind == "clustered":
                pos = [int(p) for p in parts[0].split(",") if p]
                drop = float(parts[1]) if len(parts) > 1 else 0.1
                within = float(parts[2]) if len(parts) > 2 else 0.95
                return cls.clustered(k, pos, drop, within)
            if kind == "list":
                m = cls.from_values([float(v) for v in parts[0].split(",")])
                if m.k != k:
                    raise ValueError(f"list has {m.k} values, expected k={k}")
                return m
            if kind == "file":
                return cls.from_json(rest, k)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"cannot parse spectrum {text!r}: {exc}") from exc
        raise ValueError(f"unknown spectrum kind in {text!r}")

    @classmethod
    def from_json(cls, path, k: int | None = None) -> "SpectrumModel":
        """JSON file holding either a list of eigenvalues or ``{"kind": ..., ...}``."""
        data = json.loads(Path(path).read_text())
        if isinstance(data, list):
            m = cls.from_values(data)
        else:
            kk = int(data.get("k", k))
            kind = data["kind"]
            if kind == "geometric":
                m = cls.geometric(kk, float(data["ratio"]))
            elif kind == "polynomial":
                m = cls.polynomial(kk, float(data["power"]))
            elif kind == "clustered":
                m = cls.clustered(kk, data["gap_positions"], data.get("drop", 0.1), data.get("within", 0.95))
            elif kind == "list":
                m = cls.from_values(data["values"])
            else:
                raise ValueError(f"unknown spectrum kind {kind!r}")
        if k is not None and m.k != k:
            raise ValueError(f"spectrum file has {m.k} values, expected k={k}")
        return m


@dataclass
class VandermondeKrylov:
    k: int
    b: int
    t: int
    H: np.ndarray
    spectrum: SpectrumModel
    V: np.ndarray

    def block(self, j: int) -> np.ndarray:
        """``diag(g_j) V`` (0-based ``j``)."""
        return self.H[:, [j]] * self.V

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.block(j) for j in range(self.b)])

    def original(self) -> np.ndarray:
        """``[H, C H, ..., C^{t-1} H]`` with ``C = diag(lambda)``."""
        lam = self.spectrum.nodes
        cols = [self.H]
        for _ in range(self.t - 1):
            cols.append(lam[:, None] * cols[-1])
        return np.hstack(cols)

    def leave_one_out(self, j: int) -> np.ndarray:
        return np.hstack([self.block(i) for i in range(self.b) if i != j])


def sample_krylov(spectrum: SpectrumModel, b: int, seed) -> VandermondeKrylov:
    """Gaussian ``H`` (k x b) from ``seed`` and the Vandermonde form of its Krylov matrix."""
    k = spectrum.k
    if b < 1 or k % b:
        raise ValueError(f"b={b} must divide k={k}")
    t = k // b
    H = np.random.default_rng(seed).standard_normal((k, b))
    return VandermondeKrylov(k, b, t, H, spectrum, vandermonde(spectrum.nodes, t))


def block_indicator_witness(spectrum: SpectrumModel, b: int) -> VandermondeKrylov:
    """Deterministic ``H`` with column ``j`` equal to the indicator of the j-th group of t eigenvalues."""
    k = spectrum.k
    if b < 1 or k % b:
        raise ValueError(f"b={b} must divide k={k}")
    t = k // b
    H = np.zeros((k, b))
    for j in range(b):
        H[j * t : (j + 1) * t, j] = 1.0
    return VandermondeKrylov(k, b, t, H, spectrum, vandermonde(spectrum.nodes, t))


# --------------------------------------------------------------------------
# minimum singular values
# --------------------------------------------------------------------------


def _mp_extreme_singular_values(entries: np.ndarray, powers: np.ndarray, nodes: np.ndarray, start_dps: int = 40):
    """Extreme singular values of ``entries[i, c] * nodes[i] ** powers[c]`` in extended precision.

    The powers are formed in extended precision so the matrix is the exact
    one defined by the double inputs. Precision doubles until the ratio
    ``smin / smax`` is resolved.
    """
    k, m = entries.shape
    dps = start_dps
    while True:
        with mpmath.workdps(dps):
            lam = [mpmath.mpf(float(x)) for x in nodes]
            rows = [[mpmath.mpf(float(entries[i, c])) * lam[i] ** int(powers[c]) for c in range(m)] for i in range(k)]
            s = mpmath.svd_r(mpmath.matrix(rows), compute_uv=False)
            vals = [s[i] for i in range(len(s))]
            smin, smax = min(vals), max(vals)
            if smin == 0 or smin / smax > mpmath.mpf(10) ** (-(dps - 20)) or dps >= 640:
                return smin, smax, float(mpmath.log(smin)) if smin > 0 else -math.inf
        dps *= 2


def krylov_sigma_min(kry: VandermondeKrylov, precision: str = "auto") -> tuple[float, float, float, str]:
    """``(sigma_min, sigma_max, log sigma_min, method)`` for ``kry.K``.

    ``precision="auto"`` switches to extended precision when the double
    result is within ``1e3 k eps`` of ``sigma_max``, where double SVD can no
    longer resolve it.
    """
    K = kry.K
    s = singular_values(K)
    smin, smax = float(s[-1]), float(s[0])
    need_mp = precision == "mp" or (precision == "auto" and smin <= rank_threshold(kry.k, smax))
    if not need_mp:
        return smin, smax, math.log(smin) if smin > 0 else -math.inf, "double"
    if kry.k > MP_MAX_K and precision == "auto":
        return smin, smax, math.log(smin) if smin > 0 else -math.inf, "double-floor"
    entries = np.repeat(kry.H, kry.t, axis=1)
    powers = np.tile(np.arange(kry.t), kry.b)
    mn, mx, logmin = _mp_extreme_singular_values(entries, powers, kry.spectrum.nodes)
    return float(mn), float(mx), logmin, "mp"


def sigma_min_log_bound(spectrum: SpectrumModel, b: int, delta: float, calibration_C: float = 1.0) -> float:
    """``log(C delta^5 / k^14 (Delta/(6 kappa))^{6(t-1)})``; ``-inf`` if the gap is zero."""
    k = spectrum.k
    if k % b:
        raise ValueError(f"b={b} must divide k={k}")
    if not 0 < delta <= 1 or calibration_C <= 0:
        raise ValueError("need 0 < delta <= 1 and calibration_C > 0")
    t = k // b
    gs = spectrum.gap_stats()
    head = math.log(calibration_C) + 5 * math.log(delta) - 14 * math.log(k)
    if t == 1:
        return head
    if gs.min_relative_gap <= 0:
        warnings.warn("minimum relative gap is zero; bound is vacuous", RuntimeWarning, stacklevel=2)
        return -math.inf
    return head + 6 * (t - 1) * (math.log(gs.min_relative_gap) - math.log(6 * gs.condition_number))


def sigma_min_log_bound_mp(spectrum: SpectrumModel, b: int, delta: float, calibration_C: float = 1.0, dps: int = 60) -> float:
    """Same bound evaluated directly (not in log form) in extended precision."""
    k = spectrum.k
    t = k // b
    with mpmath.workdps(dps):
        lam = [mpmath.mpf(x) for x in spectrum.eigenvalues]
        if k > 1:
            gap = min((lam[i] - lam[i + 1]) / lam[i] for i in range(k - 1))
            kappa = lam[0] / lam[k - 2]
        else:
            gap = kappa = mpmath.mpf(1)
        val = mpmath.mpf(calibration_C) * mpmath.mpf(delta) ** 5 / mpmath.mpf(k) ** 14 * (gap / (6 * kappa)) ** (6 * (t - 1))
        return float(mpmath.log(val))


# --------------------------------------------------------------------------
# Peng-Vempala pieces
# --------------------------------------------------------------------------


@dataclass
class PVDecomposition:
    Q: list[np.ndarray]
    piece_sigma_min: np.ndarray
    orthogonality_residual: float
    degenerate: bool
    loo_ranks: list[int]
    note: str = ""

    @property
    def rhs(self) -> float:
        """``min_j sigma_min(Q_j^T diag(g_j) V) / sqrt(b)``."""
        b = len(self.Q)
        return float(np.min(self.piece_sigma_min)) / math.sqrt(b)


def pv_decompose(kry: VandermondeKrylov, sigma_min_K: float | None = None) -> PVDecomposition:
    """``Q_j`` = orthonormal basis of the complement of the leave-one-out column span.

    For ``b = 1`` there is nothing to leave out: ``Q_1 = I`` and the single
    piece is ``K`` itself (pass ``sigma_min_K`` to reuse an extended
    precision value). A leave-one-out matrix with rank other than ``k - t``
    marks the decomposition degenerate.
    """
    k, b, t = kry.k, kry.b, kry.t
    if b == 1:
        piece = sigma_min_K if sigma_min_K is not None else float(singular_values(kry.K)[-1])
        return PVDecomposition([np.eye(k)], np.array([piece]), 0.0, False, [0])
    Qs, pieces, ranks = [], [], []
    degenerate = False
    for j in range(b):
        L = kry.leave_one_out(j)
        res = svd(L, full_matrices=True)
        tol = rank_threshold(k, float(res.s[0]))
        r = int(np.sum(res.s > tol))
        ranks.append(r)
        if r != k - t:
            degenerate = True
        Qj = res.U[:, r:]
        Qs.append(Qj)
        pieces.append(float(singular_values(Qj.T @ kry.block(j))[-1]) if Qj.shape[1] else 0.0)
    resid = 0.0
    for j in range(b):
        for i in range(b):
            if i != j and Qs[j].shape[1]:
                resid = max(resid, float(np.max(np.abs(Qs[j].T @ kry.block(i)))))
    note = "degenerate leave-one-out rank" if degenerate else ""
    return PVDecomposition(Qs, np.array(pieces), resid, degenerate, ranks, note)


def pv_holds(sigma_min_K: float, sigma_max_K: float, pv: PVDecomposition, slack: float = 1e-10) -> bool:
    return sigma_min_K >= pv.rhs - slack * sigma_max_K


def bilinear_variance(Qj, V, x, y, tol: float = 1e-8) -> float:
    """``sum_i [Q_j x]_i^2 [V y]_i^2``, the variance of ``x^T Q_j^T diag(g) V y`` over Gaussian ``g``."""
    Vm = V.matrix() if hasattr(V, "matrix") else np.asarray(V, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    for name, v in (("x", x), ("y", y)):
        if abs(np.linalg.norm(v) - 1) > tol:
            raise ValueError(f"{name} must be a unit vector (norm {np.linalg.norm(v)})")
    return float(np.sum((np.asarray(Qj) @ x) ** 2 * (Vm @ y) ** 2))


# --------------------------------------------------------------------------
# non-sparsification
# --------------------------------------------------------------------------


def vandermonde_log_threshold(spectrum: SpectrumModel, t: int, y_inf: float) -> float:
    """``log(||y||_inf (Delta/(6 kappa))^{2(t-1)})``."""
    gs = spectrum.gap_stats()
    if t == 1:
        return math.log(y_inf)
    if gs.min_relative_gap <= 0:
        return -math.inf
    return math.log(y_inf) + 2 * (t - 1) * (math.log(gs.min_relative_gap) - math.log(6 * gs.condition_number))


def _exact_poly_values(nodes: Sequence[Fraction], coeffs: Sequence[Fraction]) -> list[Fraction]:
    out = []
    for lam in nodes:
        acc = Fraction(0)
        for c in reversed(coeffs):
            acc = acc * lam + c
        out.append(acc)
    return out


def vandermonde_nonsparse_count(V, y, spectrum: SpectrumModel) -> tuple[int, float]:
    """Number of entries of ``V y`` at or above the non-sparsification threshold.

    ``y`` may hold ``Fraction`` entries for fully exact evaluation. Otherwise
    entries whose double value is within rounding error of the threshold are
    re-evaluated exactly. Returns ``(count, threshold)``.
    """
    Vm = V.matrix() if hasattr(V, "matrix") else np.asarray(V, dtype=np.float64)
    k, t = Vm.shape
    exact_input = any(isinstance(c, Fraction) for c in y)
    if exact_input:
        yq = [Fraction(c) for c in y]
        y_inf = float(max(abs(c) for c in yq))
    else:
        yf = np.asarray(y, dtype=np.float64)
        y_inf = float(np.max(np.abs(yf)))
    if y_inf == 0:
        raise ValueError("y must be nonzero")
    log_thr = vandermonde_log_threshold(spectrum, t, y_inf)
    thr = math.exp(log_thr) if log_thr > -745 else 0.0
    thr_q = Fraction(thr) if thr > 0 else Fraction(0)
    nodes = [Fraction(float(x)) for x in spectrum.nodes]
    if exact_input:
        vals = _exact_poly_values(nodes, yq)
        count = sum(1 for v in vals if abs(v) >= thr_q and (thr_q > 0 or v != 0))
        return count, thr
    vy = Vm @ yf
    err = 4 * t * EPS * (np.abs(Vm) @ np.abs(yf)) + 1e-300
    clear = np.abs(vy) - err >= thr
    unsure = np.flatnonzero(~clear & (np.abs(vy) + err >= thr))
    count = int(np.sum(clear))
    if unsure.size:
        ycoef = [Fraction(float(c)) for c in yf]
        vals = _exact_poly_values([nodes[i] for i in unsure], ycoef)
        count += sum(1 for v in vals if abs(v) >= thr_q and (thr_q > 0 or v != 0))
    return count, thr


def root_placed_polynomial(spectrum: SpectrumModel, t: int) -> list[Fraction]:
    """Exact coefficients (constant first) of ``prod_{j=2}^{t} (x - lambda_j)``."""
    coeffs = [Fraction(1)]
    for lam in spectrum.nodes[1:t]:
        r = Fraction(float(lam))
        new = [Fraction(0)] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            new[i + 1] += c
            new[i] -= r * c
        coeffs = new
    return coeffs


def subspace_log_threshold(k: int, t: int, spectrum: SpectrumModel, delta: float) -> float:
    """``log((delta log^{-1/2}(2/delta) / (14 k^3)) (Delta/(2 kappa))^{t-1})``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    gs = spectrum.gap_stats()
    head = math.log(delta) - 0.5 * math.log(math.log(2 / delta)) - math.log(14) - 3 * math.log(k)
    if t == 1:
        return head
    if gs.min_relative_gap <= 0:
        return -math.inf
    return head + (t - 1) * (math.log(gs.min_relative_gap) - math.log(2 * gs.condition_number))


def subspace_nonsparse_check(Qj, x, spectrum: SpectrumModel, delta: float) -> tuple[int, float]:
    """Entries of ``Q_j x`` at or above the subspace non-sparsification threshold."""
    Qj = np.asarray(Qj, dtype=np.float64)
    k, t = Qj.shape
    thr = math.exp(subspace_log_threshold(k, t, spectrum, delta))
    u = Qj @ np.asarray(x, dtype=np.float64)
    return int(np.sum(np.abs(u) >= thr)), thr


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


@dataclass
class Certificate:
    """Candidate ``(s, eta, M)`` non-sparsification certificate and its checks."""

    Gamma: np.ndarray
    s: int
    eta: float
    M: float
    norm: float
    orthogonality_residual: float
    rip_min: float
    rip_exhaustive: bool
    supports_checked: int
    i: int = 0
    j: int = 0

    @property
    def property1(self) -> bool:
        return self.orthogonality_residual <= 1e-10

    @property
    def property2(self) -> bool:
        return self.norm <= self.M

    @property
    def property3(self) -> bool:
        return self.rip_min >= self.eta

    @property
    def valid(self) -> bool:
        return self.property1 and self.property2 and self.property3


def certificate_parameters(k: int, t: int, spectrum: SpectrumModel, delta: float) -> tuple[int, float, float]:
    """``(s, eta, M)`` of the single-vector Krylov certificate."""
    gs = spectrum.gap_stats()
    log_eta = math.log(delta) - math.log(2) - 1.5 * math.log(k)
    if t > 1:
        log_eta += (t - 1) * (math.log(gs.min_relative_gap) - math.log(2 * gs.condition_number))
    M = math.sqrt(5) * k**1.5 * math.sqrt(math.log(2 / delta))
    return t, math.exp(log_eta), M


def min_sparse_gain(Gamma: np.ndarray, s: int, max_exhaustive_k: int = EXHAUSTIVE_K, samples: int = 2000, seed=0):
    """Smallest ``||Gamma^T u|| / ||u||`` over ``s``-sparse ``u``.

    That minimum is ``min_S sigma_min(Gamma[S, :])`` over supports of size
    ``s`` (for ``s`` at most the column count). Enumerates every support when
    ``k <= max_exhaustive_k``, otherwise samples ``samples`` random ones.
    Returns ``(value, exhaustive, supports_checked)``.
    """
    k = Gamma.shape[0]
    if k <= max_exhaustive_k:
        supports = np.array(list(itertools.combinations(range(k), s)), dtype=np.intp)
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        supports = np.sort(np.array([rng.choice(k, s, replace=False) for _ in range(samples)]), axis=1)
        exhaustive = False
    best = math.inf
    for start in range(0, len(supports), 4096):
        sub = Gamma[supports[start : start + 4096]]  # (batch, s, m)
        sv = np.linalg.svd(sub, compute_uv=False)
        # s x m with s <= m: smallest of the s singular values
        best = min(best, float(np.min(sv[:, -1])))
    return best, exhaustive, len(supports)


def certify(kry: VandermondeKrylov, j: int, i: int, delta: float, pv: PVDecomposition | None = None, seed=0) -> Certificate:
    """Check ``Gamma = diag(g_i) V`` as a certificate for ``Q_j`` (0-based indices)."""
    if i == j:
        raise ValueError("certificate index i must differ from j")
    if not (0 <= i < kry.b and 0 <= j < kry.b):
        raise ValueError(f"indices must be in [0, {kry.b})")
    if pv is None:
        pv = pv_decompose(kry)
    Gamma = kry.block(i)
    s, eta, M = certificate_parameters(kry.k, kry.t, kry.spectrum, delta)
    Qj = pv.Q[j]
    resid = float(np.max(np.abs(Gamma.T @ Qj))) if Qj.size else 0.0
    rip, exhaustive, nsup = min_sparse_gain(Gamma, s, seed=seed)
    return Certificate(Gamma, s, eta, M, float(singular_values(Gamma)[0]), resid, rip, exhaustive, nsup, i, j)


def abstract_nonsparse_bound(cert: Certificate, k: int) -> float:
    """Entry-size floor ``eta / (3 M sqrt(k))`` implied by a certificate."""
    if cert.eta > cert.M:
        raise ValueError(f"eta={cert.eta} exceeds M={cert.M}; not a certificate")
    return cert.eta / (3 * cert.M * math.sqrt(k))


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def sigma_min_experiment(
    spectrum: SpectrumModel,
    b: int,
    trials: int,
    seed: int,
    delta: float = 0.1,
    calibration_C: float = 1.0,
    with_pv: bool = True,
    precision: str = "auto",
) -> list[TrialRecord]:
    """``sigma_min(K)`` against the log-bound over seeded trials.

    ``passed`` is ``log sigma_min >= log bound``. With ``with_pv`` the
    Peng-Vempala right-hand side goes to ``pv_rhs`` and ``value`` holds
    ``1`` if that inequality holds (within ``1e-10 sigma_max``) and ``0``
    otherwise.
    """
    if spectrum.k > 200:
        raise ValueError("sigma_min experiments are limited to k <= 200")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    log_bound = sigma_min_log_bound(spectrum, b, delta, calibration_C)
    out = []
    for trial in range(trials):
        t0 = time.perf_counter()
        kry = sample_krylov(spectrum, b, trial_seed(seed, trial))
        smin, smax, log_smin, method = krylov_sigma_min(kry, precision)
        rec = TrialRecord(
            experiment=f"sigma_min/b={b:03d}",
            seed=seed,
            trial=trial,
            k=kry.k,
            b=b,
            t=kry.t,
            delta=delta,
            calibration_C=calibration_C,
            sigma_min=smin,
            log_sigma_min=log_smin,
            log_bound=log_bound,
            passed=log_smin >= log_bound,
            note=method,
        )
        if with_pv:
            pv = pv_decompose(kry, sigma_min_K=smin)
            rec.pv_rhs = pv.rhs
            rec.degenerate = pv.degenerate
            rec.value = 1.0 if pv_holds(smin, smax, pv) else 0.0
            if pv.degenerate:
                rec.note += ";" + pv.note
        rec.wall_time = time.perf_counter() - t0
        out.append(rec)
    return out


@dataclass
class SigmaMinSummary:
    b: int
    t: int
    trials: int
    failures: int
    degenerate: int
    pv_violations: int
    log_bound: float
    log_sigma_min_quantiles: tuple[float, float, float]

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.trials

    @property
    def median_slack(self) -> float:
        """Median ``log sigma_min - log bound`` (natural log)."""
        return self.log_sigma_min_quantiles[1] - self.log_bound


def summarize_sigma_min(records: Sequence[TrialRecord]) -> SigmaMinSummary:
    recs = [r for r in records if not r.degenerate]
    logs = np.array([r.log_sigma_min for r in recs])
    q = tuple(float(v) for v in np.quantile(logs, [0.05, 0.5, 0.95])) if logs.size else (math.nan,) * 3
    r0 = records[0]
    return SigmaMinSummary(
        b=r0.b,
        t=r0.t,
        trials=len(recs),
        failures=sum(1 for r in recs if not r.passed),
        degenerate=len(records) - len(recs),
        pv_violations=sum(1 for r in recs if r.value == 0.0),
        log_bound=r0.log_bound,
        log_sigma_min_quantiles=q,
    )


def fit_log_slope(summaries: Sequence[SigmaMinSummary]) -> float:
    """Least-squares slope of median ``log(1/sigma_min)`` against ``t``."""
    ts = np.array([s.t for s in summaries], dtype=np.float64)
    ys = np.array([-s.log_sigma_min_quantiles[1] for s in summaries])
    if ts.size < 2:
        raise ValueError("need at least two depths to fit a slope")
    return float(np.polyfit(ts, ys, 1)[0])


def slope_limit(spectrum: SpectrumModel, margin: float = 0.2) -> float:
    """``6 log(6 kappa / Delta)`` plus a relative margin."""
    gs = spectrum.gap_stats()
    return 6 * math.log(6 * gs.condition_number / gs.min_relative_gap) * (1 + margin)


def binomial_rate_ok(failures: int, trials: int, rate: float, confidence: float = 0.95) -> bool:
    """One-sided test: False only if the data reject ``true failure rate <= rate``."""
    if failures <= rate * trials:
        return True
    p_value = float(stats.binom.sf(failures - 1, trials, rate))
    return p_value >= 1 - confidence


@dataclass
class NonsingularityReport:
    k: int
    b: int
    trials: int
    rank_failures: int
    failed_trials: list[int] = field(default_factory=list)
    min_ratio: float = math.inf
    witness_rank: int | None = None


def krylov_rank(K: np.ndarray) -> int:
    s = singular_values(K)
    return int(np.sum(s > rank_threshold(K.shape[0], float(s[0]))))


def nonsingularity_check(spectrum: SpectrumModel, b: int, trials: int, seed: int) -> NonsingularityReport:
    """Rank of ``K`` over Gaussian trials, plus the block-indicator witness."""
    k = spectrum.k
    if k % b:
        raise ValueError(f"b={b} must divide k={k}")
    if k // b > 4:
        warnings.warn("t > 4: conditioning may mask rank", RuntimeWarning, stacklevel=2)
    rep = NonsingularityReport(k, b, trials, 0)
    for trial in range(trials):
        K = sample_krylov(spectrum, b, trial_seed(seed, trial)).K
        s = singular_values(K)
        rep.min_ratio = min(rep.min_ratio, float(s[-1] / s[0]))
        if s[-1] <= rank_threshold(k, float(s[0])):
            rep.rank_failures += 1
            rep.failed_trials.append(trial)
    rep.witness_rank = krylov_rank(block_indicator_witness(spectrum, b).K)
    return rep
