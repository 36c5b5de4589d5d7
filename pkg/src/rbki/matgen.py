"""Test matrices with prescribed singular values."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dense import SvdResult

KINDS = ("geometric", "polynomial", "clustered", "list")


@dataclass(frozen=True)
class SpectrumSpec:
    """Recipe for a synthetic ``n x d`` matrix.

    kind
        ``geometric`` (``sigma_i = ratio**(i-1)``), ``polynomial``
        (``sigma_i = i**(-power)``), ``clustered`` (slow decay ``within`` per
        index, times ``drop`` after each listed gap position) or ``list``
        (explicit values, zero-padded).
    """

    kind: str
    n: int
    d: int
    seed: int = 0
    ratio: float = 0.9
    power: float = 1.0
    gap_positions: tuple[int, ...] = ()
    drop: float = 0.1
    within: float = 0.99
    values: tuple[float, ...] = field(default_factory=tuple)
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1 or self.d < 1:
            raise ValueError(f"n and d must be positive, got {self.n}, {self.d}")

    def singular_values(self) -> np.ndarray:
        r = min(self.n, self.d)
        i = np.arange(r, dtype=np.float64)
        if self.kind == "geometric":
            if not 0 < self.ratio <= 1:
                raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
            s = self.ratio**i
        elif self.kind == "polynomial":
            s = (i + 1.0) ** (-self.power)
        elif self.kind == "clustered":
            s = self.within**i
            for pos in self.gap_positions:
                s[pos:] *= self.drop
        else:
            vals = np.asarray(self.values, dtype=np.float64)
            if vals.size > r:
                raise ValueError(f"spectrum has {vals.size} values but min(n, d) = {r}")
            if np.any(vals < 0) or np.any(np.diff(vals) > 0):
                raise ValueError("explicit singular values must be nonnegative and nonincreasing")
            s = np.zeros(r)
            s[: vals.size] = vals
        if self.normalize and s[0] > 0:
            s = s / s[0]
        return s


def parse_spectrum(text: str, n: int, d: int, seed: int = 0, normalize: bool = False) -> SpectrumSpec:
    """Parse ``geometric:0.9``, ``polynomial:1.5``, ``clustered:20,40:0.1`` or ``list:3,2,1``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    parts = rest.split(":") if rest else []
    try:
        if kind == "geometric":
            return SpectrumSpec(kind, n, d, seed, ratio=float(parts[0]), normalize=normalize)
        if kind == "polynomial":
            return SpectrumSpec(kind, n, d, seed, power=float(parts[0]), normalize=normalize)
        if kind == "clustered":
            pos = tuple(int(p) for p in parts[0].split(",") if p)
            drop = float(parts[1]) if len(parts) > 1 else 0.1
            within = float(parts[2]) if len(parts) > 2 else 0.99
            return SpectrumSpec(kind, n, d, seed, gap_positions=pos, drop=drop, within=within, normalize=normalize)
        if kind == "list":
            vals = tuple(float(v) for v in parts[0].split(","))
            return SpectrumSpec(kind, n, d, seed, values=vals, normalize=normalize)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"cannot parse spectrum {text!r}: {exc}") from exc
    raise ValueError(f"unknown spectrum kind in {text!r}")


def haar_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Haar-distributed ``rows x cols`` matrix with orthonormal columns."""
    X = rng.standard_normal((rows, cols))
    Q, R = np.linalg.qr(X)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def synth_matrix(spec: SpectrumSpec) -> tuple[np.ndarray, SvdResult]:
    """``A = U diag(sigma) V^T`` with Haar factors, plus that SVD as ground truth."""
    if max(spec.n, spec.d) > 4000:
        raise ValueError("synthetic matrices are limited to 4000 x 4000")
    s = spec.singular_values()
    r = s.size
    rng = np.random.default_rng(spec.seed)
    U = haar_orthonormal(rng, spec.n, r)
    V = haar_orthonormal(rng, spec.d, r)
    A = (U * s) @ V.T
    return A, SvdResult(U, s, V)
