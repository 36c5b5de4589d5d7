"""Randomized block Krylov iteration for low-rank approximation, plus a conditioning lab."""

from .dense import (
    SvdResult,
    VandermondeMatrix,
    orthonormalize,
    principal_angles,
    sigma_max,
    sigma_min,
    svd,
    vandermonde_inverse_inf_norm,
)
from .gaps import GapStats, gap_stats, goodness_estimate, goodness_restrict, recommend_q
from .krylov import (
    KrylovBasis,
    KrylovConfig,
    LowRankApprox,
    build_krylov_basis,
    error_metrics,
    gaussian_start_block,
    rbki,
    simulated_block,
)
from .matgen import SpectrumSpec, synth_matrix
from .matrix_io import MatrixFormatError, read_matrix, write_matrix
from .operators import DenseOperator, LinearOperator, PerturbationConfig, smooth_perturb
from .records import TrialRecord, emit_records

__version__ = "0.1.0"

__all__ = [
    "DenseOperator",
    "GapStats",
    "KrylovBasis",
    "KrylovConfig",
    "LinearOperator",
    "LowRankApprox",
    "MatrixFormatError",
    "PerturbationConfig",
    "SpectrumSpec",
    "SvdResult",
    "TrialRecord",
    "VandermondeMatrix",
    "build_krylov_basis",
    "emit_records",
    "error_metrics",
    "gap_stats",
    "gaussian_start_block",
    "goodness_estimate",
    "goodness_restrict",
    "orthonormalize",
    "principal_angles",
    "rbki",
    "read_matrix",
    "recommend_q",
    "sigma_max",
    "sigma_min",
    "simulated_block",
    "smooth_perturb",
    "svd",
    "synth_matrix",
    "vandermonde_inverse_inf_norm",
    "write_matrix",
]
