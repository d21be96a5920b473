"""Cosparse analysis-LASSO via ADMM, with numerical certificates of its convergence inequalities."""

from .certify import CertificationReport, Tolerances, certified_reference, certify_all, h_norm_sq
from .errors import (
    ConfigError,
    CosparseError,
    DivergenceError,
    InfeasibleCosupportError,
    InsufficientTraceError,
    InvalidDimensionError,
    InvalidInputError,
    NumericError,
    ReferenceUnavailableError,
)
from .experiment import ExperimentConfig, RunSummary, run, sweep
from .frame import FrameReport, TightFrame, build_concatenated_bases_frame, build_identity_frame, validate_frame
from .problem import ProblemInstance, cosparsity, cosupport, generate_cosparse_signal, generate_instance
from .solver import SolverConfig, SolverTrace, reference_solution, soft_threshold, solve
from .vi import F_apply, KktResiduals, ViPoint, kkt_residuals, theta, vi_gap_probe

__version__ = "0.1.0"
