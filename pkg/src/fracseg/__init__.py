"""Numerical segregation profiles of a fractional competition system.

The package solves the extension problem of the one-dimensional
segregation profile on a log-polar grid and checks its quantitative
structure: angular spectrum, frequency monotonicity, Pohozaev identity,
decay exponents, refined asymptotics and translation alignment, together
with Poisson-kernel and Harnack utilities.
"""

from .asymptotics import (BlowdownScaling, ExpansionReport, align_translation,
                          blowdown_scaling, emden_fowler_residual, extract_expansion,
                          fit_decay, translate_pair)
from .core import (FieldPair, FracParam, LogPolarField, LogPolarGrid, build_grid,
                   make_params, read_snapshot, write_snapshot)
from .errors import (ConfigurationError, DegenerateFieldError, DomainError, FitError,
                     FracSegError, HypothesisError, NumericalError, PositivityError,
                     SolverError, StructuralError, TruncationError)
from .kernels import (KernelEval, PhiSolution, appendix_checks, harnack_certificate,
                      hyperbolic_distance, poisson_extend, poisson_kernel, solve_phi)
from .monotone import FrequencyTrace, acf_trace, doubling_check, frequency_trace, pohozaev_residual
from .operator import DiscreteOperator, apply_La, assemble_operator, weak_residual_norm
from .solver import SolveReport, SolverConfig, residual_report, solve_profile
from .spectral import (EigenSet, cone_exponent, exact_homogeneous_pair, poincare_constant,
                       solve_mixed_eigen)

__version__ = "0.1.0"

__all__ = [
    "BlowdownScaling", "ConfigurationError", "DegenerateFieldError", "DiscreteOperator",
    "DomainError", "EigenSet", "ExpansionReport", "FieldPair", "FitError", "FracParam",
    "FracSegError", "FrequencyTrace", "HypothesisError", "KernelEval", "LogPolarField",
    "LogPolarGrid", "NumericalError", "PhiSolution", "PositivityError", "SolveReport",
    "SolverConfig", "SolverError", "StructuralError", "TruncationError", "acf_trace",
    "align_translation", "appendix_checks", "apply_La", "assemble_operator",
    "blowdown_scaling", "build_grid", "cone_exponent", "doubling_check",
    "emden_fowler_residual", "exact_homogeneous_pair", "extract_expansion", "fit_decay",
    "frequency_trace", "harnack_certificate", "hyperbolic_distance", "make_params",
    "poincare_constant", "pohozaev_residual", "poisson_extend", "poisson_kernel",
    "read_snapshot", "residual_report", "solve_mixed_eigen", "solve_phi", "solve_profile",
    "translate_pair", "weak_residual_norm", "write_snapshot",
]
