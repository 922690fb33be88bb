"""Spectral curves, vector critical measures and multiple orthogonal polynomials
for Hermitian random matrices with an external source."""

from .curve import (
    SpectralCurve,
    admissibility_check,
    classify_local_behaviors,
    density,
    pastur_curve,
    support,
)
from .measures import (
    cauchy_residuals,
    component_periods,
    extract_measures,
    variational_residuals,
)
from .mop import (
    MopLattice,
    MultiIndex,
    PrecisionBudgetExceeded,
    UpRightPath,
    compute_mop,
    convergence_study,
    finite_n_curve,
    recurrence_coefficients,
    step_recurrence,
)
from .numerics import Potential, PrecisionConfig, RealPoly, roots
from .quad_diff import boutroux_periods, build_gamma_star, classify_regime
from .symmetric import build_constrained_pair, check_symmetry, verify_potential_identities

__version__ = "0.1.0"

__all__ = [
    "MopLattice",
    "MultiIndex",
    "Potential",
    "PrecisionBudgetExceeded",
    "PrecisionConfig",
    "RealPoly",
    "SpectralCurve",
    "UpRightPath",
    "admissibility_check",
    "boutroux_periods",
    "build_constrained_pair",
    "build_gamma_star",
    "cauchy_residuals",
    "check_symmetry",
    "classify_local_behaviors",
    "classify_regime",
    "component_periods",
    "compute_mop",
    "convergence_study",
    "density",
    "extract_measures",
    "finite_n_curve",
    "pastur_curve",
    "recurrence_coefficients",
    "roots",
    "step_recurrence",
    "support",
    "variational_residuals",
    "verify_potential_identities",
]
