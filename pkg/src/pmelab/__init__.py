"""Numerical verification of Aronson-Benilan gradient estimates for the
weighted porous medium equation on radial model manifolds."""

from .comparison import comparison_rhs, s_kappa, s_kappa_prime, verify_comparison
from .estimates import (
    BOUND_KINDS,
    CutoffProfile,
    EstimateParams,
    EstimateReport,
    F_alpha,
    a_const,
    compact_bound_rhs,
    global_bound_rhs,
    lemma31_gap,
    li_yau_rhs,
    local_bound_rhs,
    theorem22_rhs,
    verify,
)
from .geometry import (
    CurvatureParams,
    Grid1D,
    ModelManifold,
    Weight,
    admissible_K,
    bochner_gap,
    c_const,
    conformal_bounds,
    epsilon_range_contains,
    radial_ricci,
    weighted_laplacian,
)
from .oracle import BarenblattParams, barenblatt, gaussian_heat, refine_study
from .solver import PMEProblem, SolutionField, TimeStepPolicy, solve

__version__ = "0.1.0"
