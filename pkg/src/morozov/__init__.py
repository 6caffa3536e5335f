"""Morozov-principle regularization for data assimilation problems.

Mixed (saddle-point) Tikhonov solves, a generalized discrepancy
principle for operators without dense range, and Morozov solutions via
the dual convex program, with Laplace interior-data, Cauchy-data and
heat interior-data applications on the unit square.
"""

from .dual import DualOptions, DualResult, demeestere_iterate, dual_gradient, \
    dual_objective, minimize_dual, morozov_from_dual
from .estimator import MorozovEstimator, build_problem, build_projector
from .experiment import ExperimentConfig, RunReport, rerun_csv
from .mesh import OmegaSpec, TriMesh, generate_mesh
from .mixed import check_admissible, discrepancy_curve, discrepancy_derivative, \
    morozov_find_epsilon, require_admissible, solve_mixed
from .noise import make_inadmissible_data, synth_noise_pointwise, \
    synth_noise_structured
from .operator import AdmissibilityReport, AssimilationOperator, \
    ConvergenceError, DualIterate, InadmissibleDataError, MixedSolution, \
    NoisyData, NonsmoothPointError, Projector, constant_observation_projector

__all__ = [
    "AdmissibilityReport",
    "AssimilationOperator",
    "ConvergenceError",
    "DualIterate",
    "DualOptions",
    "DualResult",
    "ExperimentConfig",
    "InadmissibleDataError",
    "MixedSolution",
    "MorozovEstimator",
    "NoisyData",
    "NonsmoothPointError",
    "OmegaSpec",
    "Projector",
    "RunReport",
    "TriMesh",
    "build_problem",
    "build_projector",
    "check_admissible",
    "constant_observation_projector",
    "demeestere_iterate",
    "discrepancy_curve",
    "discrepancy_derivative",
    "dual_gradient",
    "dual_objective",
    "generate_mesh",
    "make_inadmissible_data",
    "minimize_dual",
    "morozov_find_epsilon",
    "morozov_from_dual",
    "rerun_csv",
    "require_admissible",
    "solve_mixed",
    "synth_noise_pointwise",
    "synth_noise_structured",
]

__version__ = "0.1.0"
