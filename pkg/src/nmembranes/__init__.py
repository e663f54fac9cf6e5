"""Constrained N-membrane evolution with p-Laplacian diffusion.

Two independent solvers (bounded penalization with semismooth Newton
stepping, and a projected Gauss-Seidel variational-inequality oracle) plus
the analysis layer that verifies the structure of the solutions:
coincidence masks, reaction reconstruction, lattice bounds on the parabolic
residual, nondegeneracy, and asymptotic stabilization.
"""

from .analysis import (CoincidenceMaskSet, ContactReport, NondegeneracyReport,
                       VerifyReport, average_f, b_coefficient,
                       coincidence_masks, contact_condition_check, ls_bounds,
                       mask_distance, nondegeneracy_check,
                       reconstruct_reaction, verify_ls)
from .config import (ConfigError, ProblemConfig, SourceSpec, SourceTerm,
                     initial_state, load_config, parse_config)
from .evolution import (EvolutionResult, EvolutionState, SolveReport,
                        SolverFailure, solve_evolution, step_double_obstacle,
                        step_penalized)
from .grid import (GridSpec, MultiField, ScalarField, l2_norm, lp_grad_norm,
                   make_grid, project_ordered)
from .oracle import pgs_sweep, solve_stationary, step_projected
from .penalty import (PenaltyParams, apply_B, penalty_params,
                      t_monotone_pairing, theta_eps, xi_coefficients)
from .plap import (PFluxParams, apply_p_laplacian, discrete_P,
                   linearize_p_laplacian)

__all__ = [
    "CoincidenceMaskSet", "ContactReport", "NondegeneracyReport",
    "VerifyReport", "average_f", "b_coefficient", "coincidence_masks",
    "contact_condition_check", "ls_bounds", "mask_distance",
    "nondegeneracy_check", "reconstruct_reaction", "verify_ls",
    "ConfigError", "ProblemConfig", "SourceSpec", "SourceTerm",
    "initial_state", "load_config", "parse_config",
    "EvolutionResult", "EvolutionState", "SolveReport", "SolverFailure",
    "solve_evolution", "step_double_obstacle", "step_penalized",
    "GridSpec", "MultiField", "ScalarField", "l2_norm", "lp_grad_norm",
    "make_grid", "project_ordered",
    "pgs_sweep", "solve_stationary", "step_projected",
    "PenaltyParams", "apply_B", "penalty_params", "t_monotone_pairing",
    "theta_eps", "xi_coefficients",
    "PFluxParams", "apply_p_laplacian", "discrete_P", "linearize_p_laplacian",
]

__version__ = "0.1.0"
