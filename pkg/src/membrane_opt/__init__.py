"""Solvers and adjoint-based optimal control for the two-phase membrane problem."""

__version__ = "0.1.0"

from .field import (
    BoundaryData,
    Grid2D,
    ScalarField,
    SolverError,
    apply_laplacian,
    h1_norm,
    h1_seminorm_sq,
    harmonic_extension,
    l2_inner,
    l2_norm,
    read_field_csv,
    smallest_eigenvalue,
    solve_spd,
    write_field_csv,
)
from .regularization import Smoother, beta, beta_prime, chi, chi_prime, default_width, phi_int
from .state import (
    FreeBoundaryLabels,
    ProblemData,
    StateSolution,
    energy_two_phase,
    free_boundary,
    recover_obstacle,
    smoothed_energy,
    solve_one_phase,
    solve_state,
    solve_state_limit,
    state_residual,
)
from .adjoint import AdjointSolution, reduced_gradient, solve_adjoint, solve_sensitivity
from .control import (
    EpsilonPathResult,
    OptimizeReport,
    OptimizerConfig,
    epsilon_path,
    objective,
    optimality_residual,
    optimize,
    project_box,
)
from .verify import CheckReport, VerifyConfig, run_all
