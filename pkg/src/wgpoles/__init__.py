"""Threshold poles of weakly perturbed planar waveguides.

Tools for locating the resolvent pole that detaches from a transverse
threshold of a straight guide under a small localized perturbation, for both
regular perturbations (a potential in the interior) and singular boundary
deformations (a window or patch changing the wall condition), together with
closed-form leading asymptotics and a finite-difference oracle for
cross-checking bindings on truncated guides.
"""

from .cell import explicit_window_solution_2d, fit_farfield_coefficient
from .harness import (
    CSV_HEADER,
    DIRICHLET_WINDOW,
    NEUMANN_PATCH,
    REGULAR_POTENTIAL,
    SCENARIOS,
    ConfigError,
    ExperimentConfig,
    FitError,
    SweepRow,
    compute_fits,
    emit_report,
    evaluate_checks,
    fit_loglog_slope,
    oracle_binding,
    parse_config,
    predict_row,
    render_csv,
    run_experiment,
    run_sweep,
    truncated_binding,
)
from .modesum import (
    BoxRegion,
    ModeSumField,
    ModeSumKernel,
    apply_mode_sum,
    longitudinal_exponent,
    longitudinal_exponents,
    regularized_kernel,
)
from .oracle import (
    DIRICHLET_ENDS,
    NEUMANN_ENDS,
    FdOperator,
    OracleSolution,
    SolverError,
    TailFitError,
    TruncatedGuide,
    aitken_limit,
    build_fd_operator,
    discrete_binding,
    discrete_threshold,
    extract_tail_coefficients,
    lowest_eigenpairs,
    richardson,
)
from .regular_pole import (
    BOUND_STATE,
    NO_EIGENVALUE,
    POLE_AT_ZERO,
    RESONANCE,
    AmbiguousClassificationError,
    EigenfunctionField,
    IterationDivergedError,
    LocalizedOperator,
    PerturbationField,
    PoleResult,
    assemble_birman_schwinger,
    assemble_residue,
    classify_pole,
    operator_matrix,
    operator_norm,
    regular_leading_asymptotic,
    solve_secular,
)
from .singular_asym import (
    DIRICHLET_PATCH,
    NEUMANN_WINDOW,
    AsymptoticPole,
    ExpansionMismatchError,
    NearFieldReport,
    WindowSpec,
    dirichlet_window_pole,
    dirichlet_window_width,
    near_field,
    near_field_check,
    neumann_patch_pole,
    sphere_area,
)
from .transverse import (
    BC_DIRICHLET,
    BC_NEUMANN,
    CrossSection,
    TransverseBasis,
    boundary_traces,
    build_basis,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousClassificationError",
    "AsymptoticPole",
    "BC_DIRICHLET",
    "BC_NEUMANN",
    "BOUND_STATE",
    "BoxRegion",
    "CSV_HEADER",
    "ConfigError",
    "CrossSection",
    "DIRICHLET_ENDS",
    "DIRICHLET_PATCH",
    "DIRICHLET_WINDOW",
    "EigenfunctionField",
    "ExpansionMismatchError",
    "ExperimentConfig",
    "FdOperator",
    "FitError",
    "IterationDivergedError",
    "LocalizedOperator",
    "ModeSumField",
    "ModeSumKernel",
    "NEUMANN_ENDS",
    "NEUMANN_PATCH",
    "NEUMANN_WINDOW",
    "NO_EIGENVALUE",
    "NearFieldReport",
    "OracleSolution",
    "POLE_AT_ZERO",
    "PerturbationField",
    "PoleResult",
    "REGULAR_POTENTIAL",
    "RESONANCE",
    "SCENARIOS",
    "SolverError",
    "SweepRow",
    "TailFitError",
    "TransverseBasis",
    "TruncatedGuide",
    "WindowSpec",
    "__version__",
    "aitken_limit",
    "apply_mode_sum",
    "assemble_birman_schwinger",
    "assemble_residue",
    "boundary_traces",
    "build_basis",
    "build_fd_operator",
    "classify_pole",
    "compute_fits",
    "dirichlet_window_pole",
    "dirichlet_window_width",
    "discrete_binding",
    "discrete_threshold",
    "emit_report",
    "evaluate_checks",
    "explicit_window_solution_2d",
    "extract_tail_coefficients",
    "fit_farfield_coefficient",
    "fit_loglog_slope",
    "longitudinal_exponent",
    "longitudinal_exponents",
    "lowest_eigenpairs",
    "near_field",
    "near_field_check",
    "neumann_patch_pole",
    "operator_matrix",
    "operator_norm",
    "oracle_binding",
    "parse_config",
    "predict_row",
    "regular_leading_asymptotic",
    "regularized_kernel",
    "render_csv",
    "richardson",
    "run_experiment",
    "run_sweep",
    "solve_secular",
    "sphere_area",
    "truncated_binding",
]
