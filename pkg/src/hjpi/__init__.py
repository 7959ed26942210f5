"""Monotone space-time finite differences and policy iteration for nonconvex
viscous Hamilton-Jacobi (Bellman-Isaacs) equations on a periodic torus."""

from .grid import (
    Field,
    Grid,
    GridError,
    SpaceTimeField,
    central_gradient,
    discrete_time_diff,
    one_sided_diff,
    second_diff,
)
from .problem import (
    BestResponse,
    Bounds,
    ControlSet,
    Problem,
    ProblemError,
    best_response,
    estimate_bounds,
    hamiltonian,
    hamiltonian_lipschitz_check,
    lagrangian,
)
from .problems import REGISTRY, build
from .scheme import (
    CflError,
    MonotonicityError,
    NumericError,
    SchemeParams,
    StencilWeights,
    certify_conditions,
    select_scheme_params,
    solve_frozen,
    solve_value,
    stencil_weights,
    step_frozen,
    step_value,
)
from .pi import (
    HamiltonianGapReport,
    PiConfig,
    PiReport,
    PiRun,
    PolicyField,
    constant_policy,
    hamiltonian_gap_check,
    improve_policy,
    pi_bound_constants,
    run_policy_iteration,
)
from .analysis import (
    BernsteinReport,
    FineGridReference,
    MonotoneReport,
    RefinementStudy,
    check_bernstein,
    check_monotone_comparison,
    degenerate_nu_exponent,
    fine_grid_reference,
    hamiltonian_source,
    run_refinement_study,
)

__version__ = "0.1.0"
