"""Distributionally robust joint chance-constrained programming over
data-driven Wasserstein balls: models, exact feasibility oracle, conic
reformulations, solvers, and benchmark studies."""

from .model import (
    AffineBoth,
    BilinearQuadratic,
    BinaryDomain,
    Box,
    BoxDomain,
    DrccpProblem,
    Ellipsoid,
    FullSpace,
    GroundNorm,
    LinearDomain,
    Polyhedron,
    QuadraticXi,
    SampleSet,
    WassersteinBall,
    dual_norm,
    evaluate_constraint,
    validate_problem,
)
from .oracle import (
    ViolationEstimate,
    check_zd_membership,
    distance_to_unsafe,
    worst_case_violation_probability,
)
from .conic import ConeProgram, ConeProgramBuilder, check_solution
from .reformulate import (
    BinaryCvarCertificate,
    CvarCertificate,
    build_binary_cvar_mip,
    build_cvar_relaxation,
    build_robust_membership,
    build_saa_milp,
    build_transport_cvar_lp,
    compute_alpha_bound,
)
from .solve import (
    BnbConfig,
    Solution,
    branch_and_bound,
    get_adapter,
    solve_continuous,
)
from .experiments import (
    KnapsackInstance,
    TransportInstance,
    estimate_reliability,
    exact_binary_optimum,
    generate_knapsack,
    generate_transport,
    knapsack_problem,
    run_knapsack_study,
    run_transport_study,
)

__version__ = "0.1.0"
