"""Conformal metrics with prescribed Gaussian and geodesic curvature via a mean-field energy."""
from .estimator import MeanFieldSolver
from .exceptions import (
    ConfigError,
    ConsistencyError,
    ConstructionError,
    CurvMFError,
    DomainError,
    InfeasibleSpecError,
    MeshError,
    NonGeometricBranchError,
)
from .meanfield import (
    ProblemSpec,
    check_domain,
    compute_alpha_beta,
    compute_C,
    dF_chi,
    energy,
    F_chi,
    find_domain_point,
    lambda_energy,
    lambda_gradient,
    normalize_solution,
    sign_conditions,
)
from .mesh import IntrinsicMesh, SymmetryOrbits, build_mesh, gen_flat_cylinder, gen_hemisphere, gen_pair_of_pants
from .minimize import SolveResult, SolverConfig, minimize, project_symmetric, resolve_sign
from .operators import OperatorSet, assemble_operators

__version__ = "0.1.0"
