"""Interior-point quadratic programming with direct, CG and simulated thermodynamic linear solvers."""

from .errors import (
    DegenerateLabels,
    DimensionMismatch,
    FloatingNetwork,
    InfeasibleTarget,
    NonPositiveEigenvalue,
    NotConverged,
    ParseError,
    SingularMatrix,
    StaleCache,
    ThermoQpError,
    Unstable,
)
from .ipm import IpmConfig, SolveReport, Status, solve
from .qp_core import (
    IterateState,
    QpProblem,
    load_problem,
    objective,
    save_problem,
    solve_equality_constrained,
    solve_unconstrained,
    validate,
)
from .spu_sim import SpuConfig, TimingEstimate, estimate_timing, tls_solve

__version__ = "0.1.0"
