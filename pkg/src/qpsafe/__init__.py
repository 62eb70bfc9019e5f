"""Safety-critical QP controllers: CLF/CBF quadratic programs, robust
min-max variants, an embedded dense active-set solver, and a closed-loop
benchmark harness with true-vs-nominal model mismatch."""

__version__ = "0.1.0"

from .linalg import eig_sym_extremes, is_positive_definite, solve_lyapunov
from .models import (
    ControlAffineModel,
    HybridSpec,
    PlantPair,
    bouncing_mass,
    bouncing_mass_hybrid,
    inverted_pendulum,
    lift_initial_state,
    spring_cart,
)
from .iolin import (
    RelativeDegreeError,
    fd_lie_oracle,
    io_control,
    lie_bundle,
    transverse,
    uncertainty_between,
)
from .certify import (
    ReciprocalBarrier,
    RelaxMonitor,
    SafetyViolated,
    barrier_terms,
    build_res_clf,
    clf_terms,
    monitor_update,
    rd2_lift,
    theorem1_bound_check,
)
from .robust import (
    UncertaintyBounds,
    corner_uncertainty_margin,
    sample_uncertainty_margin,
)
from .controllers import (
    Controller,
    ControllerError,
    ControllerSpec,
    PlantConstraint,
    control,
    reduced_problem,
    saturation,
)
from .qp import (
    QpProblem,
    available_backends,
    default_backend,
    dump_problem,
    kkt_residuals,
    load_problem,
    solve_qp,
    solve_qp_by_enumeration,
)
from .sim import SimulationError, Trajectory, simulate, step_rk4
from .bench import (
    ConfigError,
    ScenarioConfig,
    bench_qp,
    run_scenario,
    run_suite,
    validate,
)

__all__ = [
    "ControlAffineModel",
    "PlantPair",
    "HybridSpec",
    "spring_cart",
    "inverted_pendulum",
    "bouncing_mass",
    "bouncing_mass_hybrid",
    "lift_initial_state",
    "RelativeDegreeError",
    "lie_bundle",
    "fd_lie_oracle",
    "transverse",
    "io_control",
    "uncertainty_between",
    "build_res_clf",
    "clf_terms",
    "ReciprocalBarrier",
    "rd2_lift",
    "barrier_terms",
    "SafetyViolated",
    "RelaxMonitor",
    "monitor_update",
    "theorem1_bound_check",
    "UncertaintyBounds",
    "corner_uncertainty_margin",
    "sample_uncertainty_margin",
    "ControllerSpec",
    "Controller",
    "ControllerError",
    "PlantConstraint",
    "saturation",
    "control",
    "reduced_problem",
    "QpProblem",
    "solve_qp",
    "solve_qp_by_enumeration",
    "kkt_residuals",
    "dump_problem",
    "load_problem",
    "available_backends",
    "default_backend",
    "SimulationError",
    "Trajectory",
    "simulate",
    "step_rk4",
    "ScenarioConfig",
    "ConfigError",
    "run_scenario",
    "run_suite",
    "validate",
    "bench_qp",
    "solve_lyapunov",
    "eig_sym_extremes",
    "is_positive_definite",
]
