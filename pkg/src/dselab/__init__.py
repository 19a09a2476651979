"""Distributed DC state estimation: centralized WLS, four distributed solvers,
a freezing convergence governor, area partitioning and bad-data sweeps."""

from .errors import (
    CaseError,
    DivergenceError,
    DSEError,
    InfeasiblePartitionError,
    NonConvergentSplitError,
    ObservabilityError,
    OscillationError,
)
from .governor import GovernorConfig, Mode, SolverTrace, overall_time, solution_metrics
from .methods import METHODS, MethodParams, governor_for, run_method
from .network import (
    Network,
    Partition,
    build_measurement_model,
    load_case,
    load_partition,
    make_area_views,
    simulate_measurements,
)
from .wls import estimate, objective

__version__ = "0.1.0"

__all__ = [
    "CaseError",
    "DivergenceError",
    "DSEError",
    "GovernorConfig",
    "InfeasiblePartitionError",
    "METHODS",
    "MethodParams",
    "Mode",
    "Network",
    "NonConvergentSplitError",
    "ObservabilityError",
    "OscillationError",
    "Partition",
    "SolverTrace",
    "build_measurement_model",
    "estimate",
    "governor_for",
    "load_case",
    "load_partition",
    "make_area_views",
    "objective",
    "overall_time",
    "run_method",
    "simulate_measurements",
    "solution_metrics",
]
