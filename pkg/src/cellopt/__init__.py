"""Constrained Bayesian layout optimization for collaborative robot cells."""

from .acquisition import KappaSchedule, ProposalConfig, acquisition_value, kappa, propose_next
from .domain import (
    ConfigurationError,
    ConstraintMode,
    DistanceConstraint,
    EvaluationResult,
    InfeasibleRegionError,
    LayoutVector,
    SearchSpace,
    clamp_to_space,
    constraint_values,
    is_feasible,
)
from .driver import (
    IterationRecord,
    NoSolutionError,
    OptimizationReport,
    OptimizerConfig,
    best_so_far,
    init_design,
    run,
)
from .gp import GpHyperparams, GpModel, fit, log_marginal_likelihood, optimize_hyperparams, posterior
from .protocol import RemoteEvaluator, TransportError, remote_evaluate, serve
from .scenario import Scenario, ScenarioError, load_scenario, save_scenario
from .simulator import CellConfig, HumanParams, RobotParams, Timeline, evaluate, schedule, travel_time

__version__ = "0.1.0"
