"""Outer optimization loop: random initialization, surrogate refits,
scheduled-exploration proposals, incumbent tracking, and early stopping."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .acquisition import KappaSchedule, ProposalConfig, kappa, propose_next
from .domain import (
    ConfigurationError,
    EvaluationResult,
    LayoutVector,
    SearchSpace,
    sample_feasible,
)
from .protocol import TransportError

_MAX_TRANSPORT_RETRIES = 3


class NoSolutionError(RuntimeError):
    """Every recorded observation was penalized; there is no incumbent."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Loop parameters; the kappa schedule midpoint defaults to 75% of the
    evaluation budget when not set explicitly."""

    n_init: int = 20
    n_sim: int = 200
    schedule: KappaSchedule | None = None
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    refit_every: int = 5
    stall_limit: int = 40
    improvement_tol: float = 0.05
    seed: int = 0
    tune_hyperparams: bool = True
    hyper_restarts: int = 8
    penalty_objective: float = 1e6

    def __post_init__(self):
        if not (1 <= self.n_init < self.n_sim):
            raise ConfigurationError("need 1 <= n_init < n_sim")
        if self.refit_every < 1:
            raise ConfigurationError("refit_every must be >= 1")
        if self.stall_limit < 1:
            raise ConfigurationError("stall_limit must be >= 1")
        if self.improvement_tol < 0:
            raise ConfigurationError("improvement_tol must be >= 0")
        if self.penalty_objective <= 0:
            raise ConfigurationError("penalty_objective must be positive")

    def effective_schedule(self) -> KappaSchedule:
        return self.schedule if self.schedule is not None else KappaSchedule(
            kappa0=2.0, a=0.1, b=0.75 * self.n_sim
        )


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    x: tuple[float, ...]
    objective_s: float
    feasible: bool
    kappa: float | None          # None for initialization samples
    incumbent_s: float | None    # None until a feasible observation exists
    wall_ms: float


@dataclass(frozen=True)
class OptimizationReport:
    records: tuple[IterationRecord, ...]
    config: OptimizerConfig
    entity_map: tuple[tuple[str, int, int], ...]
    complete: bool = True


def init_design(
    space: SearchSpace, constraints, n: int, seed: int, entity_map
) -> list[LayoutVector]:
    """n feasible layouts drawn uniformly with constraint rejection."""
    if n < 1:
        raise ConfigurationError("initial design size must be >= 1")
    rng = np.random.default_rng(seed)
    coords = sample_feasible(space, constraints, entity_map, n, rng, 1000 * n)
    return [LayoutVector(tuple(float(v) for v in row), tuple(entity_map)) for row in coords]


def best_so_far(report: OptimizationReport) -> tuple[LayoutVector, float]:
    """Minimum over feasible records; earliest iteration wins ties."""
    best: IterationRecord | None = None
    for rec in report.records:
        if rec.feasible and (best is None or rec.objective_s < best.objective_s):
            best = rec
    if best is None:
        raise NoSolutionError("no feasible, non-penalized observation was recorded")
    return LayoutVector(best.x, report.entity_map), best.objective_s


def run(
    opt: OptimizerConfig, space: SearchSpace, constraints, evaluator, entity_map
) -> OptimizationReport:
    """Execute the full loop and return the per-evaluation history.

    Evaluator exceptions become penalized observations so the loop stays
    total; three consecutive transport failures abort with a partial report
    flagged incomplete.
    """
    entity_map = tuple(entity_map)
    schedule = opt.effective_schedule()
    root = np.random.SeedSequence(opt.seed)
    init_ss, prop_ss, hyper_ss = root.spawn(3)
    prop_rng = np.random.default_rng(prop_ss)
    hyper_rng = np.random.default_rng(hyper_ss)

    records: list[IterationRecord] = []
    observations: list[tuple[LayoutVector, float]] = []
    incumbent: float | None = None
    transport_failures = 0
    complete = True

    def observe(k: int, x: LayoutVector, kap: float | None) -> bool:
        """Evaluate x, append the record; False aborts the run."""
        nonlocal incumbent, transport_failures, complete
        while True:
            t0 = time.perf_counter()
            try:
                result = evaluator(x)
                transport_failures = 0
                break
            except TransportError:
                transport_failures += 1
                if transport_failures >= _MAX_TRANSPORT_RETRIES:
                    complete = False
                    return False
            except Exception:
                result = EvaluationResult(
                    opt.penalty_objective, feasible=False, penalized=True
                )
                transport_failures = 0
                break
        wall_ms = (time.perf_counter() - t0) * 1000.0
        if result.feasible and (incumbent is None or result.objective < incumbent):
            incumbent = result.objective
        records.append(
            IterationRecord(k, x.coords, result.objective, result.feasible, kap, incumbent, wall_ms)
        )
        observations.append((x, result.objective))
        return True

    init_seed = int(init_ss.generate_state(1)[0])
    for k, x in enumerate(init_design(space, constraints, opt.n_init, init_seed, entity_map)):
        if not observe(k, x, None):
            return OptimizationReport(tuple(records), opt, entity_map, complete=False)

    hyperparams = gp.default_hyperparams([o for _, o in observations], space.dim)
    stall = 0
    for k in range(opt.n_init, opt.n_sim):
        if (k - opt.n_init) % opt.refit_every == 0 and opt.tune_hyperparams and len(observations) >= 2:
            hyperparams = gp.optimize_hyperparams(
                observations,
                space,
                restarts=opt.hyper_restarts,
                seed=int(hyper_rng.integers(2**63)),
            )
        elif not opt.tune_hyperparams:
            hyperparams = gp.default_hyperparams([o for _, o in observations], space.dim)
        model = gp.fit(observations, space, hyperparams)
        kap = kappa(schedule, k)
        prop_cfg = dataclasses.replace(opt.proposal, seed=int(prop_rng.integers(2**63)))
        x_next = propose_next(model, space, constraints, kap, prop_cfg)

        previous = incumbent
        if not observe(k, x_next, kap):
            return OptimizationReport(tuple(records), opt, entity_map, complete=False)
        improved = (
            incumbent is not None
            and (previous is None or previous - incumbent > opt.improvement_tol)
        )
        stall = 0 if improved else stall + 1
        if stall >= opt.stall_limit:
            break

    return OptimizationReport(tuple(records), opt, entity_map, complete=complete)
