"""Confidence-bound acquisition with a sigmoid exploration schedule.

The next candidate is the feasible minimizer of mean - kappa * std found by
rejection-sampled multi-start plus coordinate-wise pattern search. Setting
``use_upper_bound`` flips the sign on the exploration term (mean + kappa *
std); lower acquisition is better in both orientations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    ConfigurationError,
    LayoutVector,
    SearchSpace,
    clamp_to_space,
    constraint_matrix,
    sample_feasible,
)
from .gp import GpModel, posterior_batch

# First pattern-search probe, as a fraction of each dimension's width.
_INITIAL_STEP_FRACTION = 0.25


@dataclass(frozen=True)
class KappaSchedule:
    """Sigmoid decay of the exploration weight over the iteration index."""

    kappa0: float = 2.0
    a: float = 0.1
    b: float = 150.0

    def __post_init__(self):
        if self.kappa0 <= 0 or self.a <= 0 or self.b <= 0:
            raise ConfigurationError("kappa schedule parameters must be positive")


@dataclass(frozen=True)
class ProposalConfig:
    """Inner-optimizer knobs for proposing the next candidate."""

    n_starts: int = 64
    refine_steps: int = 30
    refine_shrink: float = 0.5
    seed: int = 0
    use_upper_bound: bool = False

    def __post_init__(self):
        if self.n_starts < 1:
            raise ConfigurationError("n_starts must be >= 1")
        if self.refine_steps < 0:
            raise ConfigurationError("refine_steps must be >= 0")
        if not (0.0 < self.refine_shrink < 1.0):
            raise ConfigurationError("refine_shrink must lie in (0, 1)")


def kappa(schedule: KappaSchedule, k: float) -> float:
    """kappa0 / (1 + exp(-a * (b - k))), evaluated in the stable branch."""
    t = schedule.a * (schedule.b - k)
    if t >= 0:
        return schedule.kappa0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return schedule.kappa0 * e / (1.0 + e)


def acquisition_value(
    model: GpModel, x: LayoutVector, kappa: float, use_upper_bound: bool = False
) -> float:
    """mean - kappa * std by default; mean + kappa * std when flipped."""
    vals = _acquisition_batch(model, x.as_array()[None, :], kappa, use_upper_bound)
    return float(vals[0])


def _acquisition_batch(model, coords, kappa, use_upper_bound):
    mean, std = posterior_batch(model, coords)
    return mean + kappa * std if use_upper_bound else mean - kappa * std


def propose_next(
    model: GpModel,
    space: SearchSpace,
    constraints,
    kappa: float,
    config: ProposalConfig,
) -> LayoutVector:
    """Feasible candidate whose acquisition is no worse than any seed.

    Deterministic given the config seed: seeds come from uniform rejection
    sampling, the best seed is refined by coordinate-wise pattern search with
    the step shrinking after sweeps that accept no move, and ties always
    resolve to the earliest candidate.
    """
    entity_map = model.entity_map
    rng = np.random.default_rng(config.seed)
    seeds = sample_feasible(
        space, constraints, entity_map, config.n_starts, rng, config.n_starts * 1000
    )
    acq = _acquisition_batch(model, seeds, kappa, config.use_upper_bound)
    best_i = int(np.argmin(acq))
    x = seeds[best_i].copy()
    fx = float(acq[best_i])

    lo, hi = space.lows(), space.highs()
    widths = hi - lo
    free = np.flatnonzero(widths > 0)
    step = _INITIAL_STEP_FRACTION * widths

    for _ in range(config.refine_steps):
        # Poll x +- step along every free coordinate in one batch; take the
        # best improving feasible probe, shrink the step when none improves.
        cands = np.repeat(x[None, :], 2 * free.size, axis=0)
        for row, d in enumerate(free):
            cands[2 * row, d] = min(x[d] + step[d], hi[d])
            cands[2 * row + 1, d] = max(x[d] - step[d], lo[d])
        keep = np.any(cands != x[None, :], axis=1)
        cands = cands[keep]
        if cands.shape[0] and constraints:
            g = constraint_matrix(cands, entity_map, constraints)
            cands = cands[np.all(g <= 0, axis=1)]
        if cands.shape[0] == 0:
            step = step * config.refine_shrink
            continue
        vals = _acquisition_batch(model, cands, kappa, config.use_upper_bound)
        j = int(np.argmin(vals))
        if float(vals[j]) < fx:
            x = cands[j].copy()
            fx = float(vals[j])
        else:
            step = step * config.refine_shrink

    return clamp_to_space(x, space, entity_map)
