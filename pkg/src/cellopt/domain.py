"""Core layout types: design vectors, search boxes, pairwise distance bands.

Everything here is immutable after construction and safe to share across
threads; the operations are pure functions over those types.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a layout, constraint, or space is internally inconsistent."""


class InfeasibleRegionError(RuntimeError):
    """Raised when rejection sampling cannot find feasible points in budget.

    ``constraint`` names the entity pair that came least close to being
    satisfied over all rejected draws.
    """

    def __init__(self, message: str, constraint: "DistanceConstraint | None" = None):
        super().__init__(message)
        self.constraint = constraint


class ConstraintMode(str, enum.Enum):
    """Whether the allowed distance range is the band itself or its complement."""

    INSIDE_BAND = "inside"
    OUTSIDE_BAND = "outside"


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box of per-coordinate closed intervals, in meters.

    A degenerate interval (lo == hi) pins that coordinate, which is how
    non-optimized entities are carried along in the design vector.
    """

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for i, (lo, hi) in enumerate(self.bounds):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ConfigurationError(f"bound {i} is not finite: [{lo}, {hi}]")
            if lo > hi:
                raise ConfigurationError(f"bound {i} has lo > hi: [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def lows(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    def highs(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def widths(self) -> np.ndarray:
        return self.highs() - self.lows()

    def contains(self, coords, tol: float = 0.0) -> bool:
        """True when every coordinate lies inside its closed interval."""
        c = np.asarray(coords, dtype=float)
        if c.shape != (self.dim,):
            raise ConfigurationError(
                f"coordinate count {c.shape} does not match space dimension {self.dim}"
            )
        return bool(np.all(c >= self.lows() - tol) and np.all(c <= self.highs() + tol))

    def normalize(self, coords: np.ndarray) -> np.ndarray:
        """Map coordinates into the unit hypercube; pinned dims map to 0."""
        lo = self.lows()
        w = self.widths()
        c = np.atleast_2d(np.asarray(coords, dtype=float))
        out = np.where(w > 0, (c - lo) / np.where(w > 0, w, 1.0), 0.0)
        return out if np.asarray(coords).ndim > 1 else out[0]


@dataclass(frozen=True)
class LayoutVector:
    """Planar design vector: one (x, y) pair per scene entity.

    ``entity_map`` ties coordinate indices to entity ids in a fixed order,
    so the flat ``coords`` sequence is self-describing.
    """

    coords: tuple[float, ...]
    entity_map: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        d = len(self.coords)
        if d % 2 != 0 or d != 2 * len(self.entity_map):
            raise ConfigurationError(
                f"layout has {d} coordinates for {len(self.entity_map)} entities"
            )
        seen = set()
        for eid, ix, iy in self.entity_map:
            if eid in seen:
                raise ConfigurationError(f"duplicate entity id {eid!r}")
            seen.add(eid)
            if not (0 <= ix < d and 0 <= iy < d):
                raise ConfigurationError(f"entity {eid!r} indexes outside the vector")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)

    def position(self, entity_id: str) -> tuple[float, float]:
        for eid, ix, iy in self.entity_map:
            if eid == entity_id:
                return (self.coords[ix], self.coords[iy])
        raise ConfigurationError(f"unknown entity id {entity_id!r}")

    def entity_ids(self) -> list[str]:
        return [eid for eid, _, _ in self.entity_map]


@dataclass(frozen=True)
class DistanceConstraint:
    """Tolerable Euclidean distance band between two scene entities.

    In standard form the constraint value is <= 0 exactly when satisfied.
    INSIDE_BAND keeps the pair within [d_min, d_max]; OUTSIDE_BAND excludes
    that band instead.
    """

    entity_i: str
    entity_j: str
    d_min: float
    d_max: float
    mode: ConstraintMode = ConstraintMode.INSIDE_BAND

    def __post_init__(self):
        if self.entity_i == self.entity_j:
            raise ConfigurationError(f"constraint pairs {self.entity_i!r} with itself")
        if not (0 <= self.d_min < self.d_max):
            raise ConfigurationError(
                f"constraint {self.entity_i!r}-{self.entity_j!r} needs "
                f"0 <= d_min < d_max, got [{self.d_min}, {self.d_max}]"
            )

    def value(self, dist: float) -> float:
        center = 0.5 * (self.d_max + self.d_min)
        half_width = 0.5 * (self.d_max - self.d_min)
        g = abs(dist - center) - half_width
        return g if self.mode is ConstraintMode.INSIDE_BAND else -g


@dataclass(frozen=True)
class EvaluationResult:
    """One black-box observation: cycle time plus simulator-level flags."""

    objective: float
    feasible: bool
    penalized: bool = False
    timeline: "object | None" = field(default=None, compare=False)

    def __post_init__(self):
        if not self.objective > 0:
            raise ConfigurationError(f"objective must be positive, got {self.objective}")
        if self.penalized and self.feasible:
            raise ConfigurationError("a penalized result cannot be feasible")


def _index_pairs(entity_map, constraints):
    """Resolve each constraint's entities to coordinate indices."""
    idx = {eid: (ix, iy) for eid, ix, iy in entity_map}
    pairs = []
    for c in constraints:
        for eid in (c.entity_i, c.entity_j):
            if eid not in idx:
                raise ConfigurationError(f"constraint references unknown entity {eid!r}")
        pairs.append((idx[c.entity_i], idx[c.entity_j]))
    return pairs


def constraint_values(x: LayoutVector, constraints) -> np.ndarray:
    """Standard-form constraint values, one per constraint (<= 0 iff satisfied)."""
    pairs = _index_pairs(x.entity_map, constraints)
    c = x.as_array()
    out = np.empty(len(constraints))
    for k, (con, ((ix, iy), (jx, jy))) in enumerate(zip(constraints, pairs)):
        dist = float(np.hypot(c[ix] - c[jx], c[iy] - c[jy]))
        out[k] = con.value(dist)
    return out


def constraint_matrix(coords: np.ndarray, entity_map, constraints) -> np.ndarray:
    """Vectorized constraint values for a batch of raw coordinate rows."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    pairs = _index_pairs(entity_map, constraints)
    out = np.empty((coords.shape[0], len(constraints)))
    for k, (con, ((ix, iy), (jx, jy))) in enumerate(zip(constraints, pairs)):
        dist = np.hypot(coords[:, ix] - coords[:, jx], coords[:, iy] - coords[:, jy])
        center = 0.5 * (con.d_max + con.d_min)
        half = 0.5 * (con.d_max - con.d_min)
        g = np.abs(dist - center) - half
        out[:, k] = g if con.mode is ConstraintMode.INSIDE_BAND else -g
    return out


def is_feasible(x: LayoutVector, constraints, space: SearchSpace | None = None) -> bool:
    """True iff all constraint values are <= 0 and, when given, x is in bounds."""
    if space is not None and not space.contains(x.coords):
        return False
    if constraints and np.max(constraint_values(x, constraints)) > 0:
        return False
    return True


def clamp_to_space(coords, space: SearchSpace, entity_map) -> LayoutVector:
    """Project raw coordinates onto the space and wrap them as a layout."""
    c = np.asarray(coords, dtype=float)
    if c.shape != (space.dim,):
        raise ConfigurationError(
            f"got {c.shape[0] if c.ndim == 1 else c.shape} coordinates "
            f"for a {space.dim}-dimensional space"
        )
    clipped = np.clip(c, space.lows(), space.highs())
    return LayoutVector(tuple(float(v) for v in clipped), tuple(entity_map))


def sample_feasible(
    space: SearchSpace,
    constraints,
    entity_map,
    n: int,
    rng: np.random.Generator,
    max_draws: int,
    batch: int = 2048,
) -> np.ndarray:
    """Uniform rejection sampling of constraint-feasible in-bounds points.

    Returns an (n, D) array in draw order. Raises InfeasibleRegionError when
    the draw budget runs out, naming the constraint that stayed furthest from
    satisfaction.
    """
    lo, hi = space.lows(), space.highs()
    rows: list[np.ndarray] = []
    drawn = 0
    tightest = np.full(len(constraints), np.inf) if constraints else None
    while sum(r.shape[0] for r in rows) < n:
        take = min(batch, max_draws - drawn)
        if take <= 0:
            worst = None
            detail = ""
            if tightest is not None and len(constraints):
                worst = constraints[int(np.argmax(tightest))]
                detail = (
                    f"; tightest constraint {worst.entity_i!r}-{worst.entity_j!r} "
                    f"(best margin {np.min(tightest):+.3g})"
                )
            raise InfeasibleRegionError(
                f"could not find {n} feasible points in {max_draws} draws{detail}",
                constraint=worst,
            )
        draws = rng.uniform(lo, hi, size=(take, space.dim))
        drawn += take
        if constraints:
            g = constraint_matrix(draws, entity_map, constraints)
            tightest = np.minimum(tightest, g.min(axis=0))
            draws = draws[np.all(g <= 0, axis=1)]
        rows.append(draws)
    return np.vstack(rows)[:n]
