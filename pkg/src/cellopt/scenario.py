"""Scenario files: the single JSON document that declares the scene entities,
their bounds or fixed positions, the distance constraints, the cell process
parameters, and the optimizer settings.

Entity declaration order fixes the coordinate layout of the design vector.
Non-optimized entities are carried as pinned coordinates (degenerate bounds),
so constraints and the simulator read every position from the same vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .acquisition import KappaSchedule, ProposalConfig
from .domain import ConfigurationError, ConstraintMode, DistanceConstraint, SearchSpace
from .driver import OptimizerConfig
from .simulator import CellConfig, HumanParams, RobotParams

ENTITY_KINDS = ("robot_base", "object", "box", "fixed_point")


class ScenarioError(ValueError):
    """Invalid scenario document; ``fieldpath`` says where."""

    def __init__(self, fieldpath: str, message: str):
        super().__init__(f"{fieldpath}: {message}")
        self.fieldpath = fieldpath


@dataclass(frozen=True)
class EntitySpec:
    entity_id: str
    kind: str
    optimized: bool
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None
    position: tuple[float, float] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    entities: tuple[EntitySpec, ...]
    constraints: tuple[DistanceConstraint, ...]
    cell: CellConfig
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def entity_map(self) -> tuple[tuple[str, int, int], ...]:
        return tuple((e.entity_id, 2 * i, 2 * i + 1) for i, e in enumerate(self.entities))

    def search_space(self) -> SearchSpace:
        bounds: list[tuple[float, float]] = []
        for e in self.entities:
            if e.optimized:
                bounds.extend([tuple(e.bounds[0]), tuple(e.bounds[1])])
            else:
                bounds.extend([(e.position[0], e.position[0]), (e.position[1], e.position[1])])
        return SearchSpace(tuple(bounds))

    @property
    def dim(self) -> int:
        return 2 * len(self.entities)

    def free_dims(self) -> list[int]:
        out = []
        for i, e in enumerate(self.entities):
            if e.optimized:
                out.extend([2 * i, 2 * i + 1])
        return out


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return d[key]


def _pair(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(path, "expected a pair of numbers")
    return (float(value[0]), float(value[1]))


def _parse_entity(d: dict, path: str) -> EntitySpec:
    eid = str(_require(d, "id", path))
    kind = str(_require(d, "kind", path))
    if kind not in ENTITY_KINDS:
        raise ScenarioError(f"{path}.kind", f"unknown kind {kind!r}, expected one of {ENTITY_KINDS}")
    optimized = bool(d.get("optimized", False))
    bounds = None
    position = None
    if optimized:
        braw = d.get("bounds")
        if braw is None:
            raise ScenarioError(f"{path}.bounds", f"optimized entity {eid!r} needs a bounds rectangle")
        bx = _pair(_require(braw, "x", f"{path}.bounds"), f"{path}.bounds.x")
        by = _pair(_require(braw, "y", f"{path}.bounds"), f"{path}.bounds.y")
        if bx[0] > bx[1] or by[0] > by[1]:
            raise ScenarioError(f"{path}.bounds", "interval lo must not exceed hi")
        bounds = (bx, by)
    else:
        praw = d.get("position")
        if praw is None:
            raise ScenarioError(f"{path}.position", f"fixed entity {eid!r} needs a position")
        position = _pair(praw, f"{path}.position")
    return EntitySpec(eid, kind, optimized, bounds, position)


def _parse_constraint(d: dict, known: set[str], path: str) -> DistanceConstraint:
    i = str(_require(d, "i", path))
    j = str(_require(d, "j", path))
    for eid in (i, j):
        if eid not in known:
            raise ScenarioError(path, f"constraint references undeclared entity {eid!r}")
    mode_raw = d.get("mode", "inside")
    try:
        mode = ConstraintMode(mode_raw)
    except ValueError:
        raise ScenarioError(f"{path}.mode", f"unknown mode {mode_raw!r}") from None
    try:
        return DistanceConstraint(i, j, float(_require(d, "d_min", path)), float(_require(d, "d_max", path)), mode)
    except ConfigurationError as exc:
        raise ScenarioError(path, str(exc)) from None


def _parse_cell(d: dict, entities: tuple[EntitySpec, ...], path: str) -> CellConfig:
    known = {e.entity_id for e in entities}
    robots = [e for e in entities if e.kind == "robot_base"]
    if len(robots) != 1:
        raise ScenarioError("entities", f"expected exactly one robot_base, found {len(robots)}")
    base = robots[0].entity_id

    rraw = _require(d, "robot", path)
    hraw = _require(d, "human", path)
    home = str(rraw.get("home", base))
    if home not in known:
        raise ScenarioError(f"{path}.robot.home", f"undeclared entity {home!r}")
    try:
        robot = RobotParams(
            v_max=float(_require(rraw, "v_max", f"{path}.robot")),
            a_max=float(_require(rraw, "a_max", f"{path}.robot")),
            t_pick=float(_require(rraw, "t_pick", f"{path}.robot")),
            t_place=float(_require(rraw, "t_place", f"{path}.robot")),
            reach_radius=float(_require(rraw, "reach_radius", f"{path}.robot")),
            base_entity=base,
            home_entity=home,
        )
        human = HumanParams(
            v_walk=float(_require(hraw, "v_walk", f"{path}.human")),
            t_place_box=float(_require(hraw, "t_place_box", f"{path}.human")),
            t_remove_box=float(_require(hraw, "t_remove_box", f"{path}.human")),
            staging_point=_pair(_require(hraw, "staging", f"{path}.human"), f"{path}.human.staging"),
        )
        boxes = []
        for i, braw in enumerate(_require(d, "boxes", path)):
            bid = str(_require(braw, "id", f"{path}.boxes[{i}]"))
            if bid not in known:
                raise ScenarioError(f"{path}.boxes[{i}].id", f"undeclared entity {bid!r}")
            boxes.append((bid, int(_require(braw, "capacity", f"{path}.boxes[{i}]"))))
        tasks = []
        for i, traw in enumerate(_require(d, "tasks", path)):
            obj = str(_require(traw, "object", f"{path}.tasks[{i}]"))
            box = str(_require(traw, "box", f"{path}.tasks[{i}]"))
            for eid in (obj, box):
                if eid not in known:
                    raise ScenarioError(f"{path}.tasks[{i}]", f"undeclared entity {eid!r}")
            tasks.append((obj, box))
        penalty = d.get("penalty_objective")
        return CellConfig(
            robot=robot,
            human=human,
            boxes=tuple(boxes),
            tasks=tuple(tasks),
            penalty_objective=float(penalty) if penalty is not None else None,
        )
    except ConfigurationError as exc:
        raise ScenarioError(path, str(exc)) from None


def _parse_optimizer(d: dict, path: str) -> OptimizerConfig:
    try:
        kwargs: dict = {}
        for key in ("n_init", "n_sim", "refit_every", "stall_limit", "hyper_restarts", "seed"):
            if key in d:
                kwargs[key] = int(d[key])
        for key in ("improvement_tol", "penalty_objective"):
            if key in d:
                kwargs[key] = float(d[key])
        if "tune_hyperparams" in d:
            kwargs["tune_hyperparams"] = bool(d["tune_hyperparams"])
        if "kappa" in d:
            kraw = d["kappa"]
            b = kraw.get("b")
            if b is not None:
                kwargs["schedule"] = KappaSchedule(
                    kappa0=float(kraw.get("kappa0", 2.0)), a=float(kraw.get("a", 0.1)), b=float(b)
                )
            elif "kappa0" in kraw or "a" in kraw:
                n_sim = kwargs.get("n_sim", OptimizerConfig.n_sim)
                kwargs["schedule"] = KappaSchedule(
                    kappa0=float(kraw.get("kappa0", 2.0)),
                    a=float(kraw.get("a", 0.1)),
                    b=0.75 * n_sim,
                )
        if "proposal" in d:
            praw = d["proposal"]
            kwargs["proposal"] = ProposalConfig(
                n_starts=int(praw.get("n_starts", ProposalConfig.n_starts)),
                refine_steps=int(praw.get("refine_steps", ProposalConfig.refine_steps)),
                refine_shrink=float(praw.get("refine_shrink", ProposalConfig.refine_shrink)),
                use_upper_bound=bool(praw.get("use_upper_bound", False)),
            )
        return OptimizerConfig(**kwargs)
    except ConfigurationError as exc:
        raise ScenarioError(path, str(exc)) from None


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario document must be an object")
    entities_raw = _require(doc, "entities", "$")
    if not isinstance(entities_raw, list) or not entities_raw:
        raise ScenarioError("entities", "expected a non-empty list")
    entities = tuple(_parse_entity(e, f"entities[{i}]") for i, e in enumerate(entities_raw))
    ids = [e.entity_id for e in entities]
    if len(set(ids)) != len(ids):
        raise ScenarioError("entities", "duplicate entity ids")
    known = set(ids)
    constraints = tuple(
        _parse_constraint(c, known, f"constraints[{i}]")
        for i, c in enumerate(doc.get("constraints", []))
    )
    cell = _parse_cell(_require(doc, "cell", "$"), entities, "cell")
    optimizer = _parse_optimizer(doc.get("optimizer", {}), "optimizer")
    return Scenario(
        name=str(doc.get("name", "scenario")),
        entities=entities,
        constraints=constraints,
        cell=cell,
        optimizer=optimizer,
    )


def scenario_to_dict(s: Scenario) -> dict:
    entities = []
    for e in s.entities:
        ed: dict = {"id": e.entity_id, "kind": e.kind, "optimized": e.optimized}
        if e.optimized:
            ed["bounds"] = {"x": list(e.bounds[0]), "y": list(e.bounds[1])}
        else:
            ed["position"] = list(e.position)
        entities.append(ed)
    constraints = [
        {"i": c.entity_i, "j": c.entity_j, "d_min": c.d_min, "d_max": c.d_max, "mode": c.mode.value}
        for c in s.constraints
    ]
    cell: dict = {
        "robot": {
            "v_max": s.cell.robot.v_max,
            "a_max": s.cell.robot.a_max,
            "t_pick": s.cell.robot.t_pick,
            "t_place": s.cell.robot.t_place,
            "reach_radius": s.cell.robot.reach_radius,
            "home": s.cell.robot.home_entity,
        },
        "human": {
            "v_walk": s.cell.human.v_walk,
            "t_place_box": s.cell.human.t_place_box,
            "t_remove_box": s.cell.human.t_remove_box,
            "staging": list(s.cell.human.staging_point),
        },
        "boxes": [{"id": bid, "capacity": cap} for bid, cap in s.cell.boxes],
        "tasks": [{"object": obj, "box": box} for obj, box in s.cell.tasks],
    }
    if s.cell.penalty_objective is not None:
        cell["penalty_objective"] = s.cell.penalty_objective
    opt = s.optimizer
    schedule = opt.effective_schedule()
    optimizer = {
        "n_init": opt.n_init,
        "n_sim": opt.n_sim,
        "seed": opt.seed,
        "kappa": {"kappa0": schedule.kappa0, "a": schedule.a, "b": schedule.b},
        "proposal": {
            "n_starts": opt.proposal.n_starts,
            "refine_steps": opt.proposal.refine_steps,
            "refine_shrink": opt.proposal.refine_shrink,
            "use_upper_bound": opt.proposal.use_upper_bound,
        },
        "refit_every": opt.refit_every,
        "stall_limit": opt.stall_limit,
        "improvement_tol": opt.improvement_tol,
        "tune_hyperparams": opt.tune_hyperparams,
        "hyper_restarts": opt.hyper_restarts,
        "penalty_objective": opt.penalty_objective,
    }
    return {
        "name": s.name,
        "entities": entities,
        "constraints": constraints,
        "cell": cell,
        "optimizer": optimizer,
    }


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError("$", f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, sort_keys=True, indent=2)
        fh.write("\n")
