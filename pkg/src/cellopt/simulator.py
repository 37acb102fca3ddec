"""Deterministic two-agent cycle-time simulator for pick-and-pack layouts.

The robot picks objects and places them into boxes in a fixed task order;
the human first sets every box on the table, then carries each full box back
to the staging point. Timing couples the agents two ways: the robot cannot
place into a box before the human has set it down, and the human cannot
remove a box before the robot's final place into it.

Motion timing is planar: robot moves follow a trapezoidal velocity profile,
human walks are straight lines at constant speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import ConfigurationError, EvaluationResult, LayoutVector


@dataclass(frozen=True)
class RobotParams:
    v_max: float                 # m/s
    a_max: float                 # m/s^2
    t_pick: float                # s
    t_place: float               # s
    reach_radius: float          # m, disk around the base
    base_entity: str
    home_entity: str             # end-effector start position

    def __post_init__(self):
        if self.v_max <= 0 or self.a_max <= 0 or self.reach_radius <= 0:
            raise ConfigurationError("robot speed, acceleration, and reach must be positive")
        if self.t_pick < 0 or self.t_place < 0:
            raise ConfigurationError("robot dwell times must be non-negative")
        if self.t_pick + self.t_place <= 0:
            raise ConfigurationError("robot must spend time on pick or place")


@dataclass(frozen=True)
class HumanParams:
    v_walk: float                # m/s
    t_place_box: float           # s
    t_remove_box: float          # s
    staging_point: tuple[float, float]

    def __post_init__(self):
        if self.v_walk <= 0:
            raise ConfigurationError("walking speed must be positive")
        if self.t_place_box < 0 or self.t_remove_box < 0:
            raise ConfigurationError("human dwell times must be non-negative")


@dataclass(frozen=True)
class CellConfig:
    """Static process description: who does what, in which order, how fast."""

    robot: RobotParams
    human: HumanParams
    boxes: tuple[tuple[str, int], ...]       # (box_id, capacity) in table order
    tasks: tuple[tuple[str, str], ...]       # (object_id, box_id) in robot order
    penalty_objective: float | None = None   # default derived, see penalty()

    def __post_init__(self):
        if not self.tasks:
            raise ConfigurationError("at least one pick-place task is required")
        caps = dict(self.boxes)
        if len(caps) != len(self.boxes):
            raise ConfigurationError("duplicate box id in cell config")
        if any(c < 1 for c in caps.values()):
            raise ConfigurationError("box capacities must be >= 1")
        if sum(caps.values()) < len(self.tasks):
            raise ConfigurationError("total box capacity is below the task count")
        per_box: dict[str, int] = {}
        for _, box_id in self.tasks:
            if box_id not in caps:
                raise ConfigurationError(f"task references undeclared box {box_id!r}")
            per_box[box_id] = per_box.get(box_id, 0) + 1
        for box_id, count in per_box.items():
            if count > caps[box_id]:
                raise ConfigurationError(
                    f"box {box_id!r} receives {count} objects but holds {caps[box_id]}"
                )

    def penalty(self) -> float:
        """Objective reported for unreachable layouts: ten times a loose
        per-run bound built from dwell times and full-reach travel."""
        if self.penalty_objective is not None:
            return self.penalty_objective
        r = self.robot
        per_task = r.t_pick + r.t_place + 2.0 * travel_time(r.reach_radius, r.v_max, r.a_max)
        return 10.0 * len(self.tasks) * per_task


@dataclass(frozen=True)
class TimelineEvent:
    agent: str       # "robot" | "human"
    action: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class Timeline:
    events: tuple[TimelineEvent, ...]
    makespan_s: float


def travel_time(d: float, v: float, a: float) -> float:
    """Point-to-point time under a trapezoidal profile capped at speed v.

    Short moves never reach v and follow the triangular branch; the two
    branches agree at d = v^2/a.
    """
    if d >= v * v / a:
        return d / v + v / a
    return 2.0 * math.sqrt(d / a)


def _dist(p: tuple[float, float], q: tuple[float, float]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def schedule(x: LayoutVector, cell: CellConfig) -> Timeline:
    """Build the two-agent event timeline for one layout."""
    pos = x.position  # raises ConfigurationError on unknown entities

    events: list[TimelineEvent] = []
    caps = dict(cell.boxes)

    # Human phase 1: set each box on the table, walking between stops.
    h_t = 0.0
    h_pos = cell.human.staging_point
    place_end: dict[str, float] = {}
    for box_id, _ in cell.boxes:
        box_pos = pos(box_id)
        walk = _dist(h_pos, box_pos) / cell.human.v_walk
        if walk > 0:
            events.append(TimelineEvent("human", f"walk {box_id}", h_t, h_t + walk))
            h_t += walk
        events.append(TimelineEvent("human", f"place_box {box_id}", h_t, h_t + cell.human.t_place_box))
        h_t += cell.human.t_place_box
        place_end[box_id] = h_t
        h_pos = box_pos

    # Robot: fixed task order, waiting at the box until the human has set it.
    r_t = 0.0
    r_pos = pos(cell.robot.home_entity)
    fills: dict[str, int] = {box_id: 0 for box_id, _ in cell.boxes}
    fill_complete: list[tuple[float, int, str]] = []
    box_index = {box_id: i for i, (box_id, _) in enumerate(cell.boxes)}
    for obj_id, box_id in cell.tasks:
        obj_pos = pos(obj_id)
        box_pos = pos(box_id)
        t_go = travel_time(_dist(r_pos, obj_pos), cell.robot.v_max, cell.robot.a_max)
        if t_go > 0:
            events.append(TimelineEvent("robot", f"travel {obj_id}", r_t, r_t + t_go))
            r_t += t_go
        events.append(TimelineEvent("robot", f"pick {obj_id}", r_t, r_t + cell.robot.t_pick))
        r_t += cell.robot.t_pick
        t_carry = travel_time(_dist(obj_pos, box_pos), cell.robot.v_max, cell.robot.a_max)
        if t_carry > 0:
            events.append(TimelineEvent("robot", f"travel {box_id}", r_t, r_t + t_carry))
            r_t += t_carry
        start_place = max(r_t, place_end[box_id])
        if start_place > r_t:
            events.append(TimelineEvent("robot", f"wait {box_id}", r_t, start_place))
        events.append(TimelineEvent("robot", f"place {box_id}", start_place, start_place + cell.robot.t_place))
        r_t = start_place + cell.robot.t_place
        r_pos = box_pos
        fills[box_id] += 1
        if fills[box_id] == caps[box_id]:
            fill_complete.append((r_t, box_index[box_id], box_id))

    # Human phase 2: carry each full box out, in fill-completion order.
    for done_at, _, box_id in sorted(fill_complete):
        box_pos = pos(box_id)
        start = max(h_t, done_at)
        h_t = start
        walk_in = _dist(h_pos, box_pos) / cell.human.v_walk
        if walk_in > 0:
            events.append(TimelineEvent("human", f"walk {box_id}", h_t, h_t + walk_in))
            h_t += walk_in
        events.append(TimelineEvent("human", f"remove_box {box_id}", h_t, h_t + cell.human.t_remove_box))
        h_t += cell.human.t_remove_box
        walk_out = _dist(box_pos, cell.human.staging_point) / cell.human.v_walk
        if walk_out > 0:
            events.append(TimelineEvent("human", "walk staging", h_t, h_t + walk_out))
            h_t += walk_out
        h_pos = cell.human.staging_point

    ordered = tuple(sorted(events, key=lambda e: e.start_s))
    makespan = max((e.end_s for e in ordered), default=0.0)
    return Timeline(ordered, makespan)


def evaluate(x: LayoutVector, cell: CellConfig, with_timeline: bool = False) -> EvaluationResult:
    """Cycle time for a layout; unreachable layouts get the penalty constant."""
    base = x.position(cell.robot.base_entity)
    reach = cell.robot.reach_radius
    task_entities = {obj for obj, _ in cell.tasks} | {box_id for box_id, _ in cell.boxes}
    for eid in task_entities:
        if _dist(base, x.position(eid)) > reach:
            return EvaluationResult(cell.penalty(), feasible=False, penalized=True)
    tl = schedule(x, cell)
    return EvaluationResult(tl.makespan_s, feasible=True, timeline=tl if with_timeline else None)
