import numpy as np
import pytest

from cellopt.data import scenario_path
from cellopt.domain import DistanceConstraint, LayoutVector, SearchSpace
from cellopt.scenario import load_scenario
from cellopt.simulator import CellConfig, HumanParams, RobotParams


@pytest.fixture(scope="session")
def mini_scenario():
    return load_scenario(scenario_path("mini"))


@pytest.fixture(scope="session")
def reference_scenario():
    return load_scenario(scenario_path("reference"))


@pytest.fixture
def square_domain():
    """Two free entities on the unit square plus helpers."""
    entity_map = (("a", 0, 1), ("b", 2, 3))
    space = SearchSpace(((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)))
    return space, entity_map


def make_layout(coords, entity_map):
    return LayoutVector(tuple(float(v) for v in coords), tuple(entity_map))


def random_layouts(space, entity_map, n, seed):
    rng = np.random.default_rng(seed)
    draws = rng.uniform(space.lows(), space.highs(), size=(n, space.dim))
    return [make_layout(row, entity_map) for row in draws]


def two_object_cell(**overrides) -> CellConfig:
    """Hand-traceable cell: clean dyadic speeds and distances."""
    params = dict(
        robot=RobotParams(
            v_max=1.0, a_max=4.0, t_pick=0.5, t_place=0.5,
            reach_radius=10.0, base_entity="base", home_entity="base",
        ),
        human=HumanParams(v_walk=0.5, t_place_box=1.0, t_remove_box=2.0,
                          staging_point=(0.0, -2.0)),
        boxes=(("box_1", 2),),
        tasks=(("obj_1", "box_1"), ("obj_2", "box_1")),
    )
    params.update(overrides)
    return CellConfig(**params)


TWO_OBJECT_ENTITY_MAP = (("base", 0, 1), ("obj_1", 2, 3), ("obj_2", 4, 5), ("box_1", 6, 7))
TWO_OBJECT_COORDS = (0.0, 0.0, 0.75, 0.0, -0.75, 0.0, 0.0, -1.0)
