from pathlib import Path

import numpy as np
import pytest

from teamsim.geometry import Pose2D
from teamsim.world import OPEN, WALL, WorldMap

REPO = Path(__file__).resolve().parent.parent
WORLDS = REPO / "worlds"
SCENARIOS = REPO / "scenarios"


def empty_room(size_m: float = 10.0, resolution: float = 0.2) -> WorldMap:
    n = int(round(size_m / resolution))
    cells = np.zeros((n, n), dtype=np.uint8)
    cells[0, :] = WALL
    cells[-1, :] = WALL
    cells[:, 0] = WALL
    cells[:, -1] = WALL
    return WorldMap(resolution=resolution, cells=cells)


def random_maze(rng: np.random.Generator, n: int = 20, wall_p: float = 0.25,
                resolution: float = 0.25) -> WorldMap:
    cells = (rng.random((n, n)) < wall_p).astype(np.uint8)
    cells[0, :] = WALL
    cells[-1, :] = WALL
    cells[:, 0] = WALL
    cells[:, -1] = WALL
    return WorldMap(resolution=resolution, cells=cells)


@pytest.fixture
def room10() -> WorldMap:
    return empty_room(10.0, 0.2)


@pytest.fixture
def center_pose() -> Pose2D:
    return Pose2D(5.0, 5.0, 0.0)
