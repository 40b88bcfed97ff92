import math

import numpy as np
import pytest

from boundmap.core import OccupancyState
from boundmap.dense import DenseGrid
from boundmap.scene import Box, Pose, ScanPattern, Scene, closed_room


def random_grid(rng: np.random.Generator, size: int = 8, p_free: float = 0.55, p_occ: float = 0.1) -> DenseGrid:
    """A cube of random Free/Occupied/Unknown voxels with origin at a random offset."""
    grid = DenseGrid(0.5)
    base = rng.integers(-20, 20, 3)
    draws = rng.random((size, size, size))
    for (a, b, c), x in np.ndenumerate(draws):
        v = (int(base[0] + a), int(base[1] + b), int(base[2] + c))
        if x < p_free:
            grid.set_state(v, OccupancyState.FREE)
        elif x < p_free + p_occ:
            grid.set_state(v, OccupancyState.OCCUPIED)
    return grid


def grid_from_dict(states: dict, d: float = 0.5) -> DenseGrid:
    grid = DenseGrid(d)
    for v, s in states.items():
        grid.set_state(v, s)
    return grid


def small_room(seed: int, boxes: int = 2) -> tuple[Scene, list[Pose]]:
    """An 8 x 7 x 4 m room with a few boxes and a 4-pose walk, for fast oracle tests."""
    rng = np.random.default_rng(seed)
    lo = np.array([0.013, 0.029, 0.017]) + rng.uniform(0, 0.2, 3)
    scene = closed_room((8.0, 7.0, 4.0), offset=lo)
    poses = []
    for n in range(4):
        p = lo + np.array([2.5 + 0.7 * n, 3.0 + 0.3 * rng.normal(), 1.6]) + rng.uniform(-0.1, 0.1, 3)
        poses.append(Pose(float(n), *map(float, p), float(rng.uniform(-math.pi, math.pi))))
    while len(scene.static_boxes) < 6 + boxes:
        blo = lo + rng.uniform([0.3, 0.3, 0.0], [6.5, 5.5, 2.0])
        box = Box(tuple(blo), tuple(blo + rng.uniform(0.4, 1.2, 3)))
        if not all(box.lo[a] < lo[a] + s for a, s in enumerate((8.0, 7.0, 4.0))):
            continue
        box = Box(box.lo, tuple(min(h, lo[a] + s) for a, (h, s) in enumerate(zip(box.hi, (8.0, 7.0, 4.0)))))
        if any(box.inflated(0.4).contains(p.position) for p in poses):
            continue
        scene.static_boxes.append(box)
    return scene, poses


SMALL_PATTERN = ScanPattern(64, 24, math.radians(100.0), 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
