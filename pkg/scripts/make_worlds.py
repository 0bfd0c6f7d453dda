#!/usr/bin/env python3
"""Regenerate the bundled world files (committed under worlds/).

Three desk-scale analogs of narrow-platform, cluttered-basement, and
sparse-office environments, plus the 20 m room used by the exploration
mission. Deterministic; run from the repository root.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from teamsim.world import WALL, WorldMap, dump_world

RES = 0.2
OUT = Path(__file__).resolve().parent.parent / "worlds"


def empty(width_m: float, height_m: float) -> np.ndarray:
    w, h = int(round(width_m / RES)), int(round(height_m / RES))
    cells = np.zeros((h, w), dtype=np.uint8)
    cells[0, :] = WALL
    cells[-1, :] = WALL
    cells[:, 0] = WALL
    cells[:, -1] = WALL
    return cells


def fill_rect(cells: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    ix0, ix1 = int(round(x0 / RES)), int(round(x1 / RES))
    iy0, iy1 = int(round(y0 / RES)), int(round(y1 / RES))
    cells[iy0:iy1, ix0:ix1] = WALL


def room20() -> np.ndarray:
    cells = empty(20, 20)
    fill_rect(cells, 2.0, 6.0, 12.0, 6.4)   # horizontal partial wall
    fill_rect(cells, 12.0, 6.0, 12.4, 16.0)  # vertical partial wall
    fill_rect(cells, 5.0, 13.0, 6.0, 14.0)   # free-standing block
    return cells


def narrow_platform() -> np.ndarray:
    cells = empty(30, 8)
    for x in (5.0, 10.0, 15.0, 20.0, 25.0):  # pillar row
        fill_rect(cells, x, 4.4, x + 0.4, 4.8)
    fill_rect(cells, 8.0, 6.4, 22.0, 8.0)    # recessed alcove wall
    return cells


def cluttered_basement() -> np.ndarray:
    cells = empty(16, 12)
    rng = np.random.default_rng(7)
    placed = 0
    while placed < 9:
        w = rng.uniform(0.6, 1.4)
        h = rng.uniform(0.6, 1.4)
        x = rng.uniform(1.5, 16 - 1.5 - w)
        y = rng.uniform(1.5, 12 - 1.5 - h)
        # keep the two agent start corners clear
        if x < 4.5 and y < 4.5:
            continue
        fill_rect(cells, x, y, x + w, y + h)
        placed += 1
    return cells


def sparse_office() -> np.ndarray:
    cells = empty(20, 14)
    fill_rect(cells, 6.0, 0.2, 6.4, 3.0)     # wall with doorway at y in [3.0, 4.6]
    fill_rect(cells, 6.0, 4.6, 6.4, 13.8)
    fill_rect(cells, 6.4, 10.0, 13.0, 10.4)  # upper wall, doorway at x in [13.0, 14.6]
    fill_rect(cells, 14.6, 10.0, 19.8, 10.4)
    return cells


def main() -> None:
    OUT.mkdir(exist_ok=True)
    for name, cells in (
        ("room20", room20()),
        ("narrow_platform", narrow_platform()),
        ("cluttered_basement", cluttered_basement()),
        ("sparse_office", sparse_office()),
    ):
        world = WorldMap(resolution=RES, cells=cells)
        path = OUT / f"{name}.world"
        path.write_text(dump_world(world))
        free = int((cells == 0).sum())
        print(f"{path}  {world.width}x{world.height} cells, {free} open")


if __name__ == "__main__":
    main()
