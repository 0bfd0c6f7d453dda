"""Frontier detection, keep-in filtering, utility scoring, and greedy selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import CircleRegion, KeepInRegion, Pose2D, PolygonRegion  # noqa: F401  (re-export)
from .mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from .planning import GoalUnreachable, InflatedCostmap, StartBlocked, plan, traverse_segment_cells

MIN_CLUSTER_SIZE = 3
DEFAULT_GAIN_RANGE = 5.0


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 1.0  # utility per m^2 of expected newly observed area
    beta: float = 1.0  # utility penalty per m of path length


@dataclass(frozen=True)
class Frontier:
    """8-connected cluster of FREE cells bordering UNKNOWN space."""

    cells: tuple[tuple[int, int], ...]  # (ix, iy)
    centroid: tuple[float, float]  # mean of cell centers, snapped to a FREE cell center
    first_cell_index: int  # row-major index of the earliest cell, for deterministic ordering
    info_gain: float = 0.0
    effort: float = 0.0
    utility: float = 0.0
    feasible: bool = False
    goal_cell: tuple[int, int] | None = None


def _snap_to_free(grid: OccupancyGrid, classes: np.ndarray, x: float, y: float) -> tuple[int, int]:
    """Nearest FREE cell (by center distance, ties row-major) to a point."""
    cx, cy = grid.cell_of(x, y)
    best = None
    best_d = math.inf
    for radius in range(0, max(grid.width, grid.height)):
        found_this_ring = False
        for iy in range(cy - radius, cy + radius + 1):
            for ix in range(cx - radius, cx + radius + 1):
                if max(abs(ix - cx), abs(iy - cy)) != radius:
                    continue
                if not grid.in_bounds(ix, iy) or classes[iy, ix] != FREE:
                    continue
                px, py = grid.cell_center(ix, iy)
                d = math.hypot(px - x, py - y)
                if d < best_d - 1e-12:
                    best, best_d = (ix, iy), d
                    found_this_ring = True
        # a closer cell can still live one ring further out than the first match
        if best is not None and not found_this_ring and radius > (best_d / grid.resolution) + 1:
            break
    if best is None:
        raise ValueError("grid has no FREE cell to snap to")
    return best


def detect_frontiers(grid: OccupancyGrid, min_cluster_size: int = MIN_CLUSTER_SIZE) -> list[Frontier]:
    """Maximal 8-connected clusters of frontier cells (FREE with an UNKNOWN
    8-neighbor), keeping clusters of at least min_cluster_size cells, ordered
    by row-major first cell."""
    classes = grid.classes()
    unknown_near = ndimage.binary_dilation(classes == UNKNOWN, structure=np.ones((3, 3), dtype=bool))
    frontier_mask = (classes == FREE) & unknown_near
    labels, count = ndimage.label(frontier_mask, structure=np.ones((3, 3), dtype=np.int32))
    frontiers = []
    for lbl in range(1, count + 1):
        ys, xs = np.nonzero(labels == lbl)
        if len(xs) < min_cluster_size:
            continue
        flat = ys * grid.width + xs
        order = np.argsort(flat)
        cells = tuple((int(xs[i]), int(ys[i])) for i in order)
        centers = np.array([grid.cell_center(ix, iy) for ix, iy in cells])
        mx, my = centers.mean(axis=0)
        sx, sy = _snap_to_free(grid, classes, float(mx), float(my))
        frontiers.append(
            Frontier(
                cells=cells,
                centroid=grid.cell_center(sx, sy),
                first_cell_index=int(flat[order[0]]),
            )
        )
    frontiers.sort(key=lambda f: f.first_cell_index)
    return frontiers


def filter_keep_in(frontiers: list[Frontier], region: KeepInRegion, grid: OccupancyGrid) -> list[Frontier]:
    """Keep only frontiers every one of whose cell centers lies inside the region."""
    kept = []
    for f in frontiers:
        if all(region.contains(*grid.cell_center(ix, iy)) for ix, iy in f.cells):
            kept.append(f)
    return kept


def visible_unknown_count(grid: OccupancyGrid, classes: np.ndarray, origin: tuple[float, float],
                          gain_range: float) -> int:
    """UNKNOWN cells within gain_range of origin reachable by a straight grid ray
    crossing only non-OCCUPIED cells (unknown treated as transparent)."""
    ox, oy = origin
    r_cells = int(math.ceil(gain_range / grid.resolution)) + 1
    cx, cy = grid.cell_of(ox, oy)
    count = 0
    for iy in range(max(0, cy - r_cells), min(grid.height, cy + r_cells + 1)):
        for ix in range(max(0, cx - r_cells), min(grid.width, cx + r_cells + 1)):
            if classes[iy, ix] != UNKNOWN:
                continue
            px, py = grid.cell_center(ix, iy)
            if math.hypot(px - ox, py - oy) > gain_range:
                continue
            visible = True
            for jx, jy in traverse_segment_cells(ox, oy, px, py, grid.resolution,
                                                 grid.origin.x, grid.origin.y):
                if grid.in_bounds(jx, jy) and classes[jy, jx] == OCCUPIED:
                    visible = False
                    break
            if visible:
                count += 1
    return count


def score(
    frontier: Frontier,
    grid: OccupancyGrid,
    costmap: InflatedCostmap,
    robot_pose: Pose2D,
    weights: ScoreWeights = ScoreWeights(),
    gain_range: float = DEFAULT_GAIN_RANGE,
    *,
    distance_field: np.ndarray | None = None,
    goal_snap_range: float | None = None,
) -> Frontier:
    """Attach info gain, effort, and utility to a frontier.

    Effort is the minimal path length from the robot to the frontier goal. The
    goal is the centroid cell, or (because inflation blocks every cell adjacent
    to unknown space) the nearest unblocked cell within goal_snap_range of it;
    with no plannable goal the frontier is marked infeasible.
    """
    classes = grid.classes()
    if goal_snap_range is None:
        goal_snap_range = costmap.inflation_radius + 3.0 * grid.resolution
    gx, gy = frontier.centroid
    goal_cell = costmap.cell_of(gx, gy)
    if costmap.is_blocked(*goal_cell):
        snapped = costmap.nearest_unblocked(gx, gy, goal_snap_range)
        if snapped is None:
            return replace(frontier, feasible=False, utility=-math.inf)
        goal_cell = snapped
    if distance_field is not None:
        effort = float(distance_field[goal_cell[1], goal_cell[0]])
        if not math.isfinite(effort):
            return replace(frontier, feasible=False, utility=-math.inf)
    else:
        try:
            goal_x, goal_y = costmap.cell_center(*goal_cell)
            effort = plan(costmap, robot_pose, Pose2D(goal_x, goal_y, 0.0)).length
        except (GoalUnreachable, StartBlocked):
            return replace(frontier, feasible=False, utility=-math.inf)
    cell_area = grid.resolution**2
    info_gain = cell_area * visible_unknown_count(grid, classes, frontier.centroid, gain_range)
    utility = weights.alpha * info_gain - weights.beta * effort
    return replace(
        frontier,
        info_gain=info_gain,
        effort=effort,
        utility=utility,
        feasible=True,
        goal_cell=goal_cell,
    )


def select_frontier(frontiers: list[Frontier]) -> Frontier | None:
    """Greedy argmax of utility over feasible frontiers; ties broken by smaller
    effort then row-major first cell. None means exploration is complete."""
    candidates = [f for f in frontiers if f.feasible]
    if not candidates:
        return None
    return min(candidates, key=lambda f: (-f.utility, f.effort, f.first_cell_index))
