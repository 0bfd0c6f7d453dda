"""Obstacle-inflated grid planning (A*) and closed-loop path following."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Pose2D, normalize_angle
from .mapping import FREE, OCCUPIED, UNKNOWN, MapDiff, OccupancyGrid

SQRT2 = math.sqrt(2.0)

ARRIVED = "ARRIVED"
FOLLOWING = "FOLLOWING"


class GoalUnreachable(ValueError):
    pass


class StartBlocked(ValueError):
    pass


def _inflation_footprint(inflation_radius: float, resolution: float) -> np.ndarray:
    """Offsets whose cell rectangle comes within inflation_radius of a cell center."""
    k = int(math.ceil(inflation_radius / resolution)) + 1
    d = np.arange(-k, k + 1)
    di, dj = np.meshgrid(d, d, indexing="ij")
    gx = np.maximum(np.abs(di) * resolution - resolution / 2.0, 0.0)
    gy = np.maximum(np.abs(dj) * resolution - resolution / 2.0, 0.0)
    return np.hypot(gx, gy) <= inflation_radius


class InflatedCostmap:
    """Grid where a cell is blocked when an OCCUPIED or UNKNOWN cell lies within
    inflation_radius of its center (distance measured to the obstacle cell's
    rectangle, so clearance holds regardless of resolution)."""

    def __init__(self, grid: OccupancyGrid, inflation_radius: float = 0.35):
        self.resolution = grid.resolution
        self.origin = grid.origin
        self.width = grid.width
        self.height = grid.height
        self.inflation_radius = inflation_radius
        classes = grid.classes()
        obstacles = classes != FREE  # OCCUPIED or UNKNOWN
        self.blocked = ndimage.binary_dilation(
            obstacles, structure=_inflation_footprint(inflation_radius, grid.resolution)
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((x - self.origin.x) / self.resolution)),
            int(math.floor((y - self.origin.y) / self.resolution)),
        )

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_blocked(self, ix: int, iy: int) -> bool:
        if not self.in_bounds(ix, iy):
            return True
        return bool(self.blocked[iy, ix])

    def nearest_unblocked(self, x: float, y: float, max_dist: float) -> tuple[int, int] | None:
        """Unblocked cell whose center is nearest to (x, y) within max_dist.
        Ties resolved by row-major cell order."""
        r = int(math.ceil(max_dist / self.resolution)) + 1
        cx, cy = self.cell_of(x, y)
        best = None
        best_d = math.inf
        for iy in range(cy - r, cy + r + 1):
            for ix in range(cx - r, cx + r + 1):
                if self.is_blocked(ix, iy):
                    continue
                px, py = self.cell_center(ix, iy)
                d = math.hypot(px - x, py - y)
                if d <= max_dist and d < best_d - 1e-12:
                    best, best_d = (ix, iy), d
        return best

    def segment_is_clear(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        """True when the segment crosses only unblocked cells."""
        for ix, iy in traverse_segment_cells(x0, y0, x1, y1, self.resolution, self.origin.x, self.origin.y):
            if self.is_blocked(ix, iy):
                return False
        return True


def traverse_segment_cells(x0, y0, x1, y1, resolution, ox, oy):
    """Yield every grid cell a segment passes through, endpoints included."""
    ix = int(math.floor((x0 - ox) / resolution))
    iy = int(math.floor((y0 - oy) / resolution))
    tx = int(math.floor((x1 - ox) / resolution))
    ty = int(math.floor((y1 - oy) / resolution))
    yield ix, iy
    dx, dy = x1 - x0, y1 - y0
    length = math.hypot(dx, dy)
    if length == 0:
        return
    dx, dy = dx / length, dy / length
    if dx > 0:
        step_x, t_max_x, t_delta_x = 1, (ox + (ix + 1) * resolution - x0) / dx, resolution / dx
    elif dx < 0:
        step_x, t_max_x, t_delta_x = -1, (ox + ix * resolution - x0) / dx, resolution / -dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf
    if dy > 0:
        step_y, t_max_y, t_delta_y = 1, (oy + (iy + 1) * resolution - y0) / dy, resolution / dy
    elif dy < 0:
        step_y, t_max_y, t_delta_y = -1, (oy + iy * resolution - y0) / dy, resolution / -dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf
    guard = 0
    while (ix, iy) != (tx, ty):
        if t_max_x <= t_max_y:
            t, ix = t_max_x, ix + step_x
            t_max_x += t_delta_x
        else:
            t, iy = t_max_y, iy + step_y
            t_max_y += t_delta_y
        if t > length + 1e-12:
            return
        yield ix, iy
        guard += 1
        if guard > 4 * (abs(tx) + abs(ty) + abs(ix) + abs(iy) + 4):
            return


@dataclass(frozen=True)
class Path:
    """Grid path over cell centers; the final waypoint carries the goal heading."""

    waypoints: tuple[Pose2D, ...]
    length: float
    cells: tuple[tuple[int, int], ...]

    @property
    def goal(self) -> Pose2D:
        return self.waypoints[-1]


_NEIGHBORS = (
    (1, 0, False), (-1, 0, False), (0, 1, False), (0, -1, False),
    (1, 1, True), (1, -1, True), (-1, 1, True), (-1, -1, True),
)


def plan(costmap: InflatedCostmap, start: Pose2D, goal: Pose2D) -> Path:
    """A* over the 8-connected unblocked grid.

    Straight moves cost one resolution, diagonals sqrt(2) times that; diagonal
    moves require both adjacent cardinal cells unblocked (no corner squeezing).
    Ties pop by smaller heuristic then row-major order. A blocked start snaps to
    the nearest unblocked cell within 0.5 m.
    """
    w, h, res = costmap.width, costmap.height, costmap.resolution
    start_cell = costmap.cell_of(start.x, start.y)
    if costmap.is_blocked(*start_cell):
        snapped = costmap.nearest_unblocked(start.x, start.y, 0.5)
        if snapped is None:
            raise StartBlocked(f"no unblocked cell within 0.5 m of ({start.x}, {start.y})")
        start_cell = snapped
    goal_cell = costmap.cell_of(goal.x, goal.y)
    if costmap.is_blocked(*goal_cell):
        raise GoalUnreachable(f"goal cell {goal_cell} is blocked")

    gx, gy = costmap.cell_center(*goal_cell)

    def hcost(ix: int, iy: int) -> float:
        px, py = costmap.cell_center(ix, iy)
        return math.hypot(px - gx, py - gy)

    # g-costs kept as (straight, diagonal) step counts so the returned cost is
    # a pure function of the step mix, independent of relaxation order
    counts: dict[tuple[int, int], tuple[int, int]] = {start_cell: (0, 0)}
    parents: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    h0 = hcost(*start_cell)
    open_heap: list[tuple[float, float, int, tuple[int, int]]] = [
        (h0, h0, start_cell[1] * w + start_cell[0], start_cell)
    ]
    found = False
    while open_heap:
        _, _, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        closed.add(cell)
        if cell == goal_cell:
            found = True
            break
        ns, nd = counts[cell]
        cx0, cy0 = cell
        for dx, dy, diag in _NEIGHBORS:
            nx, ny = cx0 + dx, cy0 + dy
            if costmap.is_blocked(nx, ny) or (nx, ny) in closed:
                continue
            if diag and (costmap.is_blocked(cx0 + dx, cy0) or costmap.is_blocked(cx0, cy0 + dy)):
                continue
            cand = (ns, nd + 1) if diag else (ns + 1, nd)
            cand_g = (cand[0] + cand[1] * SQRT2) * res
            prev = counts.get((nx, ny))
            if prev is not None and (prev[0] + prev[1] * SQRT2) * res <= cand_g:
                continue
            counts[(nx, ny)] = cand
            parents[(nx, ny)] = cell
            hn = hcost(nx, ny)
            heapq.heappush(open_heap, (cand_g + hn, hn, ny * w + nx, (nx, ny)))
    if not found:
        raise GoalUnreachable(f"no path from {start_cell} to {goal_cell}")

    cells = [goal_cell]
    while cells[-1] != start_cell:
        cells.append(parents[cells[-1]])
    cells.reverse()
    ns, nd = counts[goal_cell]
    length = (ns + nd * SQRT2) * res
    waypoints = []
    for i, (ix, iy) in enumerate(cells):
        px, py = costmap.cell_center(ix, iy)
        if i + 1 < len(cells):
            qx, qy = costmap.cell_center(*cells[i + 1])
            theta = math.atan2(qy - py, qx - px)
        else:
            theta = goal.theta
        waypoints.append(Pose2D(px, py, theta))
    # close the sub-cell gap: end exactly at the requested pose (same cell)
    gcx, gcy = costmap.cell_center(*goal_cell)
    tail = math.hypot(goal.x - gcx, goal.y - gcy)
    if tail > 1e-9:
        waypoints.append(Pose2D(goal.x, goal.y, goal.theta))
        length += tail
        cells.append(goal_cell)
    return Path(waypoints=tuple(waypoints), length=length, cells=tuple(cells))


def distance_field(costmap: InflatedCostmap, start: Pose2D) -> np.ndarray:
    """Minimal path length in meters from start to every cell (inf when
    unreachable), over the same moves and costs as plan(). One pass prices all
    frontier goals at once."""
    w, h, res = costmap.width, costmap.height, costmap.resolution
    start_cell = costmap.cell_of(start.x, start.y)
    if costmap.is_blocked(*start_cell):
        snapped = costmap.nearest_unblocked(start.x, start.y, 0.5)
        if snapped is None:
            raise StartBlocked(f"no unblocked cell within 0.5 m of ({start.x}, {start.y})")
        start_cell = snapped
    counts: dict[tuple[int, int], tuple[int, int]] = {start_cell: (0, 0)}
    out = np.full((h, w), np.inf)
    heap: list[tuple[float, int, tuple[int, int]]] = [(0.0, start_cell[1] * w + start_cell[0], start_cell)]
    while heap:
        g, _, cell = heapq.heappop(heap)
        if math.isfinite(out[cell[1], cell[0]]):
            continue
        out[cell[1], cell[0]] = g
        ns, nd = counts[cell]
        cx0, cy0 = cell
        for dx, dy, diag in _NEIGHBORS:
            nx, ny = cx0 + dx, cy0 + dy
            if costmap.is_blocked(nx, ny) or math.isfinite(out[ny, nx]):
                continue
            if diag and (costmap.is_blocked(cx0 + dx, cy0) or costmap.is_blocked(cx0, cy0 + dy)):
                continue
            cand = (ns, nd + 1) if diag else (ns + 1, nd)
            cand_g = (cand[0] + cand[1] * SQRT2) * res
            prev = counts.get((nx, ny))
            if prev is not None and (prev[0] + prev[1] * SQRT2) * res <= cand_g:
                continue
            counts[(nx, ny)] = cand
            heapq.heappush(heap, (cand_g, ny * w + nx, (nx, ny)))
    return out


LOOKAHEAD = 0.5
ARRIVE_DIST = 0.15
ARRIVE_HEADING = 0.2


def follow_step(path: Path, pose: Pose2D, max_linear: float, max_angular: float,
                costmap: InflatedCostmap | None = None) -> tuple[float, float, str]:
    """Pure pursuit: steer toward the furthest waypoint within the lookahead
    whose chord is clear of blocked cells. Returns (linear, angular, status)."""
    final = path.waypoints[-1]
    dist_final = math.hypot(final.x - pose.x, final.y - pose.y)
    if dist_final <= ARRIVE_DIST:
        herr = normalize_angle(final.theta - pose.theta)
        if abs(herr) <= ARRIVE_HEADING:
            return (0.0, 0.0, ARRIVED)
        wz = max(-max_angular, min(max_angular, 2.0 * herr))
        return (0.0, wz, FOLLOWING)

    target = None
    for wp in reversed(path.waypoints):
        d = math.hypot(wp.x - pose.x, wp.y - pose.y)
        if d <= LOOKAHEAD:
            if costmap is None or costmap.segment_is_clear(pose.x, pose.y, wp.x, wp.y):
                target = wp
                break
    if target is None:
        target = min(path.waypoints, key=lambda wp: math.hypot(wp.x - pose.x, wp.y - pose.y))
    bearing = normalize_angle(math.atan2(target.y - pose.y, target.x - pose.x) - pose.theta)
    wz = max(-max_angular, min(max_angular, 2.5 * bearing))
    v = max_linear * max(0.0, math.cos(bearing)) if abs(bearing) < math.pi / 2 else 0.0
    v = min(v, max(0.25, 2.0 * dist_final))
    return (v, wz, FOLLOWING)


def invalidate_on_diff(path: Path, diff: MapDiff, costmap: InflatedCostmap,
                       from_index: int = 0) -> bool:
    """True when a cell newly OCCUPIED or UNKNOWN in the diff blocks any
    remaining path cell under the costmap's inflation radius."""
    bad = [(idx % costmap.width, idx // costmap.width)
           for idx, cls in diff.changed if cls in (OCCUPIED, UNKNOWN)]
    if not bad or not path.waypoints:
        return False
    res = costmap.resolution
    half = res / 2.0
    bx = np.array([costmap.cell_center(ix, iy)[0] for ix, iy in bad])
    by = np.array([costmap.cell_center(ix, iy)[1] for ix, iy in bad])
    remaining = path.waypoints[from_index:]
    wx = np.array([wp.x for wp in remaining])
    wy = np.array([wp.y for wp in remaining])
    ddx = np.maximum(np.abs(wx[:, None] - bx[None, :]) - half, 0.0)
    ddy = np.maximum(np.abs(wy[:, None] - by[None, :]) - half, 0.0)
    return bool((np.hypot(ddx, ddy) <= costmap.inflation_radius).any())
