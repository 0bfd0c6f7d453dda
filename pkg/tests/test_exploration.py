import math

import numpy as np
import pytest

from teamsim.exploration import (
    Frontier,
    ScoreWeights,
    detect_frontiers,
    filter_keep_in,
    score,
    select_frontier,
    visible_unknown_count,
)
from teamsim.geometry import CircleRegion, Pose2D, PolygonRegion
from teamsim.mapping import FREE, L_FREE, L_OCC, OCCUPIED, UNKNOWN, OccupancyGrid
from teamsim.planning import InflatedCostmap


def grid_from_classes(classes: np.ndarray, resolution: float = 1.0) -> OccupancyGrid:
    h, w = classes.shape
    grid = OccupancyGrid(resolution=resolution, width=w, height=h)
    grid.log_odds[classes == FREE] = 10 * L_FREE
    grid.log_odds[classes == OCCUPIED] = 10 * L_OCC
    return grid


def frontier_oracle(classes: np.ndarray, min_cluster: int = 3) -> list[frozenset]:
    """Per-cell definition plus flood fill, no vectorization shortcuts."""
    h, w = classes.shape

    def is_frontier(ix, iy):
        if classes[iy, ix] != FREE:
            return False
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = ix + dx, iy + dy
                if 0 <= nx < w and 0 <= ny < h and classes[ny, nx] == UNKNOWN:
                    return True
        return False

    cells = {(ix, iy) for iy in range(h) for ix in range(w) if is_frontier(ix, iy)}
    clusters = []
    remaining = set(cells)
    while remaining:
        seed = min(remaining, key=lambda c: c[1] * w + c[0])
        stack, comp = [seed], set()
        remaining.discard(seed)
        while stack:
            cx, cy = stack.pop()
            comp.add((cx, cy))
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    n = (cx + dx, cy + dy)
                    if n in remaining:
                        remaining.discard(n)
                        stack.append(n)
        if len(comp) >= min_cluster:
            clusters.append(frozenset(comp))
    return clusters


def test_fully_unknown_grid_has_no_frontiers():
    grid = OccupancyGrid(resolution=1.0, width=8, height=8)
    assert detect_frontiers(grid) == []


def test_fully_classified_grid_has_no_frontiers():
    classes = np.full((8, 8), FREE, dtype=np.uint8)
    classes[0, :] = OCCUPIED
    assert detect_frontiers(grid_from_classes(classes)) == []


def test_detect_matches_bruteforce_oracle_on_random_grids():
    rng = np.random.default_rng(1234)
    for _ in range(300):
        n = int(rng.integers(5, 13))
        classes = rng.integers(0, 3, size=(n, n)).astype(np.uint8)
        grid = grid_from_classes(classes)
        got = {frozenset(f.cells) for f in detect_frontiers(grid)}
        expected = set(frontier_oracle(classes))
        assert got == expected


def test_detect_orders_by_row_major_first_cell():
    rng = np.random.default_rng(7)
    classes = rng.integers(0, 3, size=(12, 12)).astype(np.uint8)
    fronts = detect_frontiers(grid_from_classes(classes))
    firsts = [f.first_cell_index for f in fronts]
    assert firsts == sorted(firsts)


def test_frontier_cells_satisfy_predicate():
    rng = np.random.default_rng(77)
    classes = rng.integers(0, 3, size=(15, 15)).astype(np.uint8)
    grid = grid_from_classes(classes)
    for f in detect_frontiers(grid):
        for ix, iy in f.cells:
            assert classes[iy, ix] == FREE
            neighbors = [
                classes[iy + dy, ix + dx]
                for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                if (dx or dy) and 0 <= ix + dx < 15 and 0 <= iy + dy < 15
            ]
            assert UNKNOWN in neighbors
        assert f.centroid is not None
        cx, cy = grid.cell_of(*f.centroid)
        assert classes[cy, cx] == FREE  # snapped onto a free cell


def test_filter_keep_in_whole_grid_region_keeps_all():
    rng = np.random.default_rng(3)
    classes = rng.integers(0, 3, size=(10, 10)).astype(np.uint8)
    grid = grid_from_classes(classes)
    fronts = detect_frontiers(grid)
    region = CircleRegion((5.0, 5.0), 100.0)
    assert filter_keep_in(fronts, region, grid) == fronts


def test_filter_keep_in_excludes_cell_on_epsilon_overrun():
    classes = np.full((9, 9), UNKNOWN, dtype=np.uint8)
    classes[4, 3:6] = FREE  # three-cell frontier at y=4
    grid = grid_from_classes(classes)
    fronts = detect_frontiers(grid)
    assert len(fronts) == 1
    # cell centers at x = 3.5, 4.5, 5.5; a circle reaching exactly the far
    # center keeps the frontier, epsilon less drops the whole frontier
    center = (3.5, 4.5)
    reach = 2.0
    assert filter_keep_in(fronts, CircleRegion(center, reach), grid) == fronts
    assert filter_keep_in(fronts, CircleRegion(center, reach - 1e-9), grid) == []


def test_filter_keep_in_polygon_matches_halfplane_oracle():
    rng = np.random.default_rng(11)
    polygon = PolygonRegion(((1.0, 1.0), (9.0, 2.0), (8.0, 9.0), (2.0, 8.0)))

    def inside(px, py):  # independent half-plane check
        verts = polygon.vertices
        for (ax, ay), (bx, by) in zip(verts, verts[1:] + verts[:1]):
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < 0:
                return False
        return True

    for _ in range(50):
        classes = rng.integers(0, 3, size=(10, 10)).astype(np.uint8)
        grid = grid_from_classes(classes)
        fronts = detect_frontiers(grid)
        kept = filter_keep_in(fronts, polygon, grid)
        for f in fronts:
            expected = all(inside(*grid.cell_center(ix, iy)) for ix, iy in f.cells)
            assert (f in kept) == expected


def visibility_oracle(classes: np.ndarray, origin: tuple[float, float],
                      gain_range: float, resolution: float = 1.0,
                      ds: float = 1e-3) -> int:
    """Dense ray-march to every unknown cell center; occupied cells block."""
    h, w = classes.shape
    count = 0
    for iy in range(h):
        for ix in range(w):
            if classes[iy, ix] != UNKNOWN:
                continue
            tx, ty = (ix + 0.5) * resolution, (iy + 0.5) * resolution
            d = math.hypot(tx - origin[0], ty - origin[1])
            if d > gain_range:
                continue
            blocked = False
            steps = int(d / ds)
            for k in range(1, steps):
                x = origin[0] + (tx - origin[0]) * k / steps
                y = origin[1] + (ty - origin[1]) * k / steps
                cx, cy = int(x // resolution), int(y // resolution)
                if 0 <= cx < w and 0 <= cy < h and classes[cy, cx] == OCCUPIED:
                    blocked = True
                    break
            if not blocked:
                count += 1
    return count


def _ray_hits_lattice_corner(x0, y0, x1, y1) -> bool:
    """Center-to-center rays can pass exactly through cell corners, where any
    traversal order is equally defensible; those targets are excluded from the
    exact comparison."""
    dx, dy = x1 - x0, y1 - y0
    if dx == 0 or dy == 0:
        return False
    lo, hi = sorted((x0, x1))
    i = math.floor(lo) + 1
    while i < hi:
        f = (i - x0) / dx
        y = y0 + f * dy
        if abs(y - round(y)) < 1e-9:
            return True
        i += 1
    return False


def test_visible_unknown_matches_exhaustive_oracle():
    rng = np.random.default_rng(21)
    compared = 0
    for trial in range(12):
        classes = rng.integers(0, 3, size=(8, 8)).astype(np.uint8)
        grid = grid_from_classes(classes)
        free_cells = np.argwhere(classes == FREE)
        if len(free_cells) == 0:
            continue
        iy, ix = free_cells[0]
        origin = grid.cell_center(int(ix), int(iy))

        unambiguous = np.ones_like(classes, dtype=bool)
        for tiy in range(8):
            for tix in range(8):
                tx, ty = grid.cell_center(tix, tiy)
                if _ray_hits_lattice_corner(origin[0], origin[1], tx, ty):
                    unambiguous[tiy, tix] = False
        masked = classes.copy()
        masked[~unambiguous & (classes == UNKNOWN)] = FREE  # drop ambiguous targets
        got = visible_unknown_count(grid, masked, origin, gain_range=5.0)
        expected = visibility_oracle(masked, origin, gain_range=5.0)
        assert got == expected
        compared += 1
    assert compared >= 8


def test_score_zero_gain_utility_is_minus_effort():
    classes = np.full((12, 12), FREE, dtype=np.uint8)
    classes[0, :] = OCCUPIED  # keep some structure; no unknown anywhere
    classes[6, 6] = UNKNOWN  # a single unknown cell creates a frontier ring
    grid = grid_from_classes(classes, resolution=1.0)
    costmap = InflatedCostmap(grid, inflation_radius=0.0)
    fronts = detect_frontiers(grid)
    assert fronts
    f = fronts[0]
    # gain_range 0.4: the unknown cell center sits 1.0 away, nothing visible
    scored = score(f, grid, costmap, Pose2D(2.5, 2.5, 0.0),
                   ScoreWeights(alpha=1.0, beta=1.0), gain_range=0.4)
    assert scored.feasible
    assert scored.info_gain == 0.0
    assert scored.utility == -scored.effort


def test_equal_gain_closer_frontier_scores_higher():
    classes = np.full((20, 20), FREE, dtype=np.uint8)
    classes[:, 0] = OCCUPIED
    classes[5:8, 4] = UNKNOWN
    classes[5:8, 16] = UNKNOWN
    grid = grid_from_classes(classes, resolution=1.0)
    costmap = InflatedCostmap(grid, inflation_radius=0.0)
    fronts = detect_frontiers(grid)
    robot = Pose2D(2.5, 6.5, 0.0)
    scored = [score(f, grid, costmap, robot) for f in fronts]
    near = min(scored, key=lambda f: f.effort)
    far = max(scored, key=lambda f: f.effort)
    assert math.isclose(near.info_gain, far.info_gain)
    assert near.utility > far.utility


def test_select_empty_returns_none():
    assert select_frontier([]) is None


def test_select_matches_exhaustive_argmax_with_tiebreaks():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        frontiers = []
        for i in range(n):
            feasible = bool(rng.random() < 0.8)
            utility = float(rng.choice([1.0, 2.0, 3.0]))
            effort = float(rng.choice([1.0, 2.0]))
            frontiers.append(Frontier(
                cells=((i, 0),), centroid=(i + 0.5, 0.5), first_cell_index=i,
                info_gain=0.0, effort=effort,
                utility=utility if feasible else -math.inf, feasible=feasible,
                goal_cell=(i, 0),
            ))
        got = select_frontier(frontiers)
        feas = [f for f in frontiers if f.feasible]
        if not feas:
            assert got is None
            continue
        best = feas[0]
        for f in feas[1:]:
            if (f.utility, -f.effort, -f.first_cell_index) > (best.utility, -best.effort, -best.first_cell_index):
                best = f
        assert got == best


def test_select_scale_invariance_of_weights():
    classes = np.full((20, 20), FREE, dtype=np.uint8)
    classes[3:9, 4] = UNKNOWN
    classes[10:13, 15] = UNKNOWN
    classes[15:17, 8] = UNKNOWN
    grid = grid_from_classes(classes, resolution=1.0)
    costmap = InflatedCostmap(grid, inflation_radius=0.0)
    fronts = detect_frontiers(grid)
    robot = Pose2D(2.5, 2.5, 0.0)
    choices = []
    for k in (1.0, 3.7, 25.0):
        scored = [score(f, grid, costmap, robot,
                        ScoreWeights(alpha=1.0 * k, beta=1.0 * k)) for f in fronts]
        choices.append(select_frontier(scored).first_cell_index)
    assert choices[0] == choices[1] == choices[2]


def test_all_frontiers_outside_region_leaves_nothing():
    classes = np.full((12, 12), UNKNOWN, dtype=np.uint8)
    classes[5:8, 5:8] = FREE
    grid = grid_from_classes(classes, resolution=1.0)
    fronts = detect_frontiers(grid)
    assert fronts
    region = CircleRegion((100.0, 100.0), 3.0)
    assert filter_keep_in(fronts, region, grid) == []
