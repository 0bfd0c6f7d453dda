"""Log-odds occupancy grid built from lidar scans, with incremental class diffs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CircleRegion, KeepInRegion, Pose2D, PolygonRegion
from .world import Scan

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

L_OCC = 0.85
L_FREE = -0.4
L_CLAMP = 10.0
# class thresholds p>0.65 / p<0.35 expressed in log-odds
_L_OCC_THRESH = math.log(0.65 / 0.35)
_L_FREE_THRESH = -_L_OCC_THRESH


class InvalidPose(ValueError):
    pass


class EmptyRegion(ValueError):
    pass


@dataclass(frozen=True)
class MapDiff:
    """Cells whose class changed during one scan integration."""

    tick: int
    changed: tuple[tuple[int, int], ...]  # (cell index, new class), sorted by index


def classify(log_odds: np.ndarray) -> np.ndarray:
    """Pure map from log-odds to UNKNOWN/FREE/OCCUPIED."""
    out = np.zeros(log_odds.shape, dtype=np.uint8)
    out[log_odds > _L_OCC_THRESH] = OCCUPIED
    out[log_odds < _L_FREE_THRESH] = FREE
    return out


@dataclass
class OccupancyGrid:
    resolution: float
    width: int
    height: int
    origin: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.log_odds = np.zeros((self.height, self.width), dtype=np.float64)
        self.revision = 0

    def classes(self) -> np.ndarray:
        return classify(self.log_odds)

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

    def index_of(self, ix: int, iy: int) -> int:
        return iy * self.width + ix

    def cell_centers_flat(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin.x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin.y + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return gx.ravel(), gy.ravel()


def _traverse_beams(
    grid: OccupancyGrid, x0: float, y0: float, angles: np.ndarray, ranges: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grid traversal of every beam. Returns (free_iy, free_ix) for all cells
    strictly before each beam's endpoint, and (end_iy, end_ix, end_valid) for
    the endpoint cell containing the point at the beam's range."""
    n = len(angles)
    res = grid.resolution
    dx, dy = np.cos(angles), np.sin(angles)
    ix = np.full(n, int(math.floor((x0 - grid.origin.x) / res)), dtype=np.int64)
    iy = np.full(n, int(math.floor((y0 - grid.origin.y) / res)), dtype=np.int64)
    with np.errstate(divide="ignore"):
        t_delta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        t_delta_y = np.where(dy != 0, res / np.abs(dy), np.inf)
        safe_dx = np.where(dx != 0, dx, 1.0)
        safe_dy = np.where(dy != 0, dy, 1.0)
        t_max_x = np.where(
            dx > 0,
            (grid.origin.x + (ix + 1) * res - x0) / safe_dx,
            np.where(dx < 0, (grid.origin.x + ix * res - x0) / safe_dx, np.inf),
        )
        t_max_y = np.where(
            dy > 0,
            (grid.origin.y + (iy + 1) * res - y0) / safe_dy,
            np.where(dy < 0, (grid.origin.y + iy * res - y0) / safe_dy, np.inf),
        )
    step_x = np.sign(dx).astype(np.int64)
    step_y = np.sign(dy).astype(np.int64)
    free_ix_parts: list[np.ndarray] = []
    free_iy_parts: list[np.ndarray] = []
    end_ix = np.zeros(n, dtype=np.int64)
    end_iy = np.zeros(n, dtype=np.int64)
    end_valid = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(grid.width + grid.height + 2):
        if not active.any():
            break
        inside = (ix >= 0) & (ix < grid.width) & (iy >= 0) & (iy < grid.height)
        escaped = active & ~inside
        active &= ~escaped
        exit_t = np.minimum(t_max_x, t_max_y)
        # current cell is the endpoint when the beam ends inside it
        ending = active & (exit_t > ranges)
        end_ix[ending] = ix[ending]
        end_iy[ending] = iy[ending]
        end_valid |= ending
        active &= ~ending
        if active.any():
            free_ix_parts.append(ix[active])
            free_iy_parts.append(iy[active])
        use_x = t_max_x <= t_max_y
        adv_x = active & use_x
        adv_y = active & ~use_x
        ix = np.where(adv_x, ix + step_x, ix)
        iy = np.where(adv_y, iy + step_y, iy)
        t_max_x = np.where(adv_x, t_max_x + t_delta_x, t_max_x)
        t_max_y = np.where(adv_y, t_max_y + t_delta_y, t_max_y)
    if free_ix_parts:
        free_ix = np.concatenate(free_ix_parts)
        free_iy = np.concatenate(free_iy_parts)
    else:
        free_ix = np.zeros(0, dtype=np.int64)
        free_iy = np.zeros(0, dtype=np.int64)
    return free_iy, free_ix, end_iy, end_ix, end_valid


def integrate_scan(grid: OccupancyGrid, pose: Pose2D, scan: Scan, tick: int = 0) -> MapDiff:
    """Fold one scan into the grid at the given (estimated) pose.

    Cells strictly before each beam endpoint get the free-space update; the
    endpoint cell gets the occupied update only for hit beams. Returns the
    class changes this integration caused.
    """
    cx, cy = grid.cell_of(pose.x, pose.y)
    if not grid.in_bounds(cx, cy):
        raise InvalidPose(f"pose ({pose.x}, {pose.y}) outside grid")
    n = scan.beam_count
    angles = pose.theta + np.arange(n) * (scan.fov / n)
    ranges = np.asarray(scan.ranges)
    hits = np.asarray(scan.hits)
    free_iy, free_ix, end_iy, end_ix, end_valid = _traverse_beams(grid, pose.x, pose.y, angles, ranges)

    touched = set(zip(free_iy.tolist(), free_ix.tolist()))
    occ_mask = end_valid & hits
    touched.update(zip(end_iy[occ_mask].tolist(), end_ix[occ_mask].tolist()))
    if not touched:
        return MapDiff(tick=tick, changed=())
    t_iy = np.fromiter((c[0] for c in touched), dtype=np.int64, count=len(touched))
    t_ix = np.fromiter((c[1] for c in touched), dtype=np.int64, count=len(touched))
    before = classify(grid.log_odds[t_iy, t_ix])

    np.add.at(grid.log_odds, (free_iy, free_ix), L_FREE)
    np.add.at(grid.log_odds, (end_iy[occ_mask], end_ix[occ_mask]), L_OCC)
    grid.log_odds[t_iy, t_ix] = np.clip(grid.log_odds[t_iy, t_ix], -L_CLAMP, L_CLAMP)

    after = classify(grid.log_odds[t_iy, t_ix])
    changed_mask = before != after
    if changed_mask.any():
        idx = t_iy[changed_mask] * grid.width + t_ix[changed_mask]
        order = np.argsort(idx, kind="stable")
        changed = tuple(
            (int(i), int(c)) for i, c in zip(idx[order], after[changed_mask][order])
        )
        grid.revision += 1
    else:
        changed = ()
    return MapDiff(tick=tick, changed=changed)


def region_cell_mask(grid: OccupancyGrid, region: KeepInRegion) -> np.ndarray:
    """Boolean mask (flat, row-major) of cells whose center lies in the region."""
    gx, gy = grid.cell_centers_flat()
    if isinstance(region, CircleRegion):
        cx, cy = region.center
        return (gx - cx) ** 2 + (gy - cy) ** 2 <= region.radius**2
    if isinstance(region, PolygonRegion):
        mask = np.ones(gx.shape, dtype=bool)
        n = len(region.vertices)
        for i in range(n):
            ax, ay = region.vertices[i]
            bx, by = region.vertices[(i + 1) % n]
            mask &= (bx - ax) * (gy - ay) - (by - ay) * (gx - ax) >= 0
        return mask
    raise TypeError(f"unsupported region type {type(region)!r}")


def coverage(grid: OccupancyGrid, region: KeepInRegion | None = None) -> float:
    """Fraction of cells in the region (whole map if None) classified non-UNKNOWN."""
    flat = grid.classes().ravel()
    if region is None:
        total = flat.size
        known = int(np.count_nonzero(flat != UNKNOWN))
    else:
        mask = region_cell_mask(grid, region)
        total = int(np.count_nonzero(mask))
        if total == 0:
            raise EmptyRegion("region contains no grid cells")
        known = int(np.count_nonzero(flat[mask] != UNKNOWN))
    if total == 0:
        raise EmptyRegion("grid has no cells")
    return known / total


def apply_diff(class_layer: np.ndarray, diff: MapDiff) -> None:
    """Replay one diff onto a flat class layer (row-major)."""
    for idx, cls in diff.changed:
        class_layer[idx] = cls


def rle_encode(classes_flat: np.ndarray) -> list[list[int]]:
    """Run-length encode a flat class layer as [count, value] pairs."""
    arr = np.asarray(classes_flat)
    if arr.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(arr)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [arr.size]])
    return [[int(e - s), int(arr[s])] for s, e in zip(starts, ends)]


def rle_decode(runs: list[list[int]], size: int) -> np.ndarray:
    out = np.zeros(size, dtype=np.uint8)
    pos = 0
    for count, value in runs:
        out[pos : pos + count] = value
        pos += count
    if pos != size:
        raise ValueError(f"rle decodes to {pos} cells, expected {size}")
    return out


def snapshot(grid: OccupancyGrid, tick: int = 0) -> dict:
    """Grid export: geometry header plus run-length-encoded class layer."""
    return {
        "tick": tick,
        "width": grid.width,
        "height": grid.height,
        "resolution": grid.resolution,
        "origin": {"x": grid.origin.x, "y": grid.origin.y, "theta": grid.origin.theta},
        "rle": rle_encode(grid.classes().ravel()),
    }
