"""Deterministic discrete-time world: grid map, planar lidar, unicycle agents, drift."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose2D, normalize_angle

OPEN = 0
WALL = 1


class WorldFormatError(ValueError):
    pass


class InvalidOrigin(ValueError):
    """Ray origin outside the map or inside a wall cell."""


@dataclass
class WorldMap:
    """Static obstacle grid. cells[iy, ix] with iy=0 at min-y; origin is the
    world position of the (0, 0) cell corner."""

    resolution: float
    cells: np.ndarray  # uint8, shape (height, width), values OPEN/WALL
    origin: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.resolution <= 0:
            raise WorldFormatError(f"resolution must be positive, got {self.resolution}")
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 2:
            raise WorldFormatError("cells must be a 2D array")
        h, w = self.cells.shape
        border = np.concatenate(
            [self.cells[0, :], self.cells[-1, :], self.cells[:, 0], self.cells[:, -1]]
        )
        if not (border == WALL).all():
            raise WorldFormatError("boundary cells must all be walls (closed world)")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

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

    def is_open_at(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        return self.in_bounds(ix, iy) and self.cells[iy, ix] == OPEN


def load_world(path: str | Path) -> WorldMap:
    """Parse the ASCII world format: `resolution <float>` then rows of '#'/'.',
    row 0 being the top (max-y) row."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("resolution"):
        raise WorldFormatError(f"{path}: first line must be 'resolution <float>'")
    try:
        resolution = float(lines[0].split()[1])
    except (IndexError, ValueError) as e:
        raise WorldFormatError(f"{path}: bad resolution line: {lines[0]!r}") from e
    rows = [ln for ln in lines[1:] if ln.strip()]
    if not rows:
        raise WorldFormatError(f"{path}: no map rows")
    width = len(rows[0])
    grid = np.zeros((len(rows), width), dtype=np.uint8)
    for file_row, ln in enumerate(rows):
        if len(ln) != width:
            raise WorldFormatError(f"{path}: row {file_row} has length {len(ln)}, expected {width}")
        iy = len(rows) - 1 - file_row
        for ix, ch in enumerate(ln):
            if ch == "#":
                grid[iy, ix] = WALL
            elif ch == ".":
                grid[iy, ix] = OPEN
            else:
                raise WorldFormatError(f"{path}: bad character {ch!r} in row {file_row}")
    return WorldMap(resolution=resolution, cells=grid)


def dump_world(world: WorldMap) -> str:
    rows = []
    for iy in range(world.height - 1, -1, -1):
        rows.append("".join("#" if c == WALL else "." for c in world.cells[iy]))
    return f"resolution {world.resolution}\n" + "\n".join(rows) + "\n"


@dataclass(frozen=True)
class LidarConfig:
    beam_count: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 100.0
    range_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if not (0.0 < self.fov <= 2.0 * math.pi + 1e-12):
            raise ValueError("fov must be in (0, 2*pi]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class Scan:
    """One sweep of beams; beam i points at pose.theta + i * fov / beam_count.
    hit=False implies the beam saturated at max_range."""

    pose: Pose2D
    fov: float
    max_range: float
    ranges: tuple[float, ...]
    hits: tuple[bool, ...]

    @property
    def beam_count(self) -> int:
        return len(self.ranges)

    def beam_angle(self, i: int) -> float:
        return normalize_angle(self.pose.theta + i * self.fov / self.beam_count)


def raycast(world: WorldMap, origin: Pose2D, angle: float, max_range: float) -> tuple[float, bool]:
    """Exact DDA grid traversal from origin along angle.

    Returns (distance to first wall-cell boundary, True) or (max_range, False)
    when nothing is hit within range.
    """
    ix, iy = world.cell_of(origin.x, origin.y)
    if not world.in_bounds(ix, iy) or world.cells[iy, ix] == WALL:
        raise InvalidOrigin(f"origin ({origin.x}, {origin.y}) not in an open cell")
    dx, dy = math.cos(angle), math.sin(angle)
    res = world.resolution
    if dx > 0:
        step_x, t_max_x = 1, (world.origin.x + (ix + 1) * res - origin.x) / dx
        t_delta_x = res / dx
    elif dx < 0:
        step_x, t_max_x = -1, (world.origin.x + ix * res - origin.x) / dx
        t_delta_x = res / -dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf
    if dy > 0:
        step_y, t_max_y = 1, (world.origin.y + (iy + 1) * res - origin.y) / dy
        t_delta_y = res / dy
    elif dy < 0:
        step_y, t_max_y = -1, (world.origin.y + iy * res - origin.y) / dy
        t_delta_y = res / -dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf
    while True:
        if t_max_x <= t_max_y:
            t, ix = t_max_x, ix + step_x
            t_max_x += t_delta_x
        else:
            t, iy = t_max_y, iy + step_y
            t_max_y += t_delta_y
        if t >= max_range:
            return (max_range, False)
        if not world.in_bounds(ix, iy):
            return (max_range, False)
        if world.cells[iy, ix] == WALL:
            return (t, True)


def _raycast_walls_batch(world: WorldMap, x0: float, y0: float, angles: np.ndarray, max_range: float) -> np.ndarray:
    """Vectorized DDA against wall cells; returns hit distance per beam (max_range if none)."""
    n = len(angles)
    dx, dy = np.cos(angles), np.sin(angles)
    res = world.resolution
    ix = np.full(n, int(math.floor((x0 - world.origin.x) / res)), dtype=np.int64)
    iy = np.full(n, int(math.floor((y0 - world.origin.y) / res)), dtype=np.int64)
    with np.errstate(divide="ignore"):
        t_delta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        t_delta_y = np.where(dy != 0, res / np.abs(dy), np.inf)
        t_max_x = np.where(
            dx > 0,
            (world.origin.x + (ix + 1) * res - x0) / np.where(dx != 0, dx, 1.0),
            np.where(dx < 0, (world.origin.x + ix * res - x0) / np.where(dx != 0, dx, 1.0), np.inf),
        )
        t_max_y = np.where(
            dy > 0,
            (world.origin.y + (iy + 1) * res - y0) / np.where(dy != 0, dy, 1.0),
            np.where(dy < 0, (world.origin.y + iy * res - y0) / np.where(dy != 0, dy, 1.0), np.inf),
        )
    step_x = np.sign(dx).astype(np.int64)
    step_y = np.sign(dy).astype(np.int64)
    out = np.full(n, max_range, dtype=np.float64)
    active = np.ones(n, dtype=bool)
    max_iter = world.width + world.height + 2
    for _ in range(max_iter):
        if not active.any():
            break
        use_x = active & (t_max_x <= t_max_y)
        use_y = active & ~(t_max_x <= t_max_y)
        t = np.where(use_x, t_max_x, t_max_y)
        ix = np.where(use_x, ix + step_x, ix)
        iy = np.where(use_y, iy + step_y, iy)
        t_max_x = np.where(use_x, t_max_x + t_delta_x, t_max_x)
        t_max_y = np.where(use_y, t_max_y + t_delta_y, t_max_y)
        saturated = active & (t >= max_range)
        active &= ~saturated
        inside = (ix >= 0) & (ix < world.width) & (iy >= 0) & (iy < world.height)
        escaped = active & ~inside
        active &= ~escaped
        ixc = np.clip(ix, 0, world.width - 1)
        iyc = np.clip(iy, 0, world.height - 1)
        hit = active & (world.cells[iyc, ixc] == WALL)
        out[hit] = t[hit]
        active &= ~hit
    return out


def _ray_circle_batch(x0: float, y0: float, angles: np.ndarray, cx: float, cy: float, r: float) -> np.ndarray:
    """First positive intersection distance of each beam with a circle (inf if none)."""
    dx, dy = np.cos(angles), np.sin(angles)
    ox, oy = x0 - cx, y0 - cy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - r * r
    disc = b * b - c
    out = np.full(len(angles), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = -b - sq
    hit = ok & (t > 0)
    out[hit] = t[hit]
    return out


def scan(
    world: WorldMap,
    sensor_pose: Pose2D,
    config: LidarConfig,
    *,
    obstacles: tuple[tuple[float, float, float], ...] = (),
    rng: np.random.Generator | None = None,
) -> Scan:
    """Sweep the lidar from sensor_pose. obstacles are dynamic (cx, cy, radius)
    circles (e.g. the other agent); noise, if configured, comes from rng."""
    ix, iy = world.cell_of(sensor_pose.x, sensor_pose.y)
    if not world.in_bounds(ix, iy) or world.cells[iy, ix] == WALL:
        raise InvalidOrigin(f"sensor pose ({sensor_pose.x}, {sensor_pose.y}) not in an open cell")
    n = config.beam_count
    angles = sensor_pose.theta + np.arange(n) * (config.fov / n)
    ranges = _raycast_walls_batch(world, sensor_pose.x, sensor_pose.y, angles, config.max_range)
    for (cx, cy, r) in obstacles:
        t = _ray_circle_batch(sensor_pose.x, sensor_pose.y, angles, cx, cy, r)
        ranges = np.minimum(ranges, np.clip(t, None, config.max_range))
    hits = ranges < config.max_range
    if config.range_noise_sigma > 0 and rng is not None:
        noise = rng.normal(0.0, config.range_noise_sigma, size=n)
        noisy = np.clip(ranges + noise, 1e-9, config.max_range)
        ranges = np.where(hits, noisy, ranges)
    return Scan(
        pose=sensor_pose,
        fov=config.fov,
        max_range=config.max_range,
        ranges=tuple(float(v) for v in ranges),
        hits=tuple(bool(v) for v in hits),
    )


@dataclass(frozen=True)
class DriftModel:
    """Random-walk corruption of the pose estimate; sigmas are per sqrt-second."""

    yaw_rate_bias_sigma: float = 0.0
    translation_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.yaw_rate_bias_sigma < 0 or self.translation_sigma < 0:
            raise ValueError("drift sigmas must be >= 0")


class DriftState:
    def __init__(self, model: DriftModel):
        self.model = model
        self.rng = np.random.default_rng(model.seed)
        self.dx = 0.0
        self.dy = 0.0
        self.dyaw = 0.0

    def advance(self, dt: float) -> None:
        m = self.model
        sq = math.sqrt(dt)
        gx, gy, gyaw = self.rng.normal(0.0, 1.0, size=3)
        self.dx += m.translation_sigma * sq * gx
        self.dy += m.translation_sigma * sq * gy
        self.dyaw += m.yaw_rate_bias_sigma * sq * gyaw

    def reset(self) -> None:
        self.dx = self.dy = self.dyaw = 0.0

    def apply(self, pose: Pose2D) -> Pose2D:
        return Pose2D(pose.x + self.dx, pose.y + self.dy, pose.theta + self.dyaw)


@dataclass
class AgentState:
    """Unicycle agent with a circular footprint and a drifting pose estimate."""

    true_pose: Pose2D
    max_linear: float = 2.0
    max_angular: float = 2.0
    radius: float = 0.3
    drift: DriftModel = field(default_factory=DriftModel)
    commanded_linear: float = 0.0
    commanded_angular: float = 0.0
    blocked: bool = False

    def __post_init__(self):
        self._drift_state = DriftState(self.drift)
        self.estimated_pose = self._drift_state.apply(self.true_pose)

    def set_velocity(self, linear: float, angular: float) -> None:
        self.commanded_linear = linear
        self.commanded_angular = angular

    def reset_drift(self) -> None:
        self._drift_state.reset()
        self.estimated_pose = self.true_pose


def footprint_hits_wall(world: WorldMap, x: float, y: float, radius: float) -> bool:
    res = world.resolution
    ix0, iy0 = world.cell_of(x - radius, y - radius)
    ix1, iy1 = world.cell_of(x + radius, y + radius)
    for iy in range(iy0, iy1 + 1):
        for ix in range(ix0, ix1 + 1):
            if not world.in_bounds(ix, iy) or world.cells[iy, ix] == WALL:
                cx0 = world.origin.x + ix * res
                cy0 = world.origin.y + iy * res
                ddx = max(cx0 - x, 0.0, x - (cx0 + res))
                ddy = max(cy0 - y, 0.0, y - (cy0 + res))
                if math.hypot(ddx, ddy) < radius:
                    return True
    return False


def step(world: WorldMap, agents: list[AgentState], dt: float) -> None:
    """Advance every agent one tick. Translation into a wall or another agent's
    footprint is blocked (rotation still applies) and flagged on the agent."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    for i, a in enumerate(agents):
        v = max(-a.max_linear, min(a.max_linear, a.commanded_linear))
        w = max(-a.max_angular, min(a.max_angular, a.commanded_angular))
        p = a.true_pose
        ntheta = normalize_angle(p.theta + w * dt)
        nx = p.x + v * math.cos(p.theta) * dt
        ny = p.y + v * math.sin(p.theta) * dt
        a.blocked = False
        if v != 0.0:
            collides = footprint_hits_wall(world, nx, ny, a.radius)
            if not collides:
                for j, other in enumerate(agents):
                    if j != i and math.hypot(nx - other.true_pose.x, ny - other.true_pose.y) < a.radius + other.radius:
                        collides = True
                        break
            if collides:
                a.blocked = True
                nx, ny = p.x, p.y
        a.true_pose = Pose2D(nx, ny, ntheta)
        a._drift_state.advance(dt)
        a.estimated_pose = a._drift_state.apply(a.true_pose)
