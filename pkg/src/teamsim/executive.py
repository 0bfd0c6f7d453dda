"""Robot-side command interpreter and behavior state machine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace

from .exploration import (
    Frontier,
    ScoreWeights,
    detect_frontiers,
    filter_keep_in,
    score,
    select_frontier,
)
from .geometry import CircleRegion, KeepInRegion, Pose2D, normalize_angle
from .gesture import Gesture
from .mapping import MapDiff, OccupancyGrid
from .planning import (
    ARRIVED,
    GoalUnreachable,
    InflatedCostmap,
    Path,
    StartBlocked,
    distance_field,
    follow_step,
    invalidate_on_diff,
    plan,
)

NEAR = "near"
MEDIUM = "medium"
FAR = "far"
TIERS = (NEAR, MEDIUM, FAR)

IDLE = "IDLE"
TRAVERSING = "TRAVERSING"
EXPLORING = "EXPLORING"
RETURNING = "RETURNING"

ACK_OK = "ok"
ACK_STALE = "stale"
ACK_UNREACHABLE = "unreachable"


class MarkerExists(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    """Human-issued command with the issuing pose (position + gaze heading)
    already expressed in the robot map frame."""

    kind: str  # traverse | explore | stop | return
    human_pose: Pose2D
    seq: int
    tier: str | None = None

    def __post_init__(self):
        if self.kind in ("traverse", "explore"):
            if self.tier not in TIERS:
                raise ValueError(f"{self.kind} needs a tier in {TIERS}")
        elif self.tier is not None:
            raise ValueError(f"{self.kind} takes no tier")


@dataclass(frozen=True)
class CommandConfig:
    """Field-reconfigurable command geometry (distances in meters)."""

    traverse_distances: dict[str, float] = field(
        default_factory=lambda: {NEAR: 2.0, MEDIUM: 4.5, FAR: 7.0}
    )
    explore_regions: dict[str, tuple[float, float]] = field(  # (offset, radius)
        default_factory=lambda: {NEAR: (7.0, 7.0), MEDIUM: (15.0, 15.0), FAR: (25.0, 25.0)}
    )
    return_offset: float = 1.0


@dataclass(frozen=True)
class Ack:
    command_seq: int
    accepted: bool
    reason: str


@dataclass(frozen=True)
class Marker:
    id: str
    position: tuple[float, float]
    label: str
    source: str  # MANUAL | SCRIPTED


@dataclass(frozen=True)
class CompletionEvent:
    behavior: str  # traverse | return
    goal: Pose2D
    tick: int


@dataclass(frozen=True)
class ExplorationCompleteEvent:
    tick: int


@dataclass(frozen=True)
class GoalAbandonedEvent:
    goal: Pose2D
    tick: int


@dataclass(frozen=True)
class FrontierSelection:
    """Record of one frontier pick, kept for keep-in auditing."""

    tick: int
    goal_cell: tuple[int, int]
    cells: tuple[tuple[int, int], ...]
    region: KeepInRegion


def resolve_goal(cmd: Command, cfg: CommandConfig) -> Pose2D | CircleRegion:
    """Turn a command plus the human's pose/gaze into a navigation goal or a
    keep-in circle. The return goal faces back toward the human."""
    h = cmd.human_pose
    gx, gy = math.cos(h.theta), math.sin(h.theta)
    if cmd.kind == "traverse":
        d = cfg.traverse_distances[cmd.tier]
        return Pose2D(h.x + d * gx, h.y + d * gy, h.theta)
    if cmd.kind == "explore":
        offset, radius = cfg.explore_regions[cmd.tier]
        return CircleRegion(center=(h.x + offset * gx, h.y + offset * gy), radius=radius)
    if cmd.kind == "return":
        d = cfg.return_offset
        return Pose2D(h.x + d * gx, h.y + d * gy, normalize_angle(h.theta + math.pi))
    if cmd.kind == "stop":
        raise ValueError("stop has no goal")
    raise ValueError(f"unknown command kind {cmd.kind!r}")


def gesture_to_command(gesture: Gesture, human_pose: Pose2D, seq: int) -> Command | None:
    """Map a classified gesture to a command; unrecognized maps to nothing."""
    if gesture.kind == "traverse_point":
        return Command("traverse", human_pose, seq, tier=TIERS[gesture.fingers - 1])
    if gesture.kind == "explore_oscillate":
        return Command("explore", human_pose, seq, tier=TIERS[gesture.fingers - 1])
    if gesture.kind == "stop_palm":
        return Command("stop", human_pose, seq)
    if gesture.kind == "return_sign":
        return Command("return", human_pose, seq)
    return None


@dataclass
class TickResult:
    velocity: tuple[float, float] = (0.0, 0.0)
    events: list = field(default_factory=list)
    path_changed: bool = False
    frontiers: list[Frontier] | None = None
    selection: FrontierSelection | None = None


GOAL_SNAP = 0.3  # grid quantization tolerance for command goals
MAX_PLAN_FAILURES = 3
MAX_REPLAN_TICKS = 100
# freshly scanned cells need a second observation to classify FREE, so a
# frontier can be momentarily unplannable; wait this many ticks before
# declaring the region done while in-region frontiers still exist
INFEASIBLE_PATIENCE_TICKS = 30


class Executive:
    """Single writer of behavior state; commands arrive through a serialized queue."""

    def __init__(
        self,
        cfg: CommandConfig | None = None,
        *,
        weights: ScoreWeights = ScoreWeights(),
        gain_range: float = 5.0,
        min_cluster_size: int = 3,
        max_linear: float = 2.0,
        max_angular: float = 2.0,
    ):
        self.cfg = cfg or CommandConfig()
        self.weights = weights
        self.gain_range = gain_range
        self.min_cluster_size = min_cluster_size
        self.max_linear = max_linear
        self.max_angular = max_angular
        self.mode = IDLE
        self.active_goal: Pose2D | None = None
        self.active_region: KeepInRegion | None = None
        self.active_path: Path | None = None
        self.last_command_seq: dict[str, int] = {}
        self.markers: dict[str, Marker] = {}
        self._marker_auto = 0
        self._behavior: str | None = None
        self._blacklist: dict[tuple[int, int], int] = {}
        self._last_selection: tuple[tuple[int, int], int] | None = None
        self._replan_failures = 0
        self._infeasible_streak = 0

    # -- commands ---------------------------------------------------------

    def handle_command(self, cmd: Command, grid: OccupancyGrid,
                       costmap: InflatedCostmap, client: str = "default",
                       robot_pose: Pose2D | None = None) -> Ack:
        last = self.last_command_seq.get(client)
        if last is not None and cmd.seq <= last:
            return Ack(cmd.seq, False, ACK_STALE)
        self.last_command_seq[client] = cmd.seq
        if cmd.kind == "stop":
            self._clear_behavior()
            return Ack(cmd.seq, True, ACK_OK)
        if cmd.kind in ("traverse", "return"):
            goal = resolve_goal(cmd, self.cfg)
            start = robot_pose if robot_pose is not None else cmd.human_pose
            try:
                path = self._plan_snapped(costmap, start, goal)
            except (GoalUnreachable, StartBlocked):
                return Ack(cmd.seq, False, ACK_UNREACHABLE)
            self._clear_behavior()
            self.mode = TRAVERSING if cmd.kind == "traverse" else RETURNING
            self._behavior = cmd.kind
            self.active_goal = goal
            self.active_path = path
            self._replan_failures = 0
            return Ack(cmd.seq, True, ACK_OK)
        if cmd.kind == "explore":
            region = resolve_goal(cmd, self.cfg)
            self._clear_behavior()
            self.mode = EXPLORING
            self.active_region = region
            self._blacklist = {}
            self._last_selection = None
            self._infeasible_streak = 0
            return Ack(cmd.seq, True, ACK_OK)
        return Ack(cmd.seq, False, "unknown")

    def _clear_behavior(self) -> None:
        self.mode = IDLE
        self.active_goal = None
        self.active_region = None
        self.active_path = None
        self._behavior = None

    def _plan_snapped(self, costmap: InflatedCostmap, start: Pose2D, goal: Pose2D) -> Path:
        try:
            return plan(costmap, start, goal)
        except GoalUnreachable:
            if not costmap.is_blocked(*costmap.cell_of(goal.x, goal.y)):
                raise
            snapped = costmap.nearest_unblocked(goal.x, goal.y, GOAL_SNAP)
            if snapped is None:
                raise
            sx, sy = costmap.cell_center(*snapped)
            return plan(costmap, start, Pose2D(sx, sy, goal.theta))

    # -- markers ------------------------------------------------------------

    def add_marker(self, position: tuple[float, float], label: str,
                   source: str, marker_id: str | None = None) -> Marker:
        if not (math.isfinite(position[0]) and math.isfinite(position[1])):
            raise ValueError("marker position must be finite")
        if marker_id is None:
            self._marker_auto += 1
            marker_id = f"m{self._marker_auto}"
        marker = Marker(id=marker_id, position=(float(position[0]), float(position[1])),
                        label=label, source=source)
        existing = self.markers.get(marker_id)
        if existing is not None:
            if existing == marker:
                return existing
            raise MarkerExists(f"marker id {marker_id!r} already present")
        self.markers[marker_id] = marker
        return marker

    # -- behavior tick -------------------------------------------------------

    def tick(self, grid: OccupancyGrid, costmap: InflatedCostmap, robot_pose: Pose2D,
             dt: float, diff: MapDiff | None = None, tick_index: int = 0) -> TickResult:
        result = TickResult()
        if self.mode == IDLE:
            return result
        if (
            diff is not None
            and self.active_path is not None
            and invalidate_on_diff(self.active_path, diff, costmap,
                                   self._progress_index(robot_pose))
        ):
            self.active_path = None
            result.path_changed = True
        if self.mode in (TRAVERSING, RETURNING):
            self._tick_goto(costmap, robot_pose, result, tick_index)
        elif self.mode == EXPLORING:
            self._tick_explore(grid, costmap, robot_pose, result, tick_index)
        return result

    def _progress_index(self, pose: Pose2D) -> int:
        if not self.active_path:
            return 0
        dists = [math.hypot(wp.x - pose.x, wp.y - pose.y) for wp in self.active_path.waypoints]
        return dists.index(min(dists))

    def _tick_goto(self, costmap: InflatedCostmap, robot_pose: Pose2D,
                   result: TickResult, tick_index: int) -> None:
        if self.active_path is None:
            try:
                self.active_path = self._plan_snapped(costmap, robot_pose, self.active_goal)
                result.path_changed = True
                self._replan_failures = 0
            except (GoalUnreachable, StartBlocked):
                self._replan_failures += 1
                if self._replan_failures >= MAX_REPLAN_TICKS:
                    result.events.append(GoalAbandonedEvent(self.active_goal, tick_index))
                    self._clear_behavior()
                    result.path_changed = True
                return
        v, w, status = follow_step(self.active_path, robot_pose,
                                   self.max_linear, self.max_angular, costmap)
        if status == ARRIVED:
            result.events.append(CompletionEvent(self._behavior, self.active_goal, tick_index))
            self._clear_behavior()
            result.path_changed = True
        else:
            result.velocity = (v, w)

    def _tick_explore(self, grid: OccupancyGrid, costmap: InflatedCostmap,
                      robot_pose: Pose2D, result: TickResult, tick_index: int) -> None:
        if self.active_path is None:
            self._reselect(grid, costmap, robot_pose, result, tick_index)
            if self.mode != EXPLORING or self.active_path is None:
                return
        v, w, status = follow_step(self.active_path, robot_pose,
                                   self.max_linear, self.max_angular, costmap)
        if status == ARRIVED:
            self.active_path = None
            result.path_changed = True
        else:
            result.velocity = (v, w)

    def _reselect(self, grid: OccupancyGrid, costmap: InflatedCostmap, robot_pose: Pose2D,
                  result: TickResult, tick_index: int) -> None:
        frontiers = detect_frontiers(grid, self.min_cluster_size)
        frontiers = filter_keep_in(frontiers, self.active_region, grid)
        if not frontiers:
            result.events.append(ExplorationCompleteEvent(tick_index))
            self._clear_behavior()
            result.path_changed = True
            return
        try:
            field_ = distance_field(costmap, robot_pose)
        except StartBlocked:
            field_ = None
        scored = [
            score(f, grid, costmap, robot_pose, self.weights, self.gain_range,
                  distance_field=field_)
            for f in frontiers
        ]
        scored = [
            f if (not f.feasible or self._blacklist.get(f.goal_cell, 0) < MAX_PLAN_FAILURES)
            else dc_replace(f, feasible=False, utility=-math.inf)
            for f in scored
        ]
        result.frontiers = scored
        candidates = list(scored)
        while True:
            chosen = select_frontier(candidates)
            if chosen is None:
                self._infeasible_streak += 1
                if self._infeasible_streak >= INFEASIBLE_PATIENCE_TICKS:
                    result.events.append(ExplorationCompleteEvent(tick_index))
                    self._clear_behavior()
                    result.path_changed = True
                return
            # a repeat pick with no map change since means the spot teaches nothing
            if self._last_selection == (chosen.goal_cell, grid.revision):
                self._blacklist[chosen.goal_cell] = MAX_PLAN_FAILURES
                candidates = [f for f in candidates if f is not chosen]
                continue
            gx, gy = costmap.cell_center(*chosen.goal_cell)
            heading = math.atan2(chosen.centroid[1] - gy, chosen.centroid[0] - gx) \
                if (chosen.centroid[0] - gx, chosen.centroid[1] - gy) != (0.0, 0.0) else robot_pose.theta
            try:
                self.active_path = plan(costmap, robot_pose, Pose2D(gx, gy, heading))
            except (GoalUnreachable, StartBlocked):
                fails = self._blacklist.get(chosen.goal_cell, 0) + 1
                self._blacklist[chosen.goal_cell] = fails
                candidates = [f for f in candidates if f is not chosen]
                continue
            self._last_selection = (chosen.goal_cell, grid.revision)
            self._infeasible_streak = 0
            result.path_changed = True
            result.selection = FrontierSelection(
                tick=tick_index,
                goal_cell=chosen.goal_cell,
                cells=chosen.cells,
                region=self.active_region,
            )
            return
