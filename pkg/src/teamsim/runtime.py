"""Single-process robot runtime: scan, map, decide, move, every tick."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .executive import Ack, Command, CommandConfig, Executive, Marker
from .exploration import ScoreWeights
from .geometry import Pose2D, Transform2D, normalize_angle
from .mapping import MapDiff, OccupancyGrid, integrate_scan
from .planning import InflatedCostmap
from .world import AgentState, DriftModel, LidarConfig, WorldMap, scan, step


@dataclass
class SimConfig:
    dt: float = 0.1
    lidar: LidarConfig = field(default_factory=LidarConfig)
    inflation_radius: float = 0.35
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    gain_range: float = 5.0
    min_cluster_size: int = 3
    robot_radius: float = 0.3
    human_radius: float = 0.3
    robot_max_linear: float = 2.0
    robot_max_angular: float = 2.0
    human_max_linear: float = 1.4
    human_max_angular: float = 2.0
    robot_drift: DriftModel = field(default_factory=DriftModel)
    human_drift: DriftModel = field(default_factory=DriftModel)
    commands: CommandConfig = field(default_factory=CommandConfig)
    # ground-truth transform taking human-device coordinates into the map frame
    human_frame: Transform2D = field(default_factory=Transform2D.identity)


@dataclass
class TickOutput:
    tick: int
    t: float
    acks: list[tuple[str, Ack, Command]]
    diff: MapDiff
    events: list
    path_changed: bool
    frontiers: list | None
    selection: object | None
    new_markers: list[Marker]
    robot_pose: Pose2D
    human_pose: Pose2D
    mode: str
    velocity: tuple[float, float]


class Simulation:
    """Owns the world, both agents, the robot's grid, and the executive; advanced
    only by its owner's tick loop."""

    def __init__(self, world: WorldMap, robot_start: Pose2D, human_start: Pose2D,
                 cfg: SimConfig | None = None, seed: int = 0):
        self.world = world
        self.cfg = cfg or SimConfig()
        c = self.cfg
        self.robot = AgentState(
            true_pose=robot_start, max_linear=c.robot_max_linear,
            max_angular=c.robot_max_angular, radius=c.robot_radius, drift=c.robot_drift,
        )
        self.human = AgentState(
            true_pose=human_start, max_linear=c.human_max_linear,
            max_angular=c.human_max_angular, radius=c.human_radius, drift=c.human_drift,
        )
        self.grid = OccupancyGrid(
            resolution=world.resolution, width=world.width, height=world.height,
            origin=world.origin,
        )
        self.executive = Executive(
            c.commands, weights=c.weights, gain_range=c.gain_range,
            min_cluster_size=c.min_cluster_size,
            max_linear=c.robot_max_linear, max_angular=c.robot_max_angular,
        )
        self._lidar_rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.costmap = InflatedCostmap(self.grid, c.inflation_radius)
        self.tick_index = 0
        self.sim_time = 0.0
        self.collisions = 0
        self.distance_traveled = 0.0
        self._human_targets: list[tuple[float, float]] = []

    # -- human scripting ---------------------------------------------------

    def human_goto(self, x: float, y: float) -> None:
        self._human_targets.append((x, y))

    def human_face(self, heading: float) -> None:
        p = self.human.true_pose
        self.human.true_pose = Pose2D(p.x, p.y, heading)
        self.human.estimated_pose = self.human._drift_state.apply(self.human.true_pose)

    def human_pose_in_device_frame(self) -> Pose2D:
        """The pose the human's own equipment would report: estimated pose
        expressed in the human device frame."""
        return self.cfg.human_frame.inverse().apply_pose(self.human.estimated_pose)

    def _human_controller(self) -> tuple[float, float]:
        while self._human_targets:
            tx, ty = self._human_targets[0]
            p = self.human.true_pose
            if math.hypot(tx - p.x, ty - p.y) < 0.15:
                self._human_targets.pop(0)
                continue
            bearing = normalize_angle(math.atan2(ty - p.y, tx - p.x) - p.theta)
            w = max(-self.cfg.human_max_angular, min(self.cfg.human_max_angular, 2.5 * bearing))
            v = self.cfg.human_max_linear * max(0.0, math.cos(bearing)) \
                if abs(bearing) < math.pi / 2 else 0.0
            return (v, w)
        return (0.0, 0.0)

    # -- main loop -----------------------------------------------------------

    def tick(self, commands: list[tuple[str, Command]] | None = None) -> TickOutput:
        c = self.cfg
        sweep = scan(
            self.world, self.robot.true_pose, c.lidar,
            obstacles=((self.human.true_pose.x, self.human.true_pose.y, c.human_radius),),
            rng=self._lidar_rng,
        )
        diff = integrate_scan(self.grid, self.robot.estimated_pose, sweep, self.tick_index)
        self.costmap = InflatedCostmap(self.grid, c.inflation_radius)

        markers_before = len(self.executive.markers)
        path_before = self.executive.active_path
        acks = []
        for client, cmd in commands or []:
            ack = self.executive.handle_command(
                cmd, self.grid, self.costmap, client, robot_pose=self.robot.estimated_pose
            )
            acks.append((client, ack, cmd))

        result = self.executive.tick(
            self.grid, self.costmap, self.robot.estimated_pose, c.dt, diff, self.tick_index
        )
        if self.executive.active_path is not path_before:
            result.path_changed = True
        self.robot.set_velocity(*result.velocity)
        self.human.set_velocity(*self._human_controller())

        before = self.robot.true_pose
        step(self.world, [self.robot, self.human], c.dt)
        self.distance_traveled += before.distance_to(self.robot.true_pose)
        if self.robot.blocked:
            self.collisions += 1

        new_markers = list(self.executive.markers.values())[markers_before:]
        self.tick_index += 1
        self.sim_time = round(self.tick_index * c.dt, 9)
        return TickOutput(
            tick=self.tick_index,
            t=self.sim_time,
            acks=acks,
            diff=diff,
            events=result.events,
            path_changed=result.path_changed,
            frontiers=result.frontiers,
            selection=result.selection,
            new_markers=new_markers,
            robot_pose=self.robot.estimated_pose,
            human_pose=self.human.true_pose,
            mode=self.executive.mode,
            velocity=result.velocity,
        )
