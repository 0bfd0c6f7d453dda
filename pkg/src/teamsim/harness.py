"""Scenario runner: loads TOML missions, drives the server headlessly, collects
metrics, evaluates embedded assertions, and writes replay logs."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # py3.10
    import tomli as tomllib

from . import protocol as proto
from .executive import Command, CommandConfig, gesture_to_command
from .exploration import ScoreWeights
from .geometry import CircleRegion, Pose2D, Transform2D
from .gesture import ActivationFsm, GestureEvent, HapticEvent, TraceSpec, make_gesture_trace
from .mapping import UNKNOWN, OccupancyGrid, coverage, region_cell_mask
from .mapping import snapshot as grid_snapshot
from .protocol import Envelope
from .runtime import SimConfig, Simulation
from .server import RobotServer, TcpClient, TcpServer
from .world import DriftModel, LidarConfig, WorldMap, load_world, raycast


class ScenarioInvalid(ValueError):
    pass


@dataclass
class Action:
    t: float
    op: str  # command | haptic | align | human_goto | human_face | marker
    data: dict


@dataclass
class Assertion:
    kind: str
    params: dict


@dataclass
class Scenario:
    name: str
    world_path: Path
    robot_start: Pose2D
    human_start: Pose2D
    budget: float
    seed: int
    actions: list[Action]
    asserts: list[Assertion]
    sim_config: SimConfig
    coverage_metric: str = "map"  # map | keep_in
    stop_on_idle_after: float | None = None

    def __post_init__(self):
        if self.budget <= 0:
            raise ScenarioInvalid("budget must be positive")
        ts = [a.t for a in self.actions]
        if ts != sorted(ts):
            raise ScenarioInvalid("script times must be non-decreasing")


def _pose_from_list(values) -> Pose2D:
    x, y = float(values[0]), float(values[1])
    theta = float(values[2]) if len(values) > 2 else 0.0
    return Pose2D(x, y, theta)


def _expand_glove(t0: float, entry: dict) -> list[Action]:
    """Run a synthetic glove trace through the activation FSM offline; the
    recognized gesture becomes a command scheduled at its in-trace time."""
    spec = TraceSpec(
        kind=entry["gesture"],
        fingers=int(entry.get("fingers", 1)),
        seed=int(entry.get("seed", 0)),
        noise_sigma=float(entry.get("noise_sigma", 0.01)),
    )
    frames = make_gesture_trace(spec)
    fsm = ActivationFsm()
    actions: list[Action] = []
    for frame in frames:
        for ev in fsm.step(frame):
            if isinstance(ev, HapticEvent):
                actions.append(Action(t0 + ev.t, "haptic", {"pattern": ev.pattern}))
            elif isinstance(ev, GestureEvent):
                actions.append(Action(t0 + ev.t, "command", {
                    "gesture": ev.gesture,
                }))
    return actions


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ScenarioInvalid(f"{path}: {e}") from e
    world_path = (path.parent / raw["world"]).resolve()
    if not world_path.exists():
        raise ScenarioInvalid(f"{path}: world file {raw['world']!r} not found")
    seed = seed_override if seed_override is not None else int(raw.get("seed", 0))
    opts = raw.get("options", {})
    lidar = LidarConfig(
        beam_count=int(opts.get("beam_count", 360)),
        max_range=float(opts.get("max_range", 100.0)),
        range_noise_sigma=float(opts.get("range_noise_sigma", 0.0)),
    )
    hf = raw.get("human_frame", {})
    human_frame = Transform2D(
        float(hf.get("rotation", 0.0)),
        tuple(float(v) for v in hf.get("translation", (0.0, 0.0))),
    )
    drift = raw.get("drift", {})
    cfg = SimConfig(
        dt=float(opts.get("dt", 0.1)),
        lidar=lidar,
        inflation_radius=float(opts.get("inflation_radius", 0.35)),
        weights=ScoreWeights(alpha=float(opts.get("alpha", 1.0)), beta=float(opts.get("beta", 1.0))),
        gain_range=float(opts.get("gain_range", 5.0)),
        min_cluster_size=int(opts.get("min_cluster_size", 3)),
        robot_drift=DriftModel(
            yaw_rate_bias_sigma=float(drift.get("robot_yaw_sigma", 0.0)),
            translation_sigma=float(drift.get("robot_translation_sigma", 0.0)),
            seed=seed + 1,
        ),
        human_drift=DriftModel(
            yaw_rate_bias_sigma=float(drift.get("human_yaw_sigma", 0.0)),
            translation_sigma=float(drift.get("human_translation_sigma", 0.0)),
            seed=seed + 2,
        ),
        human_frame=human_frame,
        commands=CommandConfig(),
    )
    actions: list[Action] = []
    for entry in raw.get("script", []):
        t0 = float(entry["t"])
        if "command" in entry:
            actions.append(Action(t0, "command", dict(entry["command"])))
        elif "glove" in entry:
            actions.extend(_expand_glove(t0, entry["glove"]))
        elif "human_goto" in entry:
            actions.append(Action(t0, "human_goto", dict(entry["human_goto"])))
        elif "human_face" in entry:
            actions.append(Action(t0, "human_face", dict(entry["human_face"])))
        elif "marker" in entry:
            actions.append(Action(t0, "marker", dict(entry["marker"])))
        elif "align" in entry:
            actions.append(Action(t0, "align", dict(entry["align"])))
        else:
            raise ScenarioInvalid(f"{path}: unknown script entry {entry!r}")
    actions.sort(key=lambda a: a.t)
    asserts = [Assertion(kind=a["kind"], params={k: v for k, v in a.items() if k != "kind"})
               for a in raw.get("asserts", [])]
    return Scenario(
        name=raw.get("name", path.stem),
        world_path=world_path,
        robot_start=_pose_from_list(raw["robot"]["start"]),
        human_start=_pose_from_list(raw["human"]["start"]),
        budget=float(raw.get("budget", 60.0)),
        seed=seed,
        actions=actions,
        asserts=asserts,
        sim_config=cfg,
        coverage_metric=str(opts.get("coverage", "map")),
        stop_on_idle_after=(float(raw["stop_on_idle_after"])
                            if "stop_on_idle_after" in raw else None),
    )


@dataclass
class SelectionRecord:
    tick: int
    goal_cell: tuple[int, int]
    cells_inside: bool
    cell_count: int


@dataclass
class MissionMetrics:
    scenario: str
    seed: int
    ticks: int = 0
    sim_time: float = 0.0
    coverage_curve: list[tuple[float, float]] = field(default_factory=list)
    commands_issued: dict[str, int] = field(default_factory=dict)
    acks: list[dict] = field(default_factory=list)
    resolved_goals: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    haptics: list[dict] = field(default_factory=list)
    selections: list[SelectionRecord] = field(default_factory=list)
    collisions: int = 0
    distance_traveled: float = 0.0
    final_robot_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    final_mode: str = "IDLE"
    nlos_moving_ticks: int = 0
    markers: list[dict] = field(default_factory=list)
    final_map: dict | None = None  # the robot's grid export at mission end

    def time_to_coverage(self, p: float) -> float | None:
        for t, cov in self.coverage_curve:
            if cov >= p:
                return t
        return None

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "ticks": self.ticks,
            "sim_time": self.sim_time,
            "collisions": self.collisions,
            "distance_traveled": round(self.distance_traveled, 6),
            "commands_issued": dict(sorted(self.commands_issued.items())),
            "acks": self.acks,
            "resolved_goals": self.resolved_goals,
            "events": self.events,
            "final_robot_pose": [round(v, 6) for v in self.final_robot_pose],
            "final_mode": self.final_mode,
            "coverage_final": self.coverage_curve[-1][1] if self.coverage_curve else 0.0,
            "time_to_coverage_0.9": self.time_to_coverage(0.9),
            "nlos_moving_ticks": self.nlos_moving_ticks,
            "frontier_selections": len(self.selections),
            "selections_outside_region": sum(1 for s in self.selections if not s.cells_inside),
            "markers": self.markers,
            "coverage_curve": [[t, round(c, 6)] for t, c in self.coverage_curve],
        }


class _ReplayWriter:
    def __init__(self, path: Path | None):
        self.lines: list[str] = []
        self.path = path

    def record(self, t: float, direction: str, frame: bytes) -> None:
        self.lines.append(f"{t:.3f}\t{direction}\t{frame.decode().rstrip()}")

    def flush(self) -> None:
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("\n".join(self.lines) + "\n")


class _LoopbackLink:
    def __init__(self, server: RobotServer):
        self.server = server
        self._seq = 0

    def send(self, mtype: str, t: float, payload: dict) -> int:
        self._seq += 1
        self.server.submit_envelope("glove", Envelope(type=mtype, seq=self._seq, t=t, payload=payload))
        return self._seq

    def close(self) -> None:
        pass


class _TcpLink:
    """Real-socket command path, kept lockstep: each send blocks until the
    server has ingested the frame, so delivery order matches loopback."""

    def __init__(self, server: RobotServer, port: int):
        self.server = server
        self.client = TcpClient(port=port)
        self._drain = True

    def send(self, mtype: str, t: float, payload: dict) -> int:
        target = self.server.received_count + 1
        seq = self.client.send(mtype, t, payload)
        deadline = time.monotonic() + 5.0
        while self.server.received_count < target:
            if time.monotonic() > deadline:
                raise RuntimeError("command frame did not reach the server in time")
            time.sleep(0.0005)
        return seq

    def close(self) -> None:
        self.client.close()


def run(scenario: Scenario, transport: str = "loopback",
        replay_out: str | Path | None = None) -> MissionMetrics:
    world = load_world(scenario.world_path)
    for pose, who in ((scenario.robot_start, "robot"), (scenario.human_start, "human")):
        if not world.is_open_at(pose.x, pose.y):
            raise ScenarioInvalid(f"{who} start {pose} is not in open space")
    sim = Simulation(world, scenario.robot_start, scenario.human_start,
                     scenario.sim_config, seed=scenario.seed)
    writer = _ReplayWriter(Path(replay_out) if replay_out else None)
    server = RobotServer(sim, on_ingress=lambda rec: writer.record(rec.t, "rx", rec.frame))
    recorder = server.attach("recorder")
    tcp_server = None
    if transport == "tcp":
        tcp_server = TcpServer(server, port=0)
        link = _TcpLink(server, tcp_server.port)
    elif transport == "loopback":
        link = _LoopbackLink(server)
    else:
        raise ScenarioInvalid(f"unknown transport {transport!r}")

    metrics = MissionMetrics(scenario=scenario.name, seed=scenario.seed)
    pending = list(scenario.actions)
    region: CircleRegion | None = None
    max_ticks = int(round(scenario.budget / scenario.sim_config.dt))
    idle_since: float | None = None

    try:
        for _ in range(max_ticks):
            while pending and pending[0].t <= sim.sim_time + 1e-9:
                _fire_action(pending.pop(0), sim, server, link, metrics)
            out = server.tick()
            for line in recorder.drain():
                writer.record(out.t, "tx", line)

            for client, ack, cmd in out.acks:
                metrics.acks.append({
                    "seq": ack.command_seq, "accepted": ack.accepted, "reason": ack.reason,
                    "kind": cmd.kind, "tier": cmd.tier, "t": out.t,
                })
                if ack.accepted and cmd.kind in ("traverse", "return"):
                    goal = sim.executive.active_goal
                    metrics.resolved_goals.append({
                        "kind": cmd.kind, "tier": cmd.tier, "t": out.t,
                        "pose": [goal.x, goal.y, goal.theta],
                        "issue_robot_pose": [out.robot_pose.x, out.robot_pose.y],
                    })
                if ack.accepted and cmd.kind == "explore":
                    region = sim.executive.active_region
            for ev in out.events:
                metrics.events.append({"t": out.t, **_event_dict(ev)})
            if out.selection is not None:
                sel = out.selection
                inside = all(
                    sel.region.contains(*sim.grid.cell_center(ix, iy)) for ix, iy in sel.cells
                )
                metrics.selections.append(SelectionRecord(
                    tick=sel.tick, goal_cell=sel.goal_cell,
                    cells_inside=inside, cell_count=len(sel.cells),
                ))
            for marker in out.new_markers:
                metrics.markers.append({
                    "id": marker.id, "position": list(marker.position),
                    "label": marker.label, "source": marker.source, "t": out.t,
                })

            if scenario.coverage_metric == "keep_in":
                if region is not None:
                    metrics.coverage_curve.append(
                        (out.t, _mission_coverage(sim.grid, region, out.human_pose)))
            else:
                metrics.coverage_curve.append((out.t, coverage(sim.grid)))

            if _is_occluded(world, out.human_pose, out.robot_pose) and \
                    (abs(out.velocity[0]) > 1e-9 or abs(out.velocity[1]) > 1e-9):
                metrics.nlos_moving_ticks += 1

            if scenario.stop_on_idle_after is not None and not pending:
                if out.mode == "IDLE":
                    if idle_since is None:
                        idle_since = out.t
                    elif out.t - idle_since >= scenario.stop_on_idle_after:
                        break
                else:
                    idle_since = None
    finally:
        if tcp_server is not None:
            link.close()
            tcp_server.stop()

    metrics.ticks = sim.tick_index
    metrics.sim_time = sim.sim_time
    metrics.collisions = sim.collisions
    metrics.distance_traveled = sim.distance_traveled
    p = sim.robot.true_pose
    metrics.final_robot_pose = (p.x, p.y, p.theta)
    metrics.final_mode = sim.executive.mode
    metrics.final_map = grid_snapshot(sim.grid, sim.tick_index)
    writer.flush()
    return metrics


def _event_dict(ev) -> dict:
    from .server import _event_payload

    return _event_payload(ev)


def _mission_coverage(grid: OccupancyGrid, region, human_pose: Pose2D) -> float:
    """Keep-in coverage of the static environment. Cells under the teammate's
    body are excluded: the human is a dynamic obstacle, not part of the map to
    be produced, and its silhouette cells flicker as scan tangents move."""
    mask = region_cell_mask(grid, region)
    gx, gy = grid.cell_centers_flat()
    near_human = (gx - human_pose.x) ** 2 + (gy - human_pose.y) ** 2 <= 0.5**2
    mask = mask & ~near_human
    total = int(np.count_nonzero(mask))
    if total == 0:
        return 0.0
    known = int(np.count_nonzero(grid.classes().ravel()[mask] != UNKNOWN))
    return known / total


def _is_occluded(world: WorldMap, a: Pose2D, b: Pose2D) -> bool:
    d = a.distance_to(b)
    if d < 1e-9:
        return False
    angle = math.atan2(b.y - a.y, b.x - a.x)
    try:
        rng, hit = raycast(world, a, angle, d)
    except Exception:
        return False
    return hit and rng < d - 1e-9


def _fire_action(action: Action, sim: Simulation, server: RobotServer, link,
                 metrics: MissionMetrics) -> None:
    if action.op == "command":
        data = action.data
        if "gesture" in data:
            cmd = gesture_to_command(data["gesture"], Pose2D(0, 0, 0), 0)
            kind, tier = cmd.kind, cmd.tier
        else:
            kind, tier = data["kind"], data.get("tier")
        pose = sim.human_pose_in_device_frame()
        payload = {"kind": kind, "human_pose": proto.pose_to_payload(pose), "frame": "human"}
        if tier is not None:
            payload["tier"] = tier
        link.send(proto.COMMAND, sim.sim_time, payload)
        metrics.commands_issued[kind] = metrics.commands_issued.get(kind, 0) + 1
    elif action.op == "haptic":
        link.send(proto.HAPTIC, sim.sim_time, {"pattern": action.data["pattern"]})
        metrics.haptics.append({"t": action.t, "pattern": action.data["pattern"]})
    elif action.op == "align":
        noise = float(action.data.get("noise_sigma", 0.0))
        rng = np.random.default_rng(int(action.data.get("seed", 0)))
        inv = sim.cfg.human_frame.inverse()
        pairs = []
        for px, py in action.data["points"]:
            hx, hy = inv.apply(float(px), float(py))
            if noise > 0:
                hx += rng.normal(0.0, noise)
                hy += rng.normal(0.0, noise)
            pairs.append({"p_human": [hx, hy], "p_robot": [float(px), float(py)]})
        link.send(proto.ALIGN_REQUEST, sim.sim_time, {"pairs": pairs})
    elif action.op == "human_goto":
        tx, ty = action.data["target"]
        sim.human_goto(float(tx), float(ty))
    elif action.op == "human_face":
        if "look_at" in action.data:
            lx, ly = action.data["look_at"]
            p = sim.human.true_pose
            sim.human_face(math.atan2(float(ly) - p.y, float(lx) - p.x))
        else:
            sim.human_face(float(action.data["heading"]))
    elif action.op == "marker":
        d = action.data
        if "world_position" in d:
            # the script names the intended map point; send its human-frame
            # coordinates so the server's alignment has to put it back
            wx, wy = (float(v) for v in d["world_position"])
            position = list(sim.cfg.human_frame.inverse().apply(wx, wy))
            frame = "human"
        else:
            position = [float(v) for v in d["position"]]
            frame = d.get("frame", "robot")
        link.send(proto.MARKER, sim.sim_time, {
            "id": d.get("id"), "position": position,
            "label": d.get("label", ""), "source": d.get("source", "SCRIPTED"),
            "frame": frame,
        })
    else:
        raise ScenarioInvalid(f"unknown action op {action.op!r}")


# ----- assertions -----------------------------------------------------------------


def check_assertions(scenario: Scenario, metrics: MissionMetrics) -> list[tuple[str, bool, str]]:
    results = []
    for a in scenario.asserts:
        ok, detail = _check_one(a, metrics)
        results.append((a.kind, ok, detail))
    return results


def _check_one(a: Assertion, m: MissionMetrics) -> tuple[bool, str]:
    p = a.params
    if a.kind == "zero_collisions":
        return (m.collisions == 0, f"collisions={m.collisions}")
    if a.kind == "final_pose_near_goal":
        idx = int(p["command"]) - 1
        if idx >= len(m.resolved_goals):
            return (False, f"only {len(m.resolved_goals)} resolved goals")
        gx, gy, _ = m.resolved_goals[idx]["pose"]
        fx, fy, _ = m.final_robot_pose
        d = math.hypot(fx - gx, fy - gy)
        return (d <= float(p.get("tol", 0.15)), f"distance={d:.3f}")
    if a.kind == "completion_for_goal":
        idx = int(p["command"]) - 1
        if idx >= len(m.resolved_goals):
            return (False, f"only {len(m.resolved_goals)} resolved goals")
        gx, gy, _ = m.resolved_goals[idx]["pose"]
        for ev in m.events:
            if ev.get("name") == "completion":
                e = ev["goal"]
                if math.hypot(e["x"] - gx, e["y"] - gy) < 1e-6:
                    return (True, f"completed at t={ev['t']}")
        return (False, "no completion event for that goal")
    if a.kind == "halted_between":
        idx = int(p["command"]) - 1
        if idx >= len(m.resolved_goals):
            return (False, f"only {len(m.resolved_goals)} resolved goals")
        goal = m.resolved_goals[idx]
        gx, gy, _ = goal["pose"]
        sx, sy = goal["issue_robot_pose"]
        fx, fy, _ = m.final_robot_pose
        margin = float(p.get("margin", 0.2))
        d_start = math.hypot(fx - sx, fy - sy)
        d_goal = math.hypot(fx - gx, fy - gy)
        ok = d_start > margin and d_goal > margin
        return (ok, f"from_start={d_start:.2f} to_goal={d_goal:.2f}")
    if a.kind == "coverage_at_least":
        target = float(p["value"])
        by = p.get("by")
        reached = m.time_to_coverage(target)
        if reached is None:
            final = m.coverage_curve[-1][1] if m.coverage_curve else 0.0
            return (False, f"final coverage {final:.3f} < {target}")
        if by is not None and reached > float(by):
            return (False, f"reached {target} at t={reached} > {by}")
        return (True, f"reached {target} at t={reached}")
    if a.kind == "time_to_coverage_finite":
        t = m.time_to_coverage(float(p["value"]))
        return (t is not None, f"time_to_coverage={t}")
    if a.kind == "monotone_coverage":
        for (t0, c0), (t1, c1) in zip(m.coverage_curve, m.coverage_curve[1:]):
            if c1 < c0 - 1e-9:
                return (False, f"coverage dropped {c0:.4f} -> {c1:.4f} at t={t1}")
        return (True, f"{len(m.coverage_curve)} samples non-decreasing")
    if a.kind == "keep_in_sound":
        bad = sum(1 for s in m.selections if not s.cells_inside)
        return (bad == 0, f"{len(m.selections)} selections, {bad} outside")
    if a.kind == "nlos_tick_exists":
        return (m.nlos_moving_ticks > 0, f"nlos_moving_ticks={m.nlos_moving_ticks}")
    if a.kind == "marker_at":
        for marker in m.markers:
            if marker["id"] == p["id"]:
                mx, my = marker["position"]
                d = math.hypot(mx - float(p["x"]), my - float(p["y"]))
                return (d <= float(p.get("tol", 0.05)), f"distance={d:.4f}")
        return (False, f"marker {p['id']!r} not broadcast")
    if a.kind == "ack":
        idx = int(p["command"]) - 1
        if idx >= len(m.acks):
            return (False, f"only {len(m.acks)} acks")
        ack = m.acks[idx]
        if bool(p.get("accepted", True)) != ack["accepted"]:
            return (False, f"ack={ack}")
        if "reason" in p and ack["reason"] != p["reason"]:
            return (False, f"ack={ack}")
        return (True, f"ack={ack['reason']}")
    if a.kind == "final_mode":
        return (m.final_mode == p["mode"], f"final_mode={m.final_mode}")
    if a.kind == "min_commands":
        n = sum(m.commands_issued.values())
        return (n >= int(p["count"]), f"commands={n}")
    return (False, f"unknown assertion kind {a.kind!r}")


def report(metrics: MissionMetrics, results: list[tuple[str, bool, str]] | None = None) -> str:
    lines = [f"scenario {metrics.scenario} (seed {metrics.seed})"]
    lines.append(f"  ticks={metrics.ticks} sim_time={metrics.sim_time:.1f}s "
                 f"distance={metrics.distance_traveled:.2f}m collisions={metrics.collisions}")
    lines.append(f"  commands: " + (", ".join(
        f"{k}={v}" for k, v in sorted(metrics.commands_issued.items())) or "none"))
    if metrics.coverage_curve:
        lines.append("  coverage curve (t, fraction):")
        curve = metrics.coverage_curve
        step_idx = max(1, len(curve) // 10)
        for i in range(0, len(curve), step_idx):
            t, c = curve[i]
            lines.append(f"    {t:8.1f}  {c:.3f}")
        t, c = curve[-1]
        lines.append(f"    {t:8.1f}  {c:.3f}  (final)")
        t90 = metrics.time_to_coverage(0.9)
        lines.append(f"  time_to_coverage(0.9) = {t90 if t90 is not None else 'never'}")
    for ev in metrics.events:
        lines.append(f"  event t={ev['t']:.1f}: {ev['name']}")
    if results:
        for kind, ok, detail in results:
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {kind}: {detail}")
    return "\n".join(lines)
