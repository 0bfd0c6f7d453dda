import math

import numpy as np
import pytest

from teamsim.executive import (
    ACK_OK,
    ACK_STALE,
    ACK_UNREACHABLE,
    Command,
    CommandConfig,
    CompletionEvent,
    Executive,
    ExplorationCompleteEvent,
    MarkerExists,
    gesture_to_command,
    resolve_goal,
)
from teamsim.geometry import CircleRegion, Pose2D
from teamsim.gesture import Gesture
from teamsim.mapping import L_FREE, OccupancyGrid
from teamsim.planning import InflatedCostmap
from teamsim.runtime import SimConfig, Simulation
from teamsim.world import LidarConfig

from conftest import empty_room


def open_grid(n=50, resolution=0.2) -> OccupancyGrid:
    grid = OccupancyGrid(resolution=resolution, width=n, height=n)
    grid.log_odds[:, :] = 10 * L_FREE
    grid.log_odds[0, :] = 10.0
    grid.log_odds[-1, :] = 10.0
    grid.log_odds[:, 0] = 10.0
    grid.log_odds[:, -1] = 10.0
    return grid


def warm_sim(size=10.0, robot=(3.0, 3.0, 0.0), human=(1.5, 1.5, 0.0), seed=0,
             beam_count=180):
    world = empty_room(size, 0.2)
    sim = Simulation(world, Pose2D(*robot), Pose2D(*human),
                     SimConfig(lidar=LidarConfig(beam_count=beam_count)), seed=seed)
    for _ in range(3):
        sim.tick()
    return sim


# ----- goal geometry -----------------------------------------------------------


def test_traverse_near_example():
    cmd = Command("traverse", Pose2D(0.0, 0.0, 0.0), 1, tier="near")
    goal = resolve_goal(cmd, CommandConfig())
    assert (goal.x, goal.y, goal.theta) == (2.0, 0.0, 0.0)


def test_explore_medium_example():
    cmd = Command("explore", Pose2D(0.0, 0.0, math.pi / 2), 1, tier="medium")
    region = resolve_goal(cmd, CommandConfig())
    assert isinstance(region, CircleRegion)
    assert region.center == pytest.approx((0.0, 15.0), abs=1e-12)
    assert region.radius == 15.0


def test_return_offset_example():
    cmd = Command("return", Pose2D(3.0, 0.0, 0.0), 1)
    goal = resolve_goal(cmd, CommandConfig())
    assert (goal.x, goal.y) == pytest.approx((4.0, 0.0), abs=1e-12)
    assert goal.theta == pytest.approx(math.pi)


def test_config_is_field_reconfigurable():
    cfg = CommandConfig(traverse_distances={"near": 10.0, "medium": 100.0, "far": 1000.0})
    cmd = Command("traverse", Pose2D(0.0, 0.0, 0.0), 1, tier="far")
    assert resolve_goal(cmd, cfg).x == 1000.0


def test_gesture_to_command_mapping():
    pose = Pose2D(1.0, 2.0, 0.3)
    assert gesture_to_command(Gesture("traverse_point", 2), pose, 5).tier == "medium"
    assert gesture_to_command(Gesture("explore_oscillate", 3), pose, 5).kind == "explore"
    assert gesture_to_command(Gesture("stop_palm"), pose, 5).kind == "stop"
    assert gesture_to_command(Gesture("return_sign"), pose, 5).kind == "return"
    assert gesture_to_command(Gesture("unrecognized"), pose, 5) is None


def test_command_validates_tier():
    with pytest.raises(ValueError):
        Command("traverse", Pose2D(0, 0, 0), 1)
    with pytest.raises(ValueError):
        Command("stop", Pose2D(0, 0, 0), 1, tier="near")


# ----- command handling -----------------------------------------------------------


def test_stale_seq_rejected():
    ex = Executive()
    grid = open_grid()
    cm = InflatedCostmap(grid)
    robot = Pose2D(3.0, 3.0, 0.0)
    a1 = ex.handle_command(Command("stop", Pose2D(1, 1, 0), 5), grid, cm, robot_pose=robot)
    assert a1.accepted
    a2 = ex.handle_command(Command("stop", Pose2D(1, 1, 0), 5), grid, cm, robot_pose=robot)
    assert not a2.accepted and a2.reason == ACK_STALE
    a3 = ex.handle_command(Command("stop", Pose2D(1, 1, 0), 4), grid, cm, robot_pose=robot)
    assert not a3.accepted
    # independent clients have independent sequence spaces
    a4 = ex.handle_command(Command("stop", Pose2D(1, 1, 0), 1), grid, cm,
                           client="other", robot_pose=robot)
    assert a4.accepted


def test_unreachable_goal_keeps_previous_behavior():
    ex = Executive()
    grid = open_grid()
    cm = InflatedCostmap(grid)
    robot = Pose2D(3.0, 3.0, 0.0)
    ok = ex.handle_command(Command("traverse", Pose2D(3.0, 3.0, 0.0), 1, tier="near"),
                           grid, cm, robot_pose=robot)
    assert ok.accepted and ex.mode == "TRAVERSING"
    goal_before = ex.active_goal
    # a goal through the border wall cannot be planned
    bad = ex.handle_command(Command("traverse", Pose2D(9.0, 9.0, 0.0), 2, tier="far"),
                            grid, cm, robot_pose=robot)
    assert not bad.accepted and bad.reason == ACK_UNREACHABLE
    assert ex.mode == "TRAVERSING" and ex.active_goal == goal_before


def test_stop_preempts_to_zero_velocity_next_tick():
    sim = warm_sim()
    sim.tick([("c", Command("traverse", Pose2D(1.5, 1.5, 0.0), 1, tier="far"))])
    assert sim.executive.mode == "TRAVERSING"
    # let it get moving
    moving = False
    for _ in range(5):
        out = sim.tick()
        moving = moving or abs(out.velocity[0]) > 0
    assert moving
    out = sim.tick([("c", Command("stop", Pose2D(1.5, 1.5, 0.0), 2))])
    assert out.acks[0][1].accepted
    assert sim.executive.mode == "IDLE"
    assert out.velocity == (0.0, 0.0)  # same tick already idle
    out = sim.tick()
    assert out.velocity == (0.0, 0.0)


def test_return_then_stop_reposition_pattern():
    # 10.5 m standoff keeps every cell within the lidar's angular resolution
    sim = warm_sim(size=16.0, robot=(12.0, 8.0, math.pi), human=(1.5, 8.0, 0.0), seed=1,
                   beam_count=360)
    out = sim.tick([("c", Command("return", Pose2D(1.5, 8.0, 0.0), 1))])
    assert out.acks[0][1].accepted
    start_x = sim.robot.true_pose.x
    for _ in range(40):  # 4 s of travel
        sim.tick()
    out = sim.tick([("c", Command("stop", Pose2D(1.5, 8.0, 0.0), 2))])
    assert out.acks[0][1].accepted
    halt = sim.robot.true_pose
    goal = Pose2D(2.5, 8.0, 0.0)
    assert halt.x < start_x - 0.5  # made progress toward the human
    assert halt.distance_to(goal) > 0.5  # but was stopped short
    assert sim.executive.mode == "IDLE"


def test_new_command_replaces_active_behavior():
    sim = warm_sim()
    sim.tick([("c", Command("explore", Pose2D(1.5, 1.5, 0.5), 1, tier="near"))])
    assert sim.executive.mode == "EXPLORING"
    assert sim.executive.active_region is not None
    sim.tick([("c", Command("traverse", Pose2D(1.5, 1.5, 0.0), 2, tier="near"))])
    assert sim.executive.mode == "TRAVERSING"
    assert sim.executive.active_region is None
    assert sim.executive.active_goal is not None


def test_mode_idle_means_zero_velocity_and_no_goal():
    ex = Executive()
    grid = open_grid()
    cm = InflatedCostmap(grid)
    result = ex.tick(grid, cm, Pose2D(3.0, 3.0, 0.0), 0.1)
    assert result.velocity == (0.0, 0.0)
    assert ex.active_goal is None and ex.active_region is None


def test_completion_event_on_arrival():
    sim = warm_sim()
    sim.tick([("c", Command("traverse", Pose2D(1.5, 1.5, 0.0), 1, tier="near"))])
    events = []
    for _ in range(100):
        events.extend(sim.tick().events)
        if sim.executive.mode == "IDLE":
            break
    comp = [e for e in events if isinstance(e, CompletionEvent)]
    assert len(comp) == 1 and comp[0].behavior == "traverse"
    assert sim.robot.true_pose.distance_to(comp[0].goal) < 0.2


def test_explore_fully_mapped_region_completes_within_a_tick():
    ex = Executive()
    grid = open_grid()  # every cell classified, no frontier anywhere
    cm = InflatedCostmap(grid)
    ack = ex.handle_command(Command("explore", Pose2D(3.0, 3.0, 0.8), 1, tier="near"),
                            grid, cm, robot_pose=Pose2D(3.0, 3.0, 0.0))
    assert ack.accepted and ex.mode == "EXPLORING"
    result = ex.tick(grid, cm, Pose2D(3.0, 3.0, 0.0), 0.1)
    assert any(isinstance(e, ExplorationCompleteEvent) for e in result.events)
    assert ex.mode == "IDLE"


def test_single_behavior_invariant_through_random_interleaving():
    rng = np.random.default_rng(0)
    sim = warm_sim()
    seq = 0
    for k in range(60):
        cmds = []
        if rng.random() < 0.3:
            seq += 1
            kind = rng.choice(["traverse", "explore", "return", "stop"])
            tier = rng.choice(["near", "medium", "far"]) if kind in ("traverse", "explore") else None
            cmds.append(("c", Command(kind, Pose2D(1.5, 1.5, rng.uniform(-3, 3)), seq,
                                      tier=tier)))
        sim.tick(cmds)
        ex = sim.executive
        assert (ex.active_region is not None) == (ex.mode == "EXPLORING")
        assert (ex.active_goal is not None) == (ex.mode in ("TRAVERSING", "RETURNING"))


# ----- markers --------------------------------------------------------------------


def test_marker_add_and_idempotent_same_content():
    ex = Executive()
    m1 = ex.add_marker((5.0, 5.0), "barrel", "SCRIPTED", "obj1")
    m2 = ex.add_marker((5.0, 5.0), "barrel", "SCRIPTED", "obj1")
    assert m1 == m2 and len(ex.markers) == 1


def test_marker_conflicting_content_raises():
    ex = Executive()
    ex.add_marker((5.0, 5.0), "barrel", "SCRIPTED", "obj1")
    with pytest.raises(MarkerExists):
        ex.add_marker((6.0, 5.0), "barrel", "SCRIPTED", "obj1")


def test_marker_requires_finite_position():
    ex = Executive()
    with pytest.raises(ValueError):
        ex.add_marker((math.inf, 0.0), "x", "MANUAL")


def test_marker_auto_ids_unique():
    ex = Executive()
    a = ex.add_marker((1.0, 1.0), "a", "MANUAL")
    b = ex.add_marker((2.0, 2.0), "b", "MANUAL")
    assert a.id != b.id
