#!/usr/bin/env python3
"""Regenerate the browser console's test fixtures.

Runs a mission that exercises everything the console must render: a medium
traverse through a doorway (so the robot goes out of the operator's sight),
an explore with a keep-in disc, and two markers. Writes the replay log plus
the robot's exported class layer as the golden reference the console's
reconstruction must match cell for cell.
"""
from __future__ import annotations

import json
from pathlib import Path

from teamsim.geometry import Pose2D
from teamsim.harness import Action, Assertion, Scenario, check_assertions, run
from teamsim.runtime import SimConfig
from teamsim.world import LidarConfig

REPO = Path(__file__).resolve().parent.parent
OUT = REPO / "frontend" / "test" / "fixtures"


def main() -> None:
    scenario = Scenario(
        name="console_fixture",
        world_path=REPO / "worlds" / "sparse_office.world",
        robot_start=Pose2D(4.0, 3.8, 0.0),
        human_start=Pose2D(3.0, 7.0, 0.0),
        budget=60.0,
        seed=23,
        actions=[
            Action(1.0, "command", {"kind": "explore", "tier": "medium"}),
            Action(4.0, "marker", {"id": "obj1", "position": [9.0, 5.0],
                                   "label": "crate", "source": "SCRIPTED"}),
            Action(25.0, "command", {"kind": "stop"}),
            Action(26.0, "marker", {"id": "obj2", "position": [4.0, 12.0],
                                    "label": "door", "source": "MANUAL"}),
            Action(27.0, "command", {"kind": "traverse", "tier": "medium"}),
        ],
        asserts=[Assertion("zero_collisions", {}),
                 Assertion("ack", {"command": 3, "accepted": True})],
        sim_config=SimConfig(lidar=LidarConfig(beam_count=360)),
        stop_on_idle_after=2.0,
    )
    OUT.mkdir(parents=True, exist_ok=True)
    metrics = run(scenario, replay_out=OUT / "mission.log")
    results = check_assertions(scenario, metrics)
    assert all(ok for _, ok, _ in results), results
    golden = {
        "width": metrics.final_map["width"],
        "height": metrics.final_map["height"],
        "resolution": metrics.final_map["resolution"],
        "rle": metrics.final_map["rle"],
        "final_robot_pose": [round(v, 9) for v in metrics.final_robot_pose],
        "markers": {m["id"]: m["position"] for m in metrics.markers},
    }
    (OUT / "golden_map.json").write_text(json.dumps(golden) + "\n")
    print(f"wrote {OUT / 'mission.log'} ({metrics.ticks} ticks) and golden_map.json")
    print(f"acks: {[(a['kind'], a['reason']) for a in metrics.acks]}")


if __name__ == "__main__":
    main()
