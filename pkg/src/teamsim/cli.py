"""teamsim command line: run scenarios, replay logs, report summaries, serve live."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .geometry import Pose2D
from .harness import check_assertions, load_scenario, report, run
from .replay import replay_stream
from .runtime import SimConfig, Simulation
from .server import DEFAULT_PORT, DEFAULT_WS_PORT, RobotServer, TcpServer, WsGateway
from .world import load_world


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, seed_override=args.seed)
    metrics = run(scenario, transport=args.transport, replay_out=args.replay_out)
    results = check_assertions(scenario, metrics)
    print(report(metrics, results))
    if args.summary_out:
        Path(args.summary_out).write_text(
            json.dumps(metrics.summary(), sort_keys=True, indent=2) + "\n")
    return 0 if all(ok for _, ok, _ in results) else 1


def _cmd_replay(args) -> int:
    state, errors = replay_stream(args.file)
    known = 0
    if state.classes is not None:
        known = int((state.classes != 0).sum())
    print(f"frames={state.frames_seen} decode_errors={errors}")
    print(f"map: {state.width}x{state.height} cells, {known} classified")
    if state.robot_pose:
        x, y, theta = state.robot_pose
        print(f"final robot pose: ({x:.3f}, {y:.3f}, {theta:.3f}) mode={state.robot_mode}")
    print(f"markers={len(state.markers)} last_command={state.last_command_text!r}")
    return 0 if errors == 0 else 1


def _cmd_report(args) -> int:
    summary = json.loads(Path(args.file).read_text())
    for key in ("scenario", "seed", "ticks", "sim_time", "collisions",
                "distance_traveled", "final_mode", "coverage_final",
                "time_to_coverage_0.9"):
        if key in summary:
            print(f"{key}: {summary[key]}")
    print("commands:", summary.get("commands_issued", {}))
    for ev in summary.get("events", []):
        print(f"event t={ev.get('t')}: {ev.get('name')}")
    return 0


def _cmd_serve(args) -> int:
    world = load_world(args.world)
    robot = Pose2D(*args.robot)
    human = Pose2D(*args.human)
    sim = Simulation(world, robot, human, SimConfig(), seed=args.seed)
    server = RobotServer(sim)
    tcp = TcpServer(server, port=args.port)
    gateway = WsGateway(server, port=args.ws_port)
    dt = sim.cfg.dt
    print(f"serving world {args.world}: tcp :{tcp.port}, websocket :{gateway.port}, "
          f"tick {dt}s (ctrl-c to stop)")
    try:
        next_t = time.monotonic()
        while True:
            server.tick()
            next_t += dt
            delay = next_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    except KeyboardInterrupt:
        pass
    finally:
        tcp.stop()
        gateway.stop()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teamsim")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a scenario headlessly")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--transport", choices=["loopback", "tcp"], default="loopback")
    p_run.add_argument("--replay-out", default=None)
    p_run.add_argument("--summary-out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="re-render a replay log offline")
    p_replay.add_argument("file")
    p_replay.set_defaults(func=_cmd_replay)

    p_report = sub.add_parser("report", help="print a run summary")
    p_report.add_argument("file")
    p_report.set_defaults(func=_cmd_report)

    p_serve = sub.add_parser("serve", help="run a live server for the browser console")
    p_serve.add_argument("--world", required=True)
    p_serve.add_argument("--robot", type=float, nargs=3, default=[2.0, 2.0, 0.0],
                         metavar=("X", "Y", "THETA"))
    p_serve.add_argument("--human", type=float, nargs=3, default=[1.0, 1.0, 0.0],
                         metavar=("X", "Y", "THETA"))
    p_serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    p_serve.add_argument("--ws-port", type=int, default=DEFAULT_WS_PORT)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
