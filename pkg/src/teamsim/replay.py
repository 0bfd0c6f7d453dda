"""Offline reconstruction of the operator view from a recorded frame stream.

Mirrors the browser console's rules: state is rebuilt purely from the stream
(snapshot plus diffs), with no client-side simulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import protocol as proto
from .mapping import rle_decode
from .protocol import DecodeError, Envelope, decode


def ack_overlay_text(kind: str, tier: str | None) -> str:
    """Command text shown in the operator view, e.g. 'goto medium'."""
    word = {"traverse": "goto"}.get(kind, kind)
    return f"{word} {tier}" if tier else word


@dataclass
class ViewState:
    width: int = 0
    height: int = 0
    resolution: float = 0.0
    origin: tuple[float, float] = (0.0, 0.0)
    classes: np.ndarray | None = None  # flat, row-major
    robot_pose: tuple[float, float, float] | None = None
    robot_mode: str = "IDLE"
    human_pose: tuple[float, float, float] | None = None
    path: list[tuple[float, float]] = field(default_factory=list)
    region: dict | None = None
    markers: dict[str, dict] = field(default_factory=dict)
    last_command_text: str = ""
    last_haptic: str = ""
    events: list[dict] = field(default_factory=list)
    frames_seen: int = 0


class ViewStateReconstructor:
    def __init__(self):
        self.state = ViewState()

    def feed(self, env: Envelope) -> None:
        s = self.state
        s.frames_seen += 1
        p = env.payload
        if env.type == proto.MAP_SNAPSHOT:
            s.width = int(p["width"])
            s.height = int(p["height"])
            s.resolution = float(p["resolution"])
            s.origin = (float(p["origin"]["x"]), float(p["origin"]["y"]))
            s.classes = rle_decode(p["rle"], s.width * s.height)
        elif env.type == proto.MAP_DIFF:
            if s.classes is not None:
                for idx, cls in p["changed"]:
                    s.classes[idx] = cls
        elif env.type == proto.TELEMETRY:
            rp = p["robot"]["pose"]
            s.robot_pose = (rp["x"], rp["y"], rp["theta"])
            s.robot_mode = p["robot"].get("mode", "IDLE")
            hp = p["human"]["pose"]
            s.human_pose = (hp["x"], hp["y"], hp["theta"])
        elif env.type == proto.PATH:
            s.path = [(wp[0], wp[1]) for wp in p["waypoints"]]
        elif env.type == proto.FRONTIERS:
            s.region = p.get("region")
        elif env.type == proto.MARKER:
            s.markers[p["id"]] = dict(p)
        elif env.type == proto.ACK:
            if p.get("accepted"):
                cmd = p.get("command", {})
                s.last_command_text = ack_overlay_text(cmd.get("kind", "?"), cmd.get("tier"))
        elif env.type == proto.HAPTIC:
            s.last_haptic = p.get("pattern", "")
        elif env.type == proto.EVENT:
            s.events.append(dict(p))


@dataclass
class ReplayRecord:
    t: float
    direction: str  # rx | tx
    frame: str


def load_replay(path: str | Path) -> list[ReplayRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        t_str, direction, frame = line.split("\t", 2)
        records.append(ReplayRecord(t=float(t_str), direction=direction, frame=frame))
    return records


def replay_stream(path: str | Path) -> tuple[ViewState, int]:
    """Feed every robot-to-console frame through the codec and the view
    reconstructor; returns the final view and the decode error count."""
    recon = ViewStateReconstructor()
    errors = 0
    for rec in load_replay(path):
        if rec.direction != "tx":
            continue
        try:
            env = decode(rec.frame + "\n")
        except DecodeError:
            errors += 1
            continue
        recon.feed(env)
    return recon.state, errors
