"""Wire protocol: newline-delimited JSON envelopes and SE(2) frame alignment.

Field-by-field payload schemas live in PROTOCOL.md at the repository root.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .geometry import Pose2D, Transform2D, normalize_angle

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 1 << 20

COMMAND = "COMMAND"
ACK = "ACK"
TELEMETRY = "TELEMETRY"
MAP_DIFF = "MAP_DIFF"
MAP_SNAPSHOT = "MAP_SNAPSHOT"
PATH = "PATH"
FRONTIERS = "FRONTIERS"
MARKER = "MARKER"
EVENT = "EVENT"
ALIGN_REQUEST = "ALIGN_REQUEST"
ALIGN_RESULT = "ALIGN_RESULT"
HAPTIC = "HAPTIC"

MESSAGE_TYPES = frozenset({
    COMMAND, ACK, TELEMETRY, MAP_DIFF, MAP_SNAPSHOT, PATH, FRONTIERS,
    MARKER, EVENT, ALIGN_REQUEST, ALIGN_RESULT, HAPTIC,
})


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class FrameTooLarge(ValueError):
    pass


class AlignmentDegenerate(ValueError):
    pass


@dataclass(frozen=True)
class Envelope:
    type: str
    seq: int
    t: float
    payload: dict
    v: int = PROTOCOL_VERSION


def encode(env: Envelope) -> bytes:
    """One envelope per line; compact separators keep frames small."""
    if env.type not in MESSAGE_TYPES:
        raise ValueError(f"unknown envelope type {env.type!r}")
    frame = json.dumps(
        {"v": env.v, "type": env.type, "seq": env.seq, "t": env.t, "payload": env.payload},
        separators=(",", ":"),
    ).encode() + b"\n"
    if len(frame) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame is {len(frame)} bytes (cap {MAX_FRAME_BYTES})")
    return frame


def decode(data: bytes | str) -> Envelope:
    """Parse one frame. Unknown top-level keys are ignored so newer peers can
    add fields; an unknown type rejects the frame but not the connection."""
    if isinstance(data, bytes):
        if len(data) > MAX_FRAME_BYTES:
            raise FrameTooLarge(f"frame is {len(data)} bytes (cap {MAX_FRAME_BYTES})")
        text = data.decode("utf-8", errors="strict")
    else:
        text = data
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise DecodeError(f"bad JSON: {e.msg}", offset=e.pos) from e
    if not isinstance(obj, dict):
        raise DecodeError("frame is not an object")
    try:
        mtype = obj["type"]
        seq = obj["seq"]
        t = obj["t"]
        payload = obj["payload"]
        version = obj.get("v", PROTOCOL_VERSION)
    except KeyError as e:
        raise DecodeError(f"missing field {e.args[0]!r}") from e
    if mtype not in MESSAGE_TYPES:
        raise DecodeError(f"unknown message type {mtype!r}")
    if not isinstance(seq, int) or not isinstance(payload, dict):
        raise DecodeError("seq must be an int and payload an object")
    return Envelope(type=mtype, seq=seq, t=float(t), payload=payload, v=int(version))


# ----- pose payload helpers -----------------------------------------------------

def pose_to_payload(pose: Pose2D) -> dict:
    return {"x": pose.x, "y": pose.y, "theta": pose.theta}


def pose_from_payload(obj: dict) -> Pose2D:
    return Pose2D(float(obj["x"]), float(obj["y"]), float(obj.get("theta", 0.0)))


def transform_to_payload(t: Transform2D) -> dict:
    return {"rotation": t.rotation, "translation": [t.translation[0], t.translation[1]]}


def transform_from_payload(obj: dict) -> Transform2D:
    tx, ty = obj["translation"]
    return Transform2D(float(obj["rotation"]), (float(tx), float(ty)))


# ----- frame alignment -----------------------------------------------------------

def estimate_alignment(
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]
) -> tuple[Transform2D, float]:
    """Closed-form least-squares SE(2) fit of human-frame points onto robot-frame
    points: demean both sets, rotation from the atan2 of the cross/dot
    correlation sums, translation from the rotated centroids. Returns the
    transform and the RMS residual in meters.
    """
    if len(pairs) < 2:
        raise AlignmentDegenerate("need at least 2 correspondence pairs")
    hx = [p[0][0] for p in pairs]
    hy = [p[0][1] for p in pairs]
    rx = [p[1][0] for p in pairs]
    ry = [p[1][1] for p in pairs]
    n = len(pairs)
    hcx, hcy = sum(hx) / n, sum(hy) / n
    rcx, rcy = sum(rx) / n, sum(ry) / n
    if all(math.hypot(x - hcx, y - hcy) < 1e-12 for x, y in zip(hx, hy)):
        raise AlignmentDegenerate("all human-frame points coincide")
    s_cross = 0.0
    s_dot = 0.0
    for i in range(n):
        ax, ay = hx[i] - hcx, hy[i] - hcy
        bx, by = rx[i] - rcx, ry[i] - rcy
        s_cross += ax * by - ay * bx
        s_dot += ax * bx + ay * by
    rotation = math.atan2(s_cross, s_dot)
    c, s = math.cos(rotation), math.sin(rotation)
    t = Transform2D(
        normalize_angle(rotation),
        (rcx - (c * hcx - s * hcy), rcy - (s * hcx + c * hcy)),
    )
    sq_sum = 0.0
    for i in range(n):
        px, py = t.apply(hx[i], hy[i])
        sq_sum += (px - rx[i]) ** 2 + (py - ry[i]) ** 2
    return t, math.sqrt(sq_sum / n)


def correspondences_from_payload(obj: dict) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    pairs = []
    for item in obj["pairs"]:
        ph = item["p_human"]
        pr = item["p_robot"]
        pairs.append(((float(ph[0]), float(ph[1])), (float(pr[0]), float(pr[1]))))
    return pairs
