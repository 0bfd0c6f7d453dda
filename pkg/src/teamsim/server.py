"""Robot server: command ingestion, telemetry fan-out, and socket transports."""
from __future__ import annotations

import socket
import threading
from collections import deque
from dataclasses import dataclass

from . import protocol as proto
from .executive import (
    Ack,
    Command,
    CompletionEvent,
    ExplorationCompleteEvent,
    GoalAbandonedEvent,
    MarkerExists,
)
from .geometry import CircleRegion, PolygonRegion, Transform2D
from .mapping import snapshot as grid_snapshot
from .protocol import Envelope, decode, encode
from .runtime import Simulation, TickOutput

DEFAULT_PORT = 7701
DEFAULT_WS_PORT = 7702
SUBSCRIBER_BUFFER = 1024


class Subscriber:
    """Per-connection outbound buffer. When full, the oldest MAP_DIFF is dropped
    first; commands, acks, and events are never dropped (consoles resynchronize
    through a fresh snapshot instead)."""

    def __init__(self, sub_id: str, max_buffer: int = SUBSCRIBER_BUFFER):
        self.id = sub_id
        self.max_buffer = max_buffer
        self._buf: deque[bytes] = deque()
        self._types: deque[str] = deque()
        self._cond = threading.Condition()
        self._seq = 0
        self.closed = False

    def offer(self, mtype: str, t: float, payload: dict) -> None:
        with self._cond:
            if self.closed:
                return
            if len(self._buf) >= self.max_buffer:
                for i, existing in enumerate(self._types):
                    if existing == proto.MAP_DIFF:
                        del self._buf[i]
                        del self._types[i]
                        break
            self._seq += 1
            env = Envelope(type=mtype, seq=self._seq, t=t, payload=payload)
            self._buf.append(encode(env))
            self._types.append(mtype)
            self._cond.notify_all()

    def pop(self, timeout: float | None = None) -> bytes | None:
        with self._cond:
            if not self._buf:
                self._cond.wait(timeout)
            if not self._buf:
                return None
            self._types.popleft()
            return self._buf.popleft()

    def drain(self) -> list[bytes]:
        with self._cond:
            out = list(self._buf)
            self._buf.clear()
            self._types.clear()
            return out

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()


def _region_payload(region) -> dict | None:
    if region is None:
        return None
    if isinstance(region, CircleRegion):
        return {"shape": "circle", "center": [region.center[0], region.center[1]],
                "radius": region.radius}
    if isinstance(region, PolygonRegion):
        return {"shape": "polygon", "vertices": [[x, y] for x, y in region.vertices]}
    raise TypeError(f"unsupported region {type(region)!r}")


def _event_payload(event) -> dict:
    if isinstance(event, CompletionEvent):
        return {"name": "completion", "behavior": event.behavior,
                "goal": proto.pose_to_payload(event.goal), "tick": event.tick}
    if isinstance(event, ExplorationCompleteEvent):
        return {"name": "exploration_complete", "tick": event.tick}
    if isinstance(event, GoalAbandonedEvent):
        return {"name": "goal_abandoned", "goal": proto.pose_to_payload(event.goal),
                "tick": event.tick}
    return {"name": type(event).__name__}


@dataclass
class IngressRecord:
    t: float
    client: str
    frame: bytes


class RobotServer:
    """Serializes inbound command frames into the executive and fans telemetry
    out to every subscriber. New subscribers receive a MAP_SNAPSHOT first."""

    def __init__(self, sim: Simulation, on_ingress=None):
        self.sim = sim
        self._inbound: deque[tuple[str, Envelope, bytes]] = deque()
        self._lock = threading.Lock()
        self.subscribers: list[Subscriber] = []
        self.alignment: Transform2D | None = None
        self.on_ingress = on_ingress
        self.received_count = 0
        self._sub_auto = 0
        self._dispatch_markers: list = []

    # -- ingestion -----------------------------------------------------------

    def submit_frame(self, client: str, data: bytes) -> None:
        env = decode(data)  # DecodeError propagates to the transport, which skips the frame
        with self._lock:
            self._inbound.append((client, env, data if isinstance(data, bytes) else data.encode()))
            self.received_count += 1

    def submit_envelope(self, client: str, env: Envelope) -> None:
        with self._lock:
            self._inbound.append((client, env, encode(env)))
            self.received_count += 1

    # -- subscriptions ---------------------------------------------------------

    def attach(self, sub_id: str | None = None) -> Subscriber:
        if sub_id is None:
            self._sub_auto += 1
            sub_id = f"sub{self._sub_auto}"
        sub = Subscriber(sub_id)
        sub.offer(proto.MAP_SNAPSHOT, self.sim.sim_time, grid_snapshot(self.sim.grid, self.sim.tick_index))
        for marker in self.sim.executive.markers.values():
            sub.offer(proto.MARKER, self.sim.sim_time, self._marker_payload(marker))
        with self._lock:
            self.subscribers.append(sub)
        return sub

    def detach(self, sub: Subscriber) -> None:
        sub.close()
        with self._lock:
            if sub in self.subscribers:
                self.subscribers.remove(sub)

    def _broadcast(self, mtype: str, payload: dict) -> None:
        t = self.sim.sim_time
        with self._lock:
            subs = list(self.subscribers)
        for sub in subs:
            sub.offer(mtype, t, payload)

    @staticmethod
    def _marker_payload(marker) -> dict:
        return {"id": marker.id, "position": [marker.position[0], marker.position[1]],
                "label": marker.label, "source": marker.source}

    # -- per-tick processing ---------------------------------------------------

    def _to_map_frame(self, payload_pose: dict, frame: str):
        pose = proto.pose_from_payload(payload_pose)
        if frame == "human":
            t = self.alignment if self.alignment is not None else Transform2D.identity()
            return t.apply_pose(pose)
        return pose

    def _dispatch(self, client: str, env: Envelope, raw: bytes) -> list[tuple[str, Command]]:
        if self.on_ingress is not None:
            self.on_ingress(IngressRecord(self.sim.sim_time, client, raw))
        p = env.payload
        if env.type == proto.COMMAND:
            pose = self._to_map_frame(p["human_pose"], p.get("frame", "human"))
            cmd = Command(kind=p["kind"], human_pose=pose, seq=env.seq, tier=p.get("tier"))
            return [(client, cmd)]
        if env.type == proto.ALIGN_REQUEST:
            try:
                transform, residual = proto.estimate_alignment(proto.correspondences_from_payload(p))
            except proto.AlignmentDegenerate as e:
                self._broadcast(proto.ALIGN_RESULT, {"ok": False, "error": str(e)})
                return []
            self.alignment = transform
            payload = proto.transform_to_payload(transform)
            payload.update({"ok": True, "residual": residual})
            self._broadcast(proto.ALIGN_RESULT, payload)
            return []
        if env.type == proto.MARKER:
            x, y = p["position"]
            if p.get("frame", "robot") == "human":
                t = self.alignment if self.alignment is not None else Transform2D.identity()
                x, y = t.apply(float(x), float(y))
            try:
                marker = self.sim.executive.add_marker(
                    (float(x), float(y)), p.get("label", ""), p.get("source", "MANUAL"),
                    p.get("id"))
            except MarkerExists:
                return []
            self._dispatch_markers.append(marker)
            return []
        if env.type == proto.HAPTIC:
            self._broadcast(proto.HAPTIC, dict(p))
            return []
        return []

    def tick(self) -> TickOutput:
        with self._lock:
            pending = list(self._inbound)
            self._inbound.clear()
        commands: list[tuple[str, Command]] = []
        self._dispatch_markers = []
        for client, env, raw in pending:
            commands.extend(self._dispatch(client, env, raw))
        out = self.sim.tick(commands)
        out.new_markers = self._dispatch_markers + out.new_markers
        for client, ack, cmd in out.acks:
            self._broadcast(proto.ACK, {
                "command_seq": ack.command_seq, "accepted": ack.accepted,
                "reason": ack.reason, "client": client,
                "command": {"kind": cmd.kind, "tier": cmd.tier},
            })
        for event in out.events:
            self._broadcast(proto.EVENT, _event_payload(event))
        self._broadcast(proto.TELEMETRY, {
            "tick": out.tick,
            "robot": {"pose": proto.pose_to_payload(out.robot_pose), "mode": out.mode,
                      "velocity": {"linear": out.velocity[0], "angular": out.velocity[1]}},
            "human": {"pose": proto.pose_to_payload(out.human_pose)},
        })
        if out.diff.changed:
            self._broadcast(proto.MAP_DIFF, {
                "tick": out.diff.tick,
                "changed": [[idx, cls] for idx, cls in out.diff.changed],
            })
        if out.path_changed:
            path = self.sim.executive.active_path
            self._broadcast(proto.PATH, {
                "waypoints": [] if path is None else
                [[wp.x, wp.y, wp.theta] for wp in path.waypoints],
                "length": 0.0 if path is None else path.length,
            })
        if out.frontiers is not None:
            self._broadcast(proto.FRONTIERS, {
                "region": _region_payload(self.sim.executive.active_region),
                "frontiers": [
                    {"cells": len(f.cells), "centroid": [f.centroid[0], f.centroid[1]],
                     "info_gain": f.info_gain, "effort": f.effort,
                     "utility": f.utility, "feasible": f.feasible}
                    for f in out.frontiers
                ],
            })
        for marker in out.new_markers:
            self._broadcast(proto.MARKER, self._marker_payload(marker))
        return out


# ----- stream-socket transport ------------------------------------------------


class TcpServer:
    def __init__(self, server: RobotServer, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.server = server
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._conn_auto = 0
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            self._conn_auto += 1
            client = f"tcp{self._conn_auto}"
            sub = self.server.attach(client)
            reader = threading.Thread(target=self._read_loop, args=(conn, client, sub), daemon=True)
            writer = threading.Thread(target=self._write_loop, args=(conn, sub), daemon=True)
            reader.start()
            writer.start()
            self._threads.extend([reader, writer])

    def _read_loop(self, conn: socket.socket, client: str, sub: Subscriber) -> None:
        buf = b""
        try:
            while not self._stop.is_set():
                chunk = conn.recv(65536)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if not line:
                        continue
                    try:
                        self.server.submit_frame(client, line + b"\n")
                    except (proto.DecodeError, proto.FrameTooLarge):
                        continue  # the frame dies, the connection lives
        except OSError:
            pass
        finally:
            self.server.detach(sub)

    def _write_loop(self, conn: socket.socket, sub: Subscriber) -> None:
        try:
            while not self._stop.is_set() and not sub.closed:
                frame = sub.pop(timeout=0.1)
                if frame is not None:
                    conn.sendall(frame)
        except OSError:
            pass
        finally:
            sub.close()
            try:
                conn.close()
            except OSError:
                pass

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass


class TcpClient:
    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._buf = b""
        self._seq = 0

    def send(self, mtype: str, t: float, payload: dict) -> int:
        self._seq += 1
        self._sock.sendall(encode(Envelope(type=mtype, seq=self._seq, t=t, payload=payload)))
        return self._seq

    def recv(self) -> Envelope | None:
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(65536)
            except TimeoutError:
                return None
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return decode(line + b"\n")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


# ----- browser gateway -----------------------------------------------------------


class WsGateway:
    """WebSocket fan-out speaking the identical envelope schema (one envelope
    per text message, no trailing newline needed)."""

    def __init__(self, server: RobotServer, host: str = "127.0.0.1", port: int = DEFAULT_WS_PORT):
        from websockets.sync.server import serve as ws_serve

        self.server = server
        self._conn_auto = 0
        self._ws_server = ws_serve(self._handler, host, port)
        self.port = port
        self._thread = threading.Thread(target=self._ws_server.serve_forever, daemon=True)
        self._thread.start()

    def _handler(self, conn) -> None:
        self._conn_auto += 1
        client = f"ws{self._conn_auto}"
        sub = self.server.attach(client)
        stop = threading.Event()

        def write_loop():
            while not stop.is_set() and not sub.closed:
                frame = sub.pop(timeout=0.1)
                if frame is not None:
                    try:
                        conn.send(frame.decode().rstrip("\n"))
                    except Exception:
                        break
            stop.set()

        writer = threading.Thread(target=write_loop, daemon=True)
        writer.start()
        try:
            for message in conn:
                if isinstance(message, str):
                    message = message.encode()
                try:
                    self.server.submit_frame(client, message + b"\n")
                except (proto.DecodeError, proto.FrameTooLarge):
                    continue
        except Exception:
            pass
        finally:
            stop.set()
            self.server.detach(sub)

    def stop(self) -> None:
        self._ws_server.shutdown()
