// Operator view rebuilt purely from the frame stream: a map snapshot plus
// diffs, poses, paths, regions, markers, and ack/haptic indicators. No
// client-side simulation happens here.
import { Envelope, Pose, rleDecode } from "./protocol.js";

export interface MarkerInfo {
  id: string;
  position: [number, number];
  label: string;
  source: string;
}

export interface RegionInfo {
  shape: "circle" | "polygon";
  center?: [number, number];
  radius?: number;
  vertices?: Array<[number, number]>;
}

export function ackOverlayText(kind: string, tier: string | null | undefined): string {
  const word = kind === "traverse" ? "goto" : kind;
  return tier ? `${word} ${tier}` : word;
}

export class ViewState {
  width = 0;
  height = 0;
  resolution = 0;
  originX = 0;
  originY = 0;
  classes: Uint8Array | null = null;
  robotPose: Pose | null = null;
  robotMode = "IDLE";
  humanPose: Pose | null = null;
  path: Array<[number, number]> = [];
  region: RegionInfo | null = null;
  markers = new Map<string, MarkerInfo>();
  lastCommandText = "";
  lastHaptic = "";
  lastHapticAt = 0;
  events: Array<Record<string, any>> = [];
  framesSeen = 0;
  lastTelemetryAt: number | null = null;

  feed(env: Envelope): void {
    this.framesSeen += 1;
    const p = env.payload;
    switch (env.type) {
      case "MAP_SNAPSHOT": {
        this.width = p.width;
        this.height = p.height;
        this.resolution = p.resolution;
        this.originX = p.origin.x;
        this.originY = p.origin.y;
        this.classes = rleDecode(p.rle, this.width * this.height);
        break;
      }
      case "MAP_DIFF": {
        if (this.classes) {
          for (const [idx, cls] of p.changed as Array<[number, number]>) {
            this.classes[idx] = cls;
          }
        }
        break;
      }
      case "TELEMETRY": {
        this.robotPose = p.robot.pose;
        this.robotMode = p.robot.mode ?? "IDLE";
        this.humanPose = p.human.pose;
        this.lastTelemetryAt = env.t;
        break;
      }
      case "PATH": {
        this.path = (p.waypoints as Array<number[]>).map((wp) => [wp[0], wp[1]]);
        break;
      }
      case "FRONTIERS": {
        this.region = p.region ?? null;
        break;
      }
      case "MARKER": {
        this.markers.set(p.id, {
          id: p.id,
          position: p.position,
          label: p.label ?? "",
          source: p.source ?? "",
        });
        break;
      }
      case "ACK": {
        if (p.accepted) {
          const cmd = p.command ?? {};
          this.lastCommandText = ackOverlayText(cmd.kind ?? "?", cmd.tier);
        }
        break;
      }
      case "HAPTIC": {
        this.lastHaptic = p.pattern ?? "";
        this.lastHapticAt = env.t;
        break;
      }
      case "EVENT": {
        this.events.push(p);
        break;
      }
    }
  }
}
