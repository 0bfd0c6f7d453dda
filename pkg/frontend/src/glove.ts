// Client-side twin of the glove pipeline: the same activation FSM and window
// classifier run on emulated frames, so the console exercises the real
// gesture contract instead of a shortcut path.

export const FIST_THRESHOLD = 0.8;
export const FIST_HOLD_S = 0.5;
export const GESTURE_WINDOW_S = 1.5;
export const EXTENDED_MAX = 0.3;
export const FLEXED_MIN = 0.7;
export const OSC_AMPLITUDE = 0.15; // peak-to-peak deviation a crossing must span
export const OSC_MIN_CROSSINGS = 2;

export interface GloveFrame {
  t: number;
  flexion: [number, number, number, number, number]; // thumb..pinky, 0=extended
  palmFacingOut: boolean;
}

export interface Gesture {
  kind: "traverse_point" | "explore_oscillate" | "stop_palm" | "return_sign" | "unrecognized";
  fingers?: number;
}

export type GloveEvent =
  | { kind: "haptic"; pattern: "quick" | "long"; t: number }
  | { kind: "gesture"; gesture: Gesture; t: number };

const NON_THUMB = [1, 2, 3, 4];

function fingerState(mean: number): "extended" | "flexed" | "ambiguous" {
  if (mean < EXTENDED_MAX) return "extended";
  if (mean > FLEXED_MIN) return "flexed";
  return "ambiguous";
}

export function oscillationCount(frames: GloveFrame[], fingers: number[]): number {
  if (fingers.length === 0 || frames.length < 3) return 0;
  let m = frames.map(
    (f) => fingers.reduce((acc, i) => acc + f.flexion[i], 0) / fingers.length,
  );
  // ~0.1 s box filter so pointer jitter cannot fake a crossing
  const dt = (frames[frames.length - 1].t - frames[0].t) / (frames.length - 1);
  const k = dt > 0 ? Math.max(1, Math.round(0.1 / dt)) : 1;
  if (k > 1) {
    const smoothed = new Array<number>(m.length);
    for (let i = 0; i < m.length; i++) {
      let sum = 0;
      let n = 0;
      for (let j = i - Math.floor(k / 2); j < i - Math.floor(k / 2) + k; j++) {
        if (j >= 0 && j < m.length) {
          sum += m[j];
          n += 1;
        }
      }
      smoothed[i] = sum / n;
    }
    m = smoothed;
  }
  const mean = m.reduce((a, b) => a + b, 0) / m.length;
  const half = OSC_AMPLITUDE / 2;
  let crossings = 0;
  let state = 0;
  for (const v of m) {
    const d = v - mean;
    if (d >= half && state <= 0) {
      if (state === -1) crossings += 1;
      state = 1;
    } else if (d <= -half && state >= 0) {
      if (state === 1) crossings += 1;
      state = -1;
    }
  }
  return crossings;
}

export function classifyWindow(frames: GloveFrame[]): Gesture {
  if (frames.length < 2 || frames[frames.length - 1].t - frames[0].t < GESTURE_WINDOW_S - 1e-9) {
    throw new Error(`window must span at least ${GESTURE_WINDOW_S} s`);
  }
  const means = [0, 1, 2, 3, 4].map(
    (i) => frames.reduce((acc, f) => acc + f.flexion[i], 0) / frames.length,
  );
  const states = means.map(fingerState);
  const facingOut = frames.filter((f) => f.palmFacingOut).length * 2 > frames.length;
  if (states.every((s) => s === "extended") && facingOut) return { kind: "stop_palm" };
  if (states[0] === "extended" && NON_THUMB.every((i) => states[i] === "flexed")) {
    return { kind: "return_sign" };
  }
  const extended = NON_THUMB.filter((i) => states[i] === "extended");
  const othersFlexed = NON_THUMB.filter((i) => !extended.includes(i)).every(
    (i) => states[i] === "flexed",
  );
  if (extended.length >= 1 && extended.length <= 3 && othersFlexed) {
    const osc = oscillationCount(frames, extended);
    if (osc >= OSC_MIN_CROSSINGS) return { kind: "explore_oscillate", fingers: extended.length };
    return { kind: "traverse_point", fingers: extended.length };
  }
  return { kind: "unrecognized" };
}

export class ActivationFsm {
  state: "IDLE" | "ARMED" = "IDLE";
  private lastT: number | null = null;
  private fistStart: number | null = null;
  private armedAt: number | null = null;
  private window: GloveFrame[] = [];

  step(frame: GloveFrame): GloveEvent[] {
    if (this.lastT !== null && frame.t <= this.lastT) {
      throw new Error(`frame at t=${frame.t} after t=${this.lastT}`);
    }
    this.lastT = frame.t;
    const events: GloveEvent[] = [];
    if (this.state === "IDLE") {
      if (frame.flexion.every((v) => v > FIST_THRESHOLD)) {
        if (this.fistStart === null) {
          this.fistStart = frame.t;
        } else if (frame.t - this.fistStart >= FIST_HOLD_S) {
          this.state = "ARMED";
          this.armedAt = frame.t;
          this.window = [frame];
          this.fistStart = null;
          events.push({ kind: "haptic", pattern: "quick", t: frame.t });
        }
      } else {
        this.fistStart = null;
      }
    } else {
      this.window.push(frame);
      if (frame.t - (this.armedAt as number) >= GESTURE_WINDOW_S) {
        const gesture = classifyWindow(this.window);
        if (gesture.kind === "unrecognized") {
          events.push({ kind: "haptic", pattern: "long", t: frame.t });
        } else {
          events.push({ kind: "gesture", gesture, t: frame.t });
        }
        this.state = "IDLE";
        this.window = [];
        this.armedAt = null;
      }
    }
    return events;
  }
}

// ----- emulated glove input ------------------------------------------------

export interface EmulatedInput {
  fistHeld: boolean; // hold the FIST key to arm
  fingerCount: 0 | 1 | 2 | 3; // digit keys choose the pointing fingers
  palm: boolean; // outward open palm
  returnSign: boolean; // thumb-out fist
  oscillating: boolean; // pointer drag wiggles the pointing fingers
}

export function frameFromInput(input: EmulatedInput, t: number): GloveFrame {
  let flexion: [number, number, number, number, number] = [0.5, 0.5, 0.5, 0.5, 0.5];
  let facing = false;
  if (input.fistHeld) {
    flexion = [0.95, 0.95, 0.95, 0.95, 0.95];
  } else if (input.palm) {
    flexion = [0.05, 0.05, 0.05, 0.05, 0.05];
    facing = true;
  } else if (input.returnSign) {
    flexion = [0.05, 0.92, 0.92, 0.92, 0.92];
  } else if (input.fingerCount > 0) {
    flexion = [0.92, 0.92, 0.92, 0.92, 0.92];
    for (let i = 1; i <= input.fingerCount; i++) {
      flexion[i] = input.oscillating
        ? Math.min(1, Math.max(0.02, 0.15 + 0.25 * Math.sin(2 * Math.PI * 2.0 * t)))
        : 0.06;
    }
  }
  return { t, flexion, palmFacingOut: facing };
}

export function gestureToCommand(
  gesture: Gesture,
): { kind: string; tier?: string } | null {
  const tiers = ["near", "medium", "far"];
  switch (gesture.kind) {
    case "traverse_point":
      return { kind: "traverse", tier: tiers[(gesture.fingers ?? 1) - 1] };
    case "explore_oscillate":
      return { kind: "explore", tier: tiers[(gesture.fingers ?? 1) - 1] };
    case "stop_palm":
      return { kind: "stop" };
    case "return_sign":
      return { kind: "return" };
    default:
      return null;
  }
}
