// Envelope schema shared with the robot server; see PROTOCOL.md at the repo root.

export const UNKNOWN = 0;
export const FREE = 1;
export const OCCUPIED = 2;

export interface Pose {
  x: number;
  y: number;
  theta: number;
}

export interface Envelope {
  v: number;
  type: string;
  seq: number;
  t: number;
  payload: Record<string, any>;
}

export function parseEnvelope(text: string): Envelope {
  const obj = JSON.parse(text);
  if (typeof obj !== "object" || obj === null) throw new Error("frame is not an object");
  const { type, seq, t, payload } = obj;
  if (typeof type !== "string" || typeof seq !== "number" || typeof payload !== "object") {
    throw new Error("missing envelope fields");
  }
  return { v: obj.v ?? 1, type, seq, t: Number(t), payload };
}

export function encodeEnvelope(env: Envelope): string {
  return JSON.stringify({ v: env.v, type: env.type, seq: env.seq, t: env.t, payload: env.payload });
}

export function rleDecode(runs: Array<[number, number]>, size: number): Uint8Array {
  const out = new Uint8Array(size);
  let pos = 0;
  for (const [count, value] of runs) {
    out.fill(value, pos, pos + count);
    pos += count;
  }
  if (pos !== size) throw new Error(`rle decodes to ${pos} cells, expected ${size}`);
  return out;
}

// Straight-line visibility over the class layer: occupied cells block.
// Used to reason about (not to alter) what the operator could physically see.
export function lineOfSight(
  classes: Uint8Array, width: number, height: number, resolution: number,
  originX: number, originY: number, x0: number, y0: number, x1: number, y1: number,
): boolean {
  let ix = Math.floor((x0 - originX) / resolution);
  let iy = Math.floor((y0 - originY) / resolution);
  const tx = Math.floor((x1 - originX) / resolution);
  const ty = Math.floor((y1 - originY) / resolution);
  const dx = x1 - x0;
  const dy = y1 - y0;
  const len = Math.hypot(dx, dy);
  if (len === 0) return true;
  const ux = dx / len;
  const uy = dy / len;
  let stepX = 0, tMaxX = Infinity, tDeltaX = Infinity;
  if (ux > 0) {
    stepX = 1;
    tMaxX = (originX + (ix + 1) * resolution - x0) / ux;
    tDeltaX = resolution / ux;
  } else if (ux < 0) {
    stepX = -1;
    tMaxX = (originX + ix * resolution - x0) / ux;
    tDeltaX = resolution / -ux;
  }
  let stepY = 0, tMaxY = Infinity, tDeltaY = Infinity;
  if (uy > 0) {
    stepY = 1;
    tMaxY = (originY + (iy + 1) * resolution - y0) / uy;
    tDeltaY = resolution / uy;
  } else if (uy < 0) {
    stepY = -1;
    tMaxY = (originY + iy * resolution - y0) / uy;
    tDeltaY = resolution / -uy;
  }
  let guard = width + height + 4;
  while (!(ix === tx && iy === ty) && guard-- > 0) {
    if (tMaxX <= tMaxY) {
      ix += stepX;
      tMaxX += tDeltaX;
    } else {
      iy += stepY;
      tMaxY += tDeltaY;
    }
    if (ix < 0 || ix >= width || iy < 0 || iy >= height) return true;
    if (!(ix === tx && iy === ty) && classes[iy * width + ix] === OCCUPIED) return false;
  }
  return true;
}
