// Console entry point: socket wiring, the emulated glove loop, and rendering.
// Rendering is decoupled from ingestion through a frame queue so a burst of
// diffs never stalls the event loop mid-draw.
import {
  ActivationFsm,
  EmulatedInput,
  frameFromInput,
  gestureToCommand,
} from "./glove.js";
import { encodeEnvelope, parseEnvelope, Envelope } from "./protocol.js";
import { defaultLayers, Renderer } from "./renderer.js";
import { ViewState } from "./view_state.js";

const FRAME_RATE = 30;
const STALE_AFTER_MS = 1500;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLElement;
const bannerEl = document.getElementById("banner") as HTMLElement;
const commandEl = document.getElementById("last-command") as HTMLElement;
const hapticEl = document.getElementById("haptic") as HTMLElement;

const state = new ViewState();
const renderer = new Renderer(canvas, { ...defaultLayers });
const frameQueue: Envelope[] = [];
const fsm = new ActivationFsm();
const input: EmulatedInput = {
  fistHeld: false,
  fingerCount: 0,
  palm: false,
  returnSign: false,
  oscillating: false,
};

let socket: WebSocket | null = null;
let seq = 0;
let gloveT = 0;
let pointerWorld: [number, number] | null = null;
let lastPointerMove = 0;
let pointerTravel = 0;
let flash = "";
let flashUntil = 0;
let lastFrameWallMs = 0;
let fitted = false;

function connect(): void {
  const url = `ws://${location.hostname || "127.0.0.1"}:7702`;
  socket = new WebSocket(url);
  socket.onopen = () => {
    statusEl.textContent = `connected to ${url}`;
    statusEl.className = "ok";
  };
  socket.onmessage = (ev) => {
    try {
      frameQueue.push(parseEnvelope(String(ev.data)));
    } catch {
      // a malformed frame dies alone; the connection survives
    }
  };
  socket.onclose = () => {
    statusEl.textContent = "disconnected, retrying";
    statusEl.className = "bad";
    fitted = false; // the reconnect snapshot re-fits and rebuilds the map layer
    setTimeout(connect, 1000);
  };
  socket.onerror = () => socket?.close();
}

function sendEnvelope(type: string, payload: Record<string, any>): void {
  if (!socket || socket.readyState !== WebSocket.OPEN) return;
  seq += 1;
  socket.send(encodeEnvelope({ v: 1, type, seq, t: state.lastTelemetryAt ?? 0, payload }));
}

function gazeHeading(): number {
  if (!state.humanPose || !pointerWorld) return state.humanPose?.theta ?? 0;
  return Math.atan2(pointerWorld[1] - state.humanPose.y, pointerWorld[0] - state.humanPose.x);
}

function gloveTick(): void {
  gloveT += 1 / FRAME_RATE;
  // a pointer drag within the last quarter second oscillates the fingers
  input.oscillating = performance.now() - lastPointerMove < 250 && pointerTravel > 40;
  const frame = frameFromInput(input, gloveT);
  for (const event of fsm.step(frame)) {
    if (event.kind === "haptic") {
      flash = event.pattern;
      flashUntil = performance.now() + (event.pattern === "quick" ? 350 : 900);
      hapticEl.textContent = event.pattern === "quick" ? "armed" : "not recognized";
    } else {
      const cmd = gestureToCommand(event.gesture);
      if (cmd && state.humanPose) {
        const payload: Record<string, any> = {
          kind: cmd.kind,
          human_pose: { x: state.humanPose.x, y: state.humanPose.y, theta: gazeHeading() },
          frame: "robot", // the console already lives in the map frame
        };
        if (cmd.tier) payload.tier = cmd.tier;
        sendEnvelope("COMMAND", payload);
        hapticEl.textContent = `sent ${cmd.kind}${cmd.tier ? " " + cmd.tier : ""}`;
      }
    }
  }
}

function renderTick(): void {
  while (frameQueue.length > 0) {
    const env = frameQueue.shift()!;
    state.feed(env);
    if (env.type === "MAP_SNAPSHOT") fitted = false;
    lastFrameWallMs = performance.now();
  }
  if (!fitted && state.width > 0) {
    renderer.fit(state);
    fitted = true;
  }
  if (performance.now() > flashUntil) flash = "";
  bannerEl.style.display =
    lastFrameWallMs > 0 && performance.now() - lastFrameWallMs > STALE_AFTER_MS ? "block" : "none";
  commandEl.textContent = state.lastCommandText || "(none)";
  renderer.draw(state, pointerWorld, flash);
  requestAnimationFrame(renderTick);
}

canvas.addEventListener("mousemove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const sx = ev.clientX - rect.left;
  const sy = ev.clientY - rect.top;
  pointerWorld = renderer.toWorld(state, sx, sy);
  pointerTravel = Math.min(200, pointerTravel * 0.8 + Math.abs(ev.movementX) + Math.abs(ev.movementY));
  lastPointerMove = performance.now();
});

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  if (ev.key === "f" || ev.key === "F") input.fistHeld = true;
  else if (ev.key >= "1" && ev.key <= "3") input.fingerCount = Number(ev.key) as 1 | 2 | 3;
  else if (ev.key === "p" || ev.key === "P") input.palm = true;
  else if (ev.key === "r" || ev.key === "R") input.returnSign = true;
});
window.addEventListener("keyup", (ev) => {
  if (ev.key === "f" || ev.key === "F") input.fistHeld = false;
  else if (ev.key >= "1" && ev.key <= "3") input.fingerCount = 0;
  else if (ev.key === "p" || ev.key === "P") input.palm = false;
  else if (ev.key === "r" || ev.key === "R") input.returnSign = false;
});

for (const layer of ["map", "path", "region", "markers", "agents"] as const) {
  const slider = document.getElementById(`layer-${layer}`) as HTMLInputElement | null;
  slider?.addEventListener("input", () => {
    renderer.layers[layer] = Number(slider.value) / 100;
  });
}

connect();
setInterval(gloveTick, 1000 / FRAME_RATE);
requestAnimationFrame(renderTick);
