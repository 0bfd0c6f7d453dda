// Canvas rendering of the operator view. Layer visibility and opacity are
// operator-tunable; the robot stays drawn even when physically occluded.
import { FREE, OCCUPIED } from "./protocol.js";
import { ViewState } from "./view_state.js";

export interface LayerSettings {
  map: number; // opacity 0..1, 0 hides the layer
  path: number;
  region: number;
  markers: number;
  agents: number;
}

export const defaultLayers: LayerSettings = { map: 1, path: 1, region: 1, markers: 1, agents: 1 };

export class Renderer {
  private ctx: CanvasRenderingContext2D;
  scale = 20; // pixels per meter, fitted on first snapshot

  constructor(private canvas: HTMLCanvasElement, public layers: LayerSettings = { ...defaultLayers }) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  fit(state: ViewState): void {
    if (state.width === 0) return;
    const worldW = state.width * state.resolution;
    const worldH = state.height * state.resolution;
    this.scale = Math.min(this.canvas.width / worldW, this.canvas.height / worldH);
  }

  toScreen(state: ViewState, x: number, y: number): [number, number] {
    const sx = (x - state.originX) * this.scale;
    const sy = this.canvas.height - (y - state.originY) * this.scale;
    return [sx, sy];
  }

  toWorld(state: ViewState, sx: number, sy: number): [number, number] {
    return [sx / this.scale + state.originX, (this.canvas.height - sy) / this.scale + state.originY];
  }

  draw(state: ViewState, gazeTarget: [number, number] | null, armedFlash: string): void {
    const ctx = this.ctx;
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (state.classes && this.layers.map > 0) this.drawMap(state);
    if (state.region && this.layers.region > 0) this.drawRegion(state);
    if (state.path.length > 1 && this.layers.path > 0) this.drawPath(state);
    if (this.layers.markers > 0) this.drawMarkers(state);
    if (this.layers.agents > 0) this.drawAgents(state, gazeTarget);
    this.drawOverlay(state, armedFlash);
  }

  private drawMap(state: ViewState): void {
    const ctx = this.ctx;
    const cell = state.resolution * this.scale;
    ctx.globalAlpha = this.layers.map;
    for (let iy = 0; iy < state.height; iy++) {
      for (let ix = 0; ix < state.width; ix++) {
        const cls = state.classes![iy * state.width + ix];
        if (cls === FREE) ctx.fillStyle = "#2e3b4e";
        else if (cls === OCCUPIED) ctx.fillStyle = "#c9d4e3";
        else continue; // unknown stays background
        const [sx, sy] = this.toScreen(state, state.originX + ix * state.resolution,
                                       state.originY + (iy + 1) * state.resolution);
        ctx.fillRect(sx, sy, cell + 0.5, cell + 0.5);
      }
    }
    ctx.globalAlpha = 1;
  }

  private drawRegion(state: ViewState): void {
    const ctx = this.ctx;
    const region = state.region!;
    ctx.globalAlpha = 0.25 * this.layers.region;
    ctx.fillStyle = "#3adf6e"; // the keep-in disc renders green
    ctx.strokeStyle = "#3adf6e";
    ctx.beginPath();
    if (region.shape === "circle" && region.center) {
      const [sx, sy] = this.toScreen(state, region.center[0], region.center[1]);
      ctx.arc(sx, sy, (region.radius ?? 0) * this.scale, 0, 2 * Math.PI);
    } else if (region.vertices) {
      region.vertices.forEach(([x, y], i) => {
        const [sx, sy] = this.toScreen(state, x, y);
        i === 0 ? ctx.moveTo(sx, sy) : ctx.lineTo(sx, sy);
      });
      ctx.closePath();
    }
    ctx.fill();
    ctx.globalAlpha = this.layers.region;
    ctx.stroke();
    ctx.globalAlpha = 1;
  }

  private drawPath(state: ViewState): void {
    const ctx = this.ctx;
    ctx.globalAlpha = this.layers.path;
    ctx.strokeStyle = "#57d98f";
    ctx.lineWidth = 2;
    ctx.beginPath();
    state.path.forEach(([x, y], i) => {
      const [sx, sy] = this.toScreen(state, x, y);
      i === 0 ? ctx.moveTo(sx, sy) : ctx.lineTo(sx, sy);
    });
    ctx.stroke();
    ctx.globalAlpha = 1;
  }

  private drawMarkers(state: ViewState): void {
    const ctx = this.ctx;
    ctx.globalAlpha = this.layers.markers;
    for (const marker of state.markers.values()) {
      const [sx, sy] = this.toScreen(state, marker.position[0], marker.position[1]);
      ctx.fillStyle = "#ffd75e"; // objects of interest render as yellow boxes
      ctx.fillRect(sx - 6, sy - 6, 12, 12);
      ctx.fillStyle = "#ffe9a8";
      ctx.font = "12px sans-serif";
      ctx.fillText(marker.label || marker.id, sx + 8, sy - 8);
    }
    ctx.globalAlpha = 1;
  }

  private drawAgents(state: ViewState, gazeTarget: [number, number] | null): void {
    const ctx = this.ctx;
    ctx.globalAlpha = this.layers.agents;
    if (state.robotPose) {
      // the robot is a blue box, drawn regardless of physical line of sight
      const { x, y, theta } = state.robotPose;
      const [sx, sy] = this.toScreen(state, x, y);
      ctx.save();
      ctx.translate(sx, sy);
      ctx.rotate(-theta);
      ctx.fillStyle = "#3b82f6";
      ctx.fillRect(-8, -6, 16, 12);
      ctx.fillStyle = "#bfdbfe";
      ctx.fillRect(4, -2, 5, 4);
      ctx.restore();
    }
    if (state.humanPose) {
      const { x, y } = state.humanPose;
      const [sx, sy] = this.toScreen(state, x, y);
      ctx.fillStyle = "#f59e0b";
      ctx.beginPath();
      ctx.arc(sx, sy, 7, 0, 2 * Math.PI);
      ctx.fill();
      if (gazeTarget) {
        const [gx, gy] = this.toScreen(state, gazeTarget[0], gazeTarget[1]);
        ctx.strokeStyle = "rgba(245, 158, 11, 0.6)";
        ctx.setLineDash([6, 6]);
        ctx.beginPath();
        ctx.moveTo(sx, sy);
        ctx.lineTo(gx, gy);
        ctx.stroke();
        ctx.setLineDash([]);
      }
    }
    ctx.globalAlpha = 1;
  }

  private drawOverlay(state: ViewState, armedFlash: string): void {
    const ctx = this.ctx;
    ctx.font = "16px sans-serif";
    if (state.lastCommandText) {
      ctx.fillStyle = "#e8eef7";
      ctx.fillText(state.lastCommandText, 12, 22);
    }
    if (armedFlash) {
      ctx.fillStyle = armedFlash === "quick" ? "#4ade80" : "#ef4444";
      ctx.beginPath();
      ctx.arc(this.canvas.width - 20, 20, 9, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}
