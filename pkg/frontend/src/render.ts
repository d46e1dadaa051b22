// Canvas rendering of the session view.  Drawing never mutates the state.

import { Camera, project, toCanvas } from "./projection.js";
import type { ViewState } from "./state.js";
import type { Vec3 } from "./protocol.js";

function pt(p: Vec3, cam: Camera, w: number, h: number): [number, number] {
  return toCanvas(project(p, cam), w, h);
}

export function render(
  ctx: CanvasRenderingContext2D,
  state: ViewState,
  cam: Camera,
  width: number,
  height: number
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, width, height);

  // reference curve
  if (state.polyline.length > 1) {
    ctx.beginPath();
    const [x0, y0] = pt(state.polyline[0], cam, width, height);
    ctx.moveTo(x0, y0);
    for (const p of state.polyline.slice(1)) {
      const [x, y] = pt(p, cam, width, height);
      ctx.lineTo(x, y);
    }
    ctx.strokeStyle = "#8892a6";
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  // cursor trail, tinted where assistance was on
  for (let i = 1; i < state.trail.length; i++) {
    const a = state.trail[i - 1];
    const b = state.trail[i];
    const [ax, ay] = pt(a.x, cam, width, height);
    const [bx, by] = pt(b.x, cam, width, height);
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.strokeStyle = b.assist ? "rgba(235,80,80,0.85)" : "rgba(90,170,250,0.55)";
    ctx.lineWidth = b.assist ? 3 : 1.5;
    ctx.stroke();
  }

  // closest reference point and guided cursor with depth cue ring
  if (state.closest) {
    const [cx, cy] = pt(state.closest, cam, width, height);
    ctx.beginPath();
    ctx.arc(cx, cy, 4, 0, Math.PI * 2);
    ctx.fillStyle = "#c9d4ef";
    ctx.fill();
  }
  if (state.cursor) {
    const proj = project(state.cursor, cam);
    const [cx, cy] = toCanvas(proj, width, height);
    ctx.beginPath();
    ctx.arc(cx, cy, 7, 0, Math.PI * 2);
    ctx.fillStyle = state.assist ? "#ff6961" : "#6fd36f";
    ctx.fill();
    // depth cue: nearer -> larger ring
    const ring = 10 + Math.max(0, (0.7 - proj.depth) * 40);
    ctx.beginPath();
    ctx.arc(cx, cy, ring, 0, Math.PI * 2);
    ctx.strokeStyle = "rgba(255,255,255,0.35)";
    ctx.lineWidth = 1;
    ctx.stroke();
  }
}

export function renderHud(state: ViewState, els: {
  phase: HTMLElement;
  timer: HTMLElement;
  assist: HTMLElement;
  gauge: HTMLElement;
  banner: HTMLElement;
  summary: HTMLElement;
  toast: HTMLElement;
}): void {
  els.phase.textContent = state.phase === "tracking" ? "tracking" : "returning to start";
  els.timer.textContent = `${state.t.toFixed(1)} / ${state.duration.toFixed(0)} s`;
  els.assist.textContent = state.assist ? "ASSIST ON" : "assist off";
  els.assist.className = state.assist ? "assist on" : "assist";
  const p = state.probability;
  els.gauge.style.width = `${p === null ? 0 : Math.round(100 * p)}%`;
  els.banner.style.display = state.connected ? "none" : "block";
  if (state.summary) {
    const s = state.summary;
    els.summary.textContent =
      `session complete: ${s.n_ticks} ticks, assistance on ` +
      `${(100 * s.percent_time_on).toFixed(1)}% of the time, ` +
      `${s.overrides} overrides. Log: ${s.log_path}`;
    els.summary.style.display = "block";
  } else {
    els.summary.style.display = "none";
  }
  if (state.lastError) {
    els.toast.textContent = state.lastError;
    els.toast.style.display = "block";
  }
}
