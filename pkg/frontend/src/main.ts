// Socket glue and the render loop.  Session truth lives server-side; this
// client only forwards inputs and draws what the ticks say.

import { encode, parseServerMsg, ServerMsg } from "./protocol.js";
import { DEFAULT_CAMERA } from "./projection.js";
import { initialState, reduce, ViewState } from "./state.js";
import { keyMessage, pointerMessage, wheelDepth } from "./input.js";
import { render, renderHud } from "./render.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const els = {
  phase: document.getElementById("phase")!,
  timer: document.getElementById("timer")!,
  assist: document.getElementById("assist")!,
  gauge: document.getElementById("gauge-fill")!,
  banner: document.getElementById("banner")!,
  summary: document.getElementById("summary")!,
  toast: document.getElementById("toast")!,
};
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const curveSelect = document.getElementById("curve") as HTMLSelectElement;
const startBtn = document.getElementById("start") as HTMLButtonElement;
const blind = new URLSearchParams(location.search).has("blind");

let state: ViewState = initialState();
let socket: WebSocket | null = null;
let manualDepth: number | null = null;
const cam = { ...DEFAULT_CAMERA };

function send(msg: ReturnType<typeof keyMessage>): void {
  if (msg && socket && socket.readyState === WebSocket.OPEN) {
    socket.send(encode(msg));
  }
}

function connect(): void {
  socket = new WebSocket(`ws://${location.host}/ws`);
  socket.onopen = () => {
    send({
      type: "start",
      mode: modeSelect.value,
      curve: `preset:${curveSelect.value}`,
      duration: 60,
    } as never);
  };
  socket.onmessage = (ev) => {
    let msg: ServerMsg;
    try {
      msg = parseServerMsg(ev.data as string);
    } catch (err) {
      console.warn(err);
      return;
    }
    state = reduce(state, msg);
    if (msg.type === "error") {
      els.toast.style.display = "block";
      setTimeout(() => (els.toast.style.display = "none"), 2500);
    }
  };
  socket.onclose = () => {
    state = { ...state, connected: false };
  };
}

startBtn.addEventListener("click", () => {
  if (socket) socket.close();
  state = initialState();
  connect();
});

canvas.addEventListener("pointermove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  send(
    pointerMessage(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      rect.width,
      rect.height,
      state.workspace,
      manualDepth
    )
  );
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  manualDepth = wheelDepth(manualDepth, ev.deltaY, state.workspace);
});

window.addEventListener("keydown", (ev) => {
  if (ev.key === "ArrowLeft") cam.azimuth -= 0.08;
  else if (ev.key === "ArrowRight") cam.azimuth += 0.08;
  else if (ev.key === "ArrowUp") cam.elevation = Math.min(1.4, cam.elevation + 0.06);
  else if (ev.key === "ArrowDown") cam.elevation = Math.max(-1.4, cam.elevation - 0.06);
  else {
    const msg = keyMessage(ev.key, state.assist);
    if (msg) {
      ev.preventDefault();
      send(msg);
      if (msg.type === "override") {
        state = { ...state, overrideArmed: true };
      }
    }
  }
});

function frame(): void {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth * dpr;
  const h = canvas.clientHeight * dpr;
  if (canvas.width !== w || canvas.height !== h) {
    canvas.width = w;
    canvas.height = h;
  }
  const drawState = blind ? { ...state, assist: 0 as const, probability: null } : state;
  render(ctx, drawState, cam, w, h);
  renderHud(drawState, els);
  requestAnimationFrame(frame);
}

requestAnimationFrame(frame);
