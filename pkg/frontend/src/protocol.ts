// Wire protocol shared with the session service: one JSON object per frame.

export type Vec3 = [number, number, number];

export interface StartedMsg {
  type: "started";
  mode: "demonstrate" | "realtime" | "dagger";
  ref: string;
  polyline: Vec3[];
  workspace: number;
  duration: number;
  lockstep: boolean;
}

export interface TickMsg {
  type: "tick";
  t: number;
  x: Vec3;
  x_l: Vec3;
  ref: string;
  e: number;
  v: number;
  assist: 0 | 1;
  P: number | null;
  phase: "tracking" | "returning";
}

export interface SessionEndMsg {
  type: "session_end";
  summary: {
    n_ticks: number;
    percent_time_on: number;
    overrides: number;
    log_path: string;
  };
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StartedMsg | TickMsg | SessionEndMsg | ErrorMsg;

export interface StartReq {
  type: "start";
  mode: string;
  curve?: string;
  duration?: number;
  lockstep?: boolean;
}

export interface PointerReq {
  type: "pointer";
  x: number[];
}

export type ClientMsg =
  | StartReq
  | PointerReq
  | { type: "toggle_assist" }
  | { type: "override"; action: 0 | 1 }
  | { type: "stop" };

const SERVER_TYPES = new Set(["started", "tick", "session_end", "error"]);

export function parseServerMsg(raw: string): ServerMsg {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    throw new Error(`malformed frame: ${raw.slice(0, 60)}`);
  }
  const msg = obj as { type?: string };
  if (!msg.type || !SERVER_TYPES.has(msg.type)) {
    throw new Error(`unknown server message type: ${msg.type}`);
  }
  return obj as ServerMsg;
}

export function encode(msg: ClientMsg): string {
  return JSON.stringify(msg);
}
