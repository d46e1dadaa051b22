// Session view state: a pure reducer over server frames.  All authoritative
// data arrives in ticks; replaying the same frames rebuilds the identical
// state, which is what makes mid-session reloads safe.

import type { SessionEndMsg, ServerMsg, TickMsg, Vec3 } from "./protocol.js";

export interface TrailPoint {
  x: Vec3;
  assist: 0 | 1;
}

export interface ViewState {
  connected: boolean;
  mode: string | null;
  polyline: Vec3[];
  workspace: number;
  duration: number;
  t: number;
  cursor: Vec3 | null;     // guided cursor (server truth)
  closest: Vec3 | null;
  assist: 0 | 1;
  probability: number | null;
  phase: "tracking" | "returning";
  trail: TrailPoint[];
  overrideArmed: boolean;
  summary: SessionEndMsg["summary"] | null;
  lastError: string | null;
}

export function initialState(): ViewState {
  return {
    connected: false,
    mode: null,
    polyline: [],
    workspace: 0.1,
    duration: 0,
    t: 0,
    cursor: null,
    closest: null,
    assist: 0,
    probability: null,
    phase: "tracking",
    trail: [],
    overrideArmed: false,
    summary: null,
    lastError: null,
  };
}

const TRAIL_LIMIT = 2400; // ~80 s of ticks; older segments fade out anyway

export function reduce(state: ViewState, msg: ServerMsg): ViewState {
  switch (msg.type) {
    case "started":
      return {
        ...initialState(),
        connected: true,
        mode: msg.mode,
        polyline: msg.polyline,
        workspace: msg.workspace,
        duration: msg.duration,
      };
    case "tick": {
      const tick = msg as TickMsg;
      const trail = state.trail.concat([{ x: tick.x, assist: tick.assist }]);
      if (trail.length > TRAIL_LIMIT) trail.splice(0, trail.length - TRAIL_LIMIT);
      return {
        ...state,
        t: tick.t,
        cursor: tick.x,
        closest: tick.x_l,
        assist: tick.assist,
        probability: tick.P,
        phase: tick.phase,
        trail,
      };
    }
    case "session_end":
      return { ...state, summary: msg.summary };
    case "error":
      return { ...state, lastError: msg.message };
  }
}

export function replay(frames: ServerMsg[]): ViewState {
  let state = initialState();
  for (const frame of frames) state = reduce(state, frame);
  return state;
}
