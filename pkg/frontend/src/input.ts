// Input mapping: every user gesture produces exactly one wire message (or
// none).  Mode validation is the server's job; rejected inputs come back as
// error frames and surface as toasts.

import type { ClientMsg } from "./protocol.js";
import { pointerToWorkspace } from "./projection.js";

export function pointerMessage(
  px: number,
  py: number,
  width: number,
  height: number,
  workspaceHalf: number,
  manualDepth: number | null
): ClientMsg {
  const [wx, wy] = pointerToWorkspace(px, py, width, height, workspaceHalf);
  return manualDepth === null
    ? { type: "pointer", x: [wx, wy] }
    : { type: "pointer", x: [wx, wy, manualDepth] };
}

/** Space toggles assistance; O overrides with the opposite of the last
 * displayed assist; Escape stops the session.  Everything else is ignored. */
export function keyMessage(key: string, lastAssist: 0 | 1): ClientMsg | null {
  switch (key) {
    case " ":
      return { type: "toggle_assist" };
    case "o":
    case "O":
      return { type: "override", action: lastAssist === 1 ? 0 : 1 };
    case "Escape":
      return { type: "stop" };
    default:
      return null;
  }
}

/** Scroll wheel nudges the manual depth override; null means curve-following. */
export function wheelDepth(
  current: number | null,
  deltaY: number,
  workspaceHalf: number
): number {
  const base = current === null ? 0 : current;
  const next = base - Math.sign(deltaY) * workspaceHalf * 0.05;
  return Math.min(workspaceHalf, Math.max(-workspaceHalf, next));
}
