// 3D -> 2D view: orbit camera with adjustable azimuth/elevation and a simple
// perspective divide.  Pointer input deliberately does NOT invert this view:
// screen x/y map linearly onto workspace x/y (depth is supplied server-side),
// so the projection only affects what is drawn.

import type { Vec3 } from "./protocol.js";

export interface Camera {
  azimuth: number;   // radians around +z
  elevation: number; // radians above the xy-plane
  distance: number;  // camera distance from the origin, m
  fov: number;       // perspective strength
}

export const DEFAULT_CAMERA: Camera = {
  azimuth: 0.6,
  elevation: 0.45,
  distance: 0.55,
  fov: 1.2,
};

export interface Projected {
  sx: number; // canvas fraction in [-1, 1]-ish before viewport scaling
  sy: number;
  depth: number; // distance from camera along the view axis
}

export function project(p: Vec3, cam: Camera): Projected {
  const ca = Math.cos(cam.azimuth);
  const sa = Math.sin(cam.azimuth);
  const ce = Math.cos(cam.elevation);
  const se = Math.sin(cam.elevation);
  // rotate: azimuth about z, then elevation about the rotated x-axis
  const x1 = ca * p[0] + sa * p[1];
  const y1 = -sa * p[0] + ca * p[1];
  const z1 = p[2];
  const y2 = ce * y1 + se * z1;
  const z2 = -se * y1 + ce * z1;
  // camera sits at y = -distance looking toward +y
  const depth = cam.distance + y2;
  const scale = cam.fov / Math.max(depth, 1e-3);
  return { sx: x1 * scale, sy: -z2 * scale, depth };
}

export function toCanvas(pr: Projected, width: number, height: number): [number, number] {
  const half = Math.min(width, height) / 2;
  return [width / 2 + pr.sx * half, height / 2 + pr.sy * half];
}

/** Screen pixel -> workspace x/y with clamping to the cube face. */
export function pointerToWorkspace(
  px: number,
  py: number,
  width: number,
  height: number,
  workspaceHalf: number
): [number, number] {
  const wx = ((px - width / 2) / (width / 2)) * workspaceHalf;
  const wy = ((height / 2 - py) / (height / 2)) * workspaceHalf;
  const clamp = (v: number) => Math.min(workspaceHalf, Math.max(-workspaceHalf, v));
  return [clamp(wx), clamp(wy)];
}
