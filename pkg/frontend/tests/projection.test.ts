import { describe, expect, it } from "vitest";
import {
  DEFAULT_CAMERA,
  pointerToWorkspace,
  project,
  toCanvas,
} from "../src/projection.js";

describe("project", () => {
  it("keeps the origin at the screen center", () => {
    const pr = project([0, 0, 0], DEFAULT_CAMERA);
    expect(pr.sx).toBeCloseTo(0, 10);
    expect(pr.sy).toBeCloseTo(0, 10);
    const [cx, cy] = toCanvas(pr, 800, 600);
    expect(cx).toBeCloseTo(400);
    expect(cy).toBeCloseTo(300);
  });

  it("nearer points project larger (smaller depth)", () => {
    const cam = { ...DEFAULT_CAMERA, azimuth: 0, elevation: 0 };
    const near = project([0.05, -0.08, 0], cam);
    const far = project([0.05, 0.08, 0], cam);
    expect(near.depth).toBeLessThan(far.depth);
    expect(Math.abs(near.sx)).toBeGreaterThan(Math.abs(far.sx));
  });

  it("azimuth rotation moves projections but keeps depth ordering sane", () => {
    const a = project([0.05, 0.0, 0.02], { ...DEFAULT_CAMERA, azimuth: 0.0 });
    const b = project([0.05, 0.0, 0.02], { ...DEFAULT_CAMERA, azimuth: 0.8 });
    expect(a.sx).not.toBeCloseTo(b.sx, 5);
  });

  it("elevation zero keeps z pointing up on screen", () => {
    const cam = { ...DEFAULT_CAMERA, azimuth: 0, elevation: 0 };
    const up = project([0, 0, 0.05], cam);
    expect(up.sy).toBeLessThan(0); // canvas y grows downward
  });
});

describe("pointerToWorkspace", () => {
  it("maps the canvas center to the workspace origin", () => {
    expect(pointerToWorkspace(400, 300, 800, 600, 0.1)).toEqual([0, 0]);
  });

  it("maps corners to the workspace extent", () => {
    const [wx, wy] = pointerToWorkspace(800, 0, 800, 600, 0.1);
    expect(wx).toBeCloseTo(0.1);
    expect(wy).toBeCloseTo(0.1);
  });

  it("clamps positions outside the canvas to the workspace bounds", () => {
    const [wx, wy] = pointerToWorkspace(1200, -50, 800, 600, 0.1);
    expect(wx).toBe(0.1);
    expect(wy).toBe(0.1);
    const [lx, ly] = pointerToWorkspace(-100, 900, 800, 600, 0.1);
    expect(lx).toBe(-0.1);
    expect(ly).toBe(-0.1);
  });
});
