import { describe, expect, it } from "vitest";
import type { CameraState } from "./session";
import type { VoxelView } from "./types";
import { DrawTarget, orbit, projectVoxels, renderDrawList, zoom } from "./viewer";

const palette = [
  { name: "empty", color: [0, 0, 0] as [number, number, number] },
  { name: "road", color: [80, 80, 90] as [number, number, number] },
  { name: "vehicle", color: [200, 40, 40] as [number, number, number] },
];

function cam(over: Partial<CameraState> = {}): CameraState {
  return { yaw: 0, pitch: 0, distance: 10, target: [4, 4, 2], ...over };
}

describe("projectVoxels", () => {
  it("puts the voxel at the camera target in the screen center", () => {
    // camera on the +x axis looking back at the target; voxel center == target
    const view: VoxelView = {
      dims: [8, 8, 4], palette,
      voxels: [[3, 3, 1, 1]], // center (3.5, 3.5, 1.5)
    };
    const c = cam({ target: [3.5, 3.5, 1.5] });
    const [cube] = projectVoxels(view, c, { width: 200, height: 100 });
    expect(cube.sx).toBeCloseTo(100, 5);
    expect(cube.sy).toBeCloseTo(50, 5);
    expect(cube.depth).toBeCloseTo(10, 5);
  });

  it("projects every visible voxel to one cube", () => {
    const view: VoxelView = {
      dims: [8, 8, 4], palette,
      voxels: [[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 2]],
    };
    expect(projectVoxels(view, cam(), { width: 100, height: 100 }))
      .toHaveLength(3);
    const filtered = projectVoxels(view, cam(),
      { width: 100, height: 100, visible: [false, true, false] });
    expect(filtered).toHaveLength(2);
    expect(filtered.every((c) => c.classId === 1)).toBe(true);
  });

  it("orders cubes far to near for painter's-algorithm occlusion", () => {
    const view: VoxelView = {
      dims: [8, 8, 4], palette,
      voxels: [[1, 3, 1, 1], [6, 3, 1, 2]], // x=6 is closer to a camera at +x
    };
    const cubes = projectVoxels(view, cam({ target: [4, 3.5, 1.5] }),
      { width: 100, height: 100 });
    expect(cubes[0].classId).toBe(1); // farther drawn first
    expect(cubes[0].depth).toBeGreaterThan(cubes[1].depth);
  });

  it("nearer cubes project larger", () => {
    const view: VoxelView = {
      dims: [8, 8, 4], palette,
      voxels: [[1, 3, 1, 1], [6, 3, 1, 2]],
    };
    const [far, near] = projectVoxels(view, cam({ target: [4, 3.5, 1.5] }),
      { width: 100, height: 100 });
    expect(near.size).toBeGreaterThan(far.size);
  });
});

class RecordingTarget implements DrawTarget {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  fills: Array<{ color: string; x: number; y: number }> = [];
  cleared = 0;
  fillRect(x: number, y: number): void {
    this.fills.push({ color: String(this.fillStyle), x, y });
  }
  clearRect(): void { this.cleared++; }
}

describe("renderDrawList", () => {
  it("draws each cube and reports the count", () => {
    const view: VoxelView = {
      dims: [8, 8, 4], palette,
      voxels: [[0, 0, 0, 1], [1, 1, 1, 2], [2, 2, 2, 1]],
    };
    const cubes = projectVoxels(view, cam(), { width: 100, height: 100 });
    const target = new RecordingTarget();
    const { cubesDrawn } = renderDrawList(target, cubes, 100, 100);
    expect(cubesDrawn).toBe(view.voxels.length);
    expect(target.fills).toHaveLength(3);
    expect(target.cleared).toBe(1);
    expect(target.fills.some((f) => f.color === "rgb(200,40,40)")).toBe(true);
  });
});

describe("camera controls", () => {
  it("orbit accumulates yaw and clamps pitch short of the poles", () => {
    const c = cam();
    orbit(c, 0.5, 10);
    expect(c.yaw).toBeCloseTo(0.5);
    expect(c.pitch).toBeLessThan(Math.PI / 2);
    orbit(c, 0, -20);
    expect(c.pitch).toBeGreaterThan(-Math.PI / 2);
  });

  it("zoom scales distance with a floor", () => {
    const c = cam({ distance: 4 });
    zoom(c, 0.5);
    expect(c.distance).toBe(2);
    zoom(c, 1e-9);
    expect(c.distance).toBe(1);
  });
});
