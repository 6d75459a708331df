import type { CameraState } from "./session";
import type { Vec3, VoxelView } from "./types";

export interface ScreenCube {
  sx: number;     // screen x of the cube center
  sy: number;     // screen y
  size: number;   // projected edge length in pixels
  depth: number;  // distance along the view axis (larger = farther)
  color: string;  // css color from the palette
  classId: number;
}

export interface ProjectOptions {
  width: number;
  height: number;
  visible?: boolean[]; // per-class visibility toggles; default all on
}

/** Minimal slice of CanvasRenderingContext2D the renderer needs, so tests and
 *  the e2e harness can record draws without a DOM. */
export interface DrawTarget {
  fillStyle: string | CanvasGradient | CanvasPattern;
  fillRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

function cameraBasis(cam: CameraState) {
  // z-up world; eye orbits the target on a sphere
  const cp = Math.cos(cam.pitch), sp = Math.sin(cam.pitch);
  const cy = Math.cos(cam.yaw), sy = Math.sin(cam.yaw);
  const eye: Vec3 = [
    cam.target[0] + cam.distance * cp * cy,
    cam.target[1] + cam.distance * cp * sy,
    cam.target[2] + cam.distance * sp,
  ];
  const fwd: Vec3 = norm([cam.target[0] - eye[0], cam.target[1] - eye[1],
                          cam.target[2] - eye[2]]);
  const right: Vec3 = norm(cross(fwd, [0, 0, 1]));
  const up: Vec3 = cross(right, fwd);
  return { eye, fwd, right, up };
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]];
}

function norm(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

export function cssColor(rgb: [number, number, number]): string {
  return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
}

/**
 * Perspective-project the non-empty voxels to screen cubes, far-to-near so a
 * painter's-algorithm fill gives correct occlusion. Voxel centers sit at
 * integer coordinates + 0.5.
 */
export function projectVoxels(view: VoxelView, cam: CameraState,
                              opts: ProjectOptions): ScreenCube[] {
  const { eye, fwd, right, up } = cameraBasis(cam);
  const focal = 1.2 * Math.min(opts.width, opts.height);
  const cubes: ScreenCube[] = [];
  for (const [x, y, z, c] of view.voxels) {
    if (opts.visible && !opts.visible[c]) continue;
    const p: Vec3 = [x + 0.5 - eye[0], y + 0.5 - eye[1], z + 0.5 - eye[2]];
    const depth = p[0] * fwd[0] + p[1] * fwd[1] + p[2] * fwd[2];
    if (depth <= 0.1) continue; // behind the camera
    const u = (p[0] * right[0] + p[1] * right[1] + p[2] * right[2]) / depth;
    const v = (p[0] * up[0] + p[1] * up[1] + p[2] * up[2]) / depth;
    cubes.push({
      sx: opts.width / 2 + focal * u,
      sy: opts.height / 2 - focal * v,
      size: Math.max(1, focal / depth),
      depth,
      color: cssColor(view.palette[c].color),
      classId: c,
    });
  }
  cubes.sort((a, b) => b.depth - a.depth);
  return cubes;
}

export function renderDrawList(ctx: DrawTarget, cubes: ScreenCube[],
                               width: number, height: number): { cubesDrawn: number } {
  ctx.clearRect(0, 0, width, height);
  let drawn = 0;
  for (const cube of cubes) {
    ctx.fillStyle = cube.color;
    ctx.fillRect(cube.sx - cube.size / 2, cube.sy - cube.size / 2,
                 cube.size, cube.size);
    drawn++;
  }
  return { cubesDrawn: drawn };
}

const PITCH_LIMIT = Math.PI / 2 - 0.05;

export function orbit(cam: CameraState, dYaw: number, dPitch: number): void {
  cam.yaw = (cam.yaw + dYaw) % (2 * Math.PI);
  cam.pitch = Math.max(-PITCH_LIMIT, Math.min(PITCH_LIMIT, cam.pitch + dPitch));
}

export function zoom(cam: CameraState, factor: number): void {
  cam.distance = Math.max(1, cam.distance * factor);
}
