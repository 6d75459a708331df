/** Wire types for the scene service. Field names match the HTTP/JSON API. */

export type Bbox = [number, number, number, number, number, number]; // x0,y0,z0,x1,y1,z1 half-open, mask units
export type Vec3 = [number, number, number];

export interface AssetSummary {
  id: string;
  class_id: number;
  kind: string; // "scene-level" | "basic"
  dims: number[]; // mask dims the asset was authored at
  bbox: number[]; // tight half-open bbox of its support
  provenance: string;
}

export interface Placement {
  asset_id: string;
  offset: Vec3;
  rotate: number; // quarter turns about z, 0..3
  mirror_x?: boolean;
  mirror_y?: boolean;
  mode?: "union" | "replace";
}

export type MaskEdit =
  | { op: "add"; class_id: number; bbox: Bbox }
  | { op: "erase"; class_id: number; bbox: Bbox }
  | { op: "widen_road"; class_id: number; factor: number };

/** The replayable scene description the service composes into a mask set. */
export interface SceneSpec {
  dims: Vec3; // mask-space dims [Xm, Ym, Zm]
  num_classes: number;
  base: Placement[];
  edits: MaskEdit[];
}

export interface SamplerOptions {
  strategy: "ddpm" | "repaint";
  steps: number;
  cfg_scale: number;
  seed: number;
}

export interface JobTimings {
  total_seconds: number;
  per_step_seconds: number;
  steps: number;
}

export interface JobRecord {
  id: string;
  state: "queued" | "running" | "done" | "failed";
  scene_id: string | null;
  timings: JobTimings | null;
  error: string | null;
}

export interface PaletteEntry {
  name: string;
  color: [number, number, number];
}

/** Sparse scene payload from GET /scenes/{id}?format=json. */
export interface VoxelView {
  dims: Vec3;
  palette: PaletteEntry[];
  voxels: [number, number, number, number][]; // x, y, z, class
}

export interface MaskPlanePreview {
  class_id: number;
  m_xy: number[][];
  m_xz: number[][];
  m_yz: number[][];
}

export interface MaskPreview {
  dims: Vec3;
  num_classes: number;
  masks: MaskPlanePreview[];
}

/**
 * Validate a VoxelView against its own header: every voxel inside dims and
 * every class id under the palette length. Throws on the first violation so
 * a malformed payload never reaches the renderer.
 */
export function validateVoxelView(view: VoxelView): VoxelView {
  const [X, Y, Z] = view.dims;
  const n = view.palette.length;
  for (const [x, y, z, c] of view.voxels) {
    if (x < 0 || y < 0 || z < 0 || x >= X || y >= Y || z >= Z) {
      throw new Error(`voxel (${x},${y},${z}) outside dims ${view.dims}`);
    }
    if (c < 0 || c >= n) {
      throw new Error(`voxel class ${c} outside palette of ${n}`);
    }
  }
  return view;
}

export function emptySpec(dims: Vec3, numClasses = 8): SceneSpec {
  return { dims: [...dims] as Vec3, num_classes: numClasses, base: [], edits: [] };
}

export function cloneSpec(spec: SceneSpec): SceneSpec {
  return JSON.parse(JSON.stringify(spec)) as SceneSpec;
}

export function specEquals(a: SceneSpec, b: SceneSpec): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}
