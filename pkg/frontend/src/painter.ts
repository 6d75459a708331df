import type { Bbox, MaskPreview, Vec3 } from "./types";

export type PaintTool = "add" | "erase";

/**
 * Top-down mask painting model. The canvas shows the xy projection; a drag
 * sweeps out a rectangle of mask cells, and the current z-slider range turns
 * it into a 3D bbox edit. Pure state — the DOM layer feeds it pointer events
 * in mask-cell coordinates and applies the emitted bbox to the session.
 */
export class MaskPainter {
  tool: PaintTool = "add";
  classId = 1;
  zRange: [number, number];
  private start: [number, number] | null = null;
  private current: [number, number] | null = null;

  constructor(public dims: Vec3) {
    this.zRange = [0, dims[2]];
  }

  setZRange(z0: number, z1: number): void {
    const lo = Math.max(0, Math.min(z0, z1));
    const hi = Math.min(this.dims[2], Math.max(z0, z1));
    this.zRange = [lo, hi];
  }

  get stroking(): boolean {
    return this.start !== null;
  }

  beginStroke(x: number, y: number): void {
    this.start = [x, y];
    this.current = [x, y];
  }

  updateStroke(x: number, y: number): void {
    if (this.start) this.current = [x, y];
  }

  /** The half-open bbox the in-progress drag covers, clipped to the grid. */
  strokeBbox(): Bbox | null {
    if (!this.start || !this.current) return null;
    const [ax, ay] = this.start;
    const [bx, by] = this.current;
    const x0 = Math.max(0, Math.min(ax, bx));
    const y0 = Math.max(0, Math.min(ay, by));
    const x1 = Math.min(this.dims[0], Math.max(ax, bx) + 1);
    const y1 = Math.min(this.dims[1], Math.max(ay, by) + 1);
    if (x0 >= x1 || y0 >= y1 || this.zRange[0] >= this.zRange[1]) return null;
    return [x0, y0, this.zRange[0], x1, y1, this.zRange[1]];
  }

  /** Finish the drag. Returns the bbox to edit, or null for an empty region
   *  (which the caller must treat as a no-op). */
  endStroke(): Bbox | null {
    const bbox = this.strokeBbox();
    this.start = this.current = null;
    return bbox;
  }

  cancelStroke(): void {
    this.start = this.current = null;
  }
}

export function popcount(plane: number[][]): number {
  let n = 0;
  for (const row of plane) for (const v of row) if (v) n++;
  return n;
}

export function previewPopcount(preview: MaskPreview, classId: number): number {
  const mask = preview.masks.find((m) => m.class_id === classId);
  return mask ? popcount(mask.m_xy) : 0;
}

/** Distinct overlay colors per class before any palette has arrived; display
 *  semantics always come from the server's VoxelView palette once known. */
export function fallbackColor(classId: number, numClasses: number): [number, number, number] {
  if (classId === 0) return [40, 40, 40];
  const h = (classId / Math.max(1, numClasses)) * 360;
  return hslToRgb(h, 0.65, 0.55);
}

function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const x = c * (1 - Math.abs(((h / 60) % 2) - 1));
  const m = l - c / 2;
  const [r, g, b] =
    h < 60 ? [c, x, 0] : h < 120 ? [x, c, 0] : h < 180 ? [0, c, x]
      : h < 240 ? [0, x, c] : h < 300 ? [x, 0, c] : [c, 0, x];
  return [Math.round((r + m) * 255), Math.round((g + m) * 255),
          Math.round((b + m) * 255)];
}

/**
 * RGBA pixels in standard image layout (width = X, mask x runs across a row,
 * mask y down the rows) compositing each class's xy footprint; later classes
 * paint over earlier ones, empty cells stay transparent. Colors come from the
 * given palette when present.
 */
export function overlayPixels(preview: MaskPreview,
                              colors: Array<[number, number, number]>,
                              visible?: boolean[]): Uint8ClampedArray {
  const [X, Y] = preview.dims;
  const out = new Uint8ClampedArray(X * Y * 4);
  for (const mask of preview.masks) {
    if (mask.class_id === 0) continue;
    if (visible && !visible[mask.class_id]) continue;
    const color = colors[mask.class_id] ??
      fallbackColor(mask.class_id, preview.num_classes);
    for (let y = 0; y < Y; y++) {
      for (let x = 0; x < X; x++) {
        if (!mask.m_xy[x][y]) continue;
        const i = (y * X + x) * 4;
        out[i] = color[0]; out[i + 1] = color[1]; out[i + 2] = color[2];
        out[i + 3] = 220;
      }
    }
  }
  return out;
}
