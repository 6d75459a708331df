import type { Bbox, VoxelView } from "./types";

/** Voxels of one class inside an optional grid-space half-open bbox. */
export function countClass(view: VoxelView, classId: number, region?: Bbox): number {
  let n = 0;
  for (const [x, y, z, c] of view.voxels) {
    if (c !== classId) continue;
    if (region) {
      const [x0, y0, z0, x1, y1, z1] = region;
      if (x < x0 || x >= x1 || y < y0 || y >= y1 || z < z0 || z >= z1) continue;
    }
    n++;
  }
  return n;
}

export interface AbsenceReport {
  beforeCount: number;
  afterCount: number;
  regionVolume: number;
  afterFraction: number;
  absent: boolean; // <= 5% of the region is still the class
}

/**
 * The A/B removal check: after an erase edit and regeneration, at most 5% of
 * the erased region may still carry the removed class. `before` is the
 * pre-edit result when one exists (informational).
 */
export function absenceCheck(before: VoxelView | null, after: VoxelView,
                             classId: number, region: Bbox): AbsenceReport {
  const [x0, y0, z0, x1, y1, z1] = region;
  const regionVolume = Math.max(0, x1 - x0) * Math.max(0, y1 - y0)
    * Math.max(0, z1 - z0);
  const afterCount = countClass(after, classId, region);
  const afterFraction = regionVolume === 0 ? 0 : afterCount / regionVolume;
  return {
    beforeCount: before ? countClass(before, classId, region) : 0,
    afterCount,
    regionVolume,
    afterFraction,
    absent: afterFraction <= 0.05,
  };
}

export interface ClassDelta {
  classId: number;
  name: string;
  before: number;
  after: number;
}

/** Per-class voxel count deltas for the A/B side panel. */
export function diffSummary(before: VoxelView, after: VoxelView): ClassDelta[] {
  const n = Math.max(before.palette.length, after.palette.length);
  const a = new Array(n).fill(0);
  const b = new Array(n).fill(0);
  for (const [, , , c] of before.voxels) a[c]++;
  for (const [, , , c] of after.voxels) b[c]++;
  const out: ClassDelta[] = [];
  for (let c = 0; c < n; c++) {
    if (a[c] === 0 && b[c] === 0) continue;
    out.push({
      classId: c,
      name: after.palette[c]?.name ?? before.palette[c]?.name ?? `class ${c}`,
      before: a[c],
      after: b[c],
    });
  }
  return out;
}
