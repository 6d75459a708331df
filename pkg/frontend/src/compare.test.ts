import { describe, expect, it } from "vitest";
import { absenceCheck, countClass, diffSummary } from "./compare";
import type { VoxelView } from "./types";

const palette = [
  { name: "empty", color: [0, 0, 0] as [number, number, number] },
  { name: "road", color: [80, 80, 90] as [number, number, number] },
  { name: "vehicle", color: [200, 40, 40] as [number, number, number] },
];

function view(voxels: [number, number, number, number][]): VoxelView {
  return { dims: [8, 8, 4], palette, voxels };
}

describe("countClass", () => {
  const v = view([[0, 0, 0, 1], [1, 0, 0, 2], [5, 5, 2, 2], [7, 7, 3, 1]]);

  it("counts a class across the whole scene", () => {
    expect(countClass(v, 2)).toBe(2);
    expect(countClass(v, 1)).toBe(2);
    expect(countClass(v, 7)).toBe(0);
  });

  it("restricts to a half-open region", () => {
    expect(countClass(v, 2, [0, 0, 0, 2, 1, 1])).toBe(1);
    expect(countClass(v, 2, [5, 5, 2, 6, 6, 3])).toBe(1);
    expect(countClass(v, 2, [6, 6, 0, 8, 8, 4])).toBe(0);
  });
});

describe("absenceCheck", () => {
  it("passes when the erased region is clean", () => {
    const before = view([[2, 2, 1, 2], [2, 3, 1, 2], [0, 0, 0, 1]]);
    const after = view([[0, 0, 0, 1]]);
    const report = absenceCheck(before, after, 2, [2, 2, 0, 4, 4, 2]);
    expect(report.beforeCount).toBe(2);
    expect(report.afterCount).toBe(0);
    expect(report.regionVolume).toBe(8);
    expect(report.absent).toBe(true);
  });

  it("tolerates residue up to 5% of the region", () => {
    // 4x5x2 region = 40 cells; 2 vehicle voxels = 5% exactly
    const after = view([[1, 1, 0, 2], [1, 2, 0, 2]]);
    const region: [number, number, number, number, number, number] =
      [0, 0, 0, 4, 5, 2];
    expect(absenceCheck(null, after, 2, region).absent).toBe(true);
    const worse = view([[1, 1, 0, 2], [1, 2, 0, 2], [2, 2, 1, 2]]);
    expect(absenceCheck(null, worse, 2, region).absent).toBe(false);
  });

  it("ignores the class outside the region", () => {
    const after = view([[7, 7, 3, 2]]);
    const report = absenceCheck(null, after, 2, [0, 0, 0, 2, 2, 2]);
    expect(report.afterCount).toBe(0);
    expect(report.absent).toBe(true);
  });
});

describe("diffSummary", () => {
  it("reports per-class before/after counts, skipping absent classes", () => {
    const before = view([[0, 0, 0, 1], [1, 0, 0, 2], [2, 0, 0, 2]]);
    const after = view([[0, 0, 0, 1], [1, 1, 0, 1]]);
    const rows = diffSummary(before, after);
    expect(rows).toEqual([
      { classId: 1, name: "road", before: 1, after: 2 },
      { classId: 2, name: "vehicle", before: 2, after: 0 },
    ]);
  });
});
