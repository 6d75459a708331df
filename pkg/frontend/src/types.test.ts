import { describe, expect, it } from "vitest";
import { cloneSpec, emptySpec, specEquals, validateVoxelView } from "./types";
import type { VoxelView } from "./types";

const basis: VoxelView = {
  dims: [4, 4, 2],
  palette: [
    { name: "empty", color: [0, 0, 0] },
    { name: "road", color: [80, 80, 90] },
  ],
  voxels: [[0, 0, 0, 1], [3, 3, 1, 0]],
};

describe("validateVoxelView", () => {
  it("accepts a consistent payload unchanged", () => {
    expect(validateVoxelView(basis)).toBe(basis);
  });

  it("rejects voxels outside the dims", () => {
    const bad = { ...basis, voxels: [[4, 0, 0, 1]] as VoxelView["voxels"] };
    expect(() => validateVoxelView(bad)).toThrow(/outside dims/);
    const neg = { ...basis, voxels: [[0, -1, 0, 1]] as VoxelView["voxels"] };
    expect(() => validateVoxelView(neg)).toThrow(/outside dims/);
  });

  it("rejects class ids past the palette", () => {
    const bad = { ...basis, voxels: [[0, 0, 0, 2]] as VoxelView["voxels"] };
    expect(() => validateVoxelView(bad)).toThrow(/palette/);
  });
});

describe("spec helpers", () => {
  it("cloneSpec yields an independent deep copy", () => {
    const a = emptySpec([8, 8, 4]);
    a.edits.push({ op: "add", class_id: 1, bbox: [0, 0, 0, 1, 1, 1] });
    const b = cloneSpec(a);
    b.edits.push({ op: "widen_road", class_id: 1, factor: 2 });
    (b.edits[0] as { class_id: number }).class_id = 7;
    expect(a.edits).toHaveLength(1);
    expect(a.edits[0]).toMatchObject({ class_id: 1 });
    expect(specEquals(a, b)).toBe(false);
    expect(specEquals(a, cloneSpec(a))).toBe(true);
  });
});
