import { describe, expect, it } from "vitest";
import { EditorSession, PlacementRejected, placementFits, posedBbox } from "./session";
import type { AssetSummary, Placement, VoxelView } from "./types";
import { specEquals } from "./types";

const vehicle: AssetSummary = {
  id: "veh-1", class_id: 4, kind: "basic", dims: [8, 8, 4],
  bbox: [1, 2, 0, 4, 5, 2], provenance: "test",
};

function place(pose: Partial<Placement> = {}): Placement {
  return { asset_id: vehicle.id, offset: [0, 0, 0], rotate: 0, ...pose };
}

describe("posedBbox", () => {
  it("is the identity with no pose", () => {
    expect(posedBbox(vehicle, place())).toEqual([1, 2, 0, 4, 5, 2]);
  });

  it("rotates a quarter turn like the server: (x,y) -> (Ym-1-y, x)", () => {
    // support x in [1,4), y in [2,5) on an 8x8 plane -> x' in [8-5, 8-2) = [3,6), y' in [1,4)
    expect(posedBbox(vehicle, place({ rotate: 1 }))).toEqual([3, 1, 0, 6, 4, 2]);
  });

  it("returns to the original after four quarter turns", () => {
    expect(posedBbox(vehicle, place({ rotate: 4 }))).toEqual(
      posedBbox(vehicle, place()));
  });

  it("mirrors x across the plane width", () => {
    expect(posedBbox(vehicle, place({ mirror_x: true }))).toEqual(
      [4, 2, 0, 7, 5, 2]);
  });

  it("mirrors y across the plane height", () => {
    expect(posedBbox(vehicle, place({ mirror_y: true }))).toEqual(
      [1, 3, 0, 4, 6, 2]);
  });
});

describe("placementFits", () => {
  it("accepts an in-bounds offset and rejects an out-of-bounds one", () => {
    expect(placementFits(vehicle, place({ offset: [4, 3, 2] }), [8, 8, 4]))
      .toBe(true);
    expect(placementFits(vehicle, place({ offset: [5, 3, 2] }), [8, 8, 4]))
      .toBe(false);
    expect(placementFits(vehicle, place({ offset: [-2, 0, 0] }), [8, 8, 4]))
      .toBe(false);
  });
});

describe("EditorSession", () => {
  it("placing an asset appends exactly one placement", () => {
    const s = new EditorSession([8, 8, 4]);
    s.placeAsset(vehicle, [0, 0, 0]);
    expect(s.spec.base).toHaveLength(1);
    expect(s.spec.base[0].asset_id).toBe("veh-1");
  });

  it("rejects an out-of-bounds placement without touching the spec", () => {
    const s = new EditorSession([8, 8, 4]);
    expect(() => s.placeAsset(vehicle, [6, 0, 0])).toThrow(PlacementRejected);
    expect(s.spec.base).toHaveLength(0);
    expect(s.canUndo()).toBe(false);
  });

  it("undo after any edit restores the exact prior spec", () => {
    const s = new EditorSession([8, 8, 4]);
    s.placeAsset(vehicle, [0, 0, 0]);
    const before = JSON.stringify(s.spec);
    s.eraseRegion(4, [1, 2, 0, 4, 5, 2]);
    s.undo();
    expect(JSON.stringify(s.spec)).toBe(before);
    s.redo();
    expect(s.spec.edits).toHaveLength(1);
  });

  it("a new edit clears the redo stack", () => {
    const s = new EditorSession([8, 8, 4]);
    s.addRegion(1, [0, 0, 0, 2, 2, 1]);
    s.undo();
    expect(s.canRedo()).toBe(true);
    s.widenRoad(1);
    expect(s.canRedo()).toBe(false);
  });

  it("rotate pressed four times returns the spec to its original pose", () => {
    // zero offset: every quarter turn keeps the support inside the plane
    const square: AssetSummary = { ...vehicle, bbox: [1, 1, 0, 3, 3, 2] };
    const s = new EditorSession([8, 8, 4]);
    s.placeAsset(square, [0, 0, 0]);
    const original = JSON.parse(JSON.stringify(s.spec));
    for (let i = 0; i < 4; i++) s.rotatePlacement(0, square);
    expect(s.spec.base[0].rotate).toBe(0);
    expect(specEquals(s.spec, original)).toBe(true);
  });

  it("refuses a rotation that would push the asset out of bounds", () => {
    // 4x4 plane, support x[0,2) y[1,3); a quarter turn moves the support to
    // x[1,3), so at offset x=6 the posed bbox reaches x=9 on an 8-wide grid
    const lop: AssetSummary = { ...vehicle, dims: [4, 4, 4],
                                bbox: [0, 1, 0, 2, 3, 2] };
    const s = new EditorSession([8, 8, 4]);
    s.placeAsset(lop, [6, 0, 0]);
    expect(() => s.rotatePlacement(0, lop)).toThrow(PlacementRejected);
    expect(s.spec.base[0].rotate).toBe(0);
  });

  it("setResult keeps the previous view for A/B comparison", () => {
    const s = new EditorSession([8, 8, 4]);
    const v = (tag: number): VoxelView => ({
      dims: [8, 8, 4], palette: [{ name: "empty", color: [0, 0, 0] }],
      voxels: [[tag, 0, 0, 0]],
    });
    s.setResult(v(1));
    s.setResult(v(2));
    expect(s.previousResult?.voxels[0][0]).toBe(1);
    expect(s.lastResult?.voxels[0][0]).toBe(2);
  });
});
