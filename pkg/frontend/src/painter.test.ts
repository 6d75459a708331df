import { describe, expect, it } from "vitest";
import { MaskPainter, fallbackColor, overlayPixels, popcount, previewPopcount } from "./painter";
import type { MaskPreview } from "./types";

describe("MaskPainter", () => {
  it("turns a drag into a half-open bbox with the current z range", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.setZRange(1, 3);
    p.beginStroke(2, 5);
    p.updateStroke(4, 3); // dragged up-left: bbox still normalized
    expect(p.endStroke()).toEqual([2, 3, 1, 5, 6, 3]);
    expect(p.stroking).toBe(false);
  });

  it("a single click covers one cell", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.beginStroke(3, 3);
    expect(p.endStroke()).toEqual([3, 3, 0, 4, 4, 4]);
  });

  it("clips the stroke to the grid", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.beginStroke(-2, 6);
    p.updateStroke(20, 20);
    expect(p.endStroke()).toEqual([0, 6, 0, 8, 8, 4]);
  });

  it("an empty z range makes the stroke a no-op", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.setZRange(2, 2);
    p.beginStroke(1, 1);
    p.updateStroke(3, 3);
    expect(p.endStroke()).toBeNull();
  });

  it("cancelStroke discards the drag", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.beginStroke(1, 1);
    p.cancelStroke();
    expect(p.strokeBbox()).toBeNull();
    expect(p.endStroke()).toBeNull();
  });

  it("clamps the z slider to the grid height", () => {
    const p = new MaskPainter([8, 8, 4]);
    p.setZRange(-3, 99);
    expect(p.zRange).toEqual([0, 4]);
  });
});

function preview(masks: MaskPreview["masks"]): MaskPreview {
  return { dims: [2, 2, 1], num_classes: 3, masks };
}

describe("overlays", () => {
  const road = { class_id: 1, m_xy: [[1, 0], [1, 0]], m_xz: [[1], [1]], m_yz: [[1], [0]] };
  const veh = { class_id: 2, m_xy: [[0, 0], [1, 0]], m_xz: [[0], [1]], m_yz: [[1], [0]] };

  it("counts footprint cells", () => {
    expect(popcount(road.m_xy)).toBe(2);
    expect(previewPopcount(preview([road, veh]), 1)).toBe(2);
    expect(previewPopcount(preview([road, veh]), 5)).toBe(0);
  });

  it("writes RGBA in image layout with later classes on top", () => {
    const colors: [number, number, number][] = [[0, 0, 0], [10, 20, 30], [200, 0, 0]];
    const px = overlayPixels(preview([road, veh]), colors);
    // cell (x=0, y=0): road only -> index (0*2+0)*4
    expect([px[0], px[1], px[2], px[3]]).toEqual([10, 20, 30, 220]);
    // cell (x=1, y=0): road under vehicle -> vehicle wins
    expect([px[4], px[5], px[6], px[7]]).toEqual([200, 0, 0, 220]);
    // cell (x=0, y=1): empty stays transparent
    expect(px[2 * 4 + 3]).toBe(0);
  });

  it("honors visibility toggles", () => {
    const colors: [number, number, number][] = [[0, 0, 0], [10, 20, 30], [200, 0, 0]];
    const px = overlayPixels(preview([road, veh]), colors, [true, true, false]);
    expect([px[4], px[5], px[6]]).toEqual([10, 20, 30]); // road shows through
  });

  it("fallback colors are distinct across classes", () => {
    const seen = new Set<string>();
    for (let c = 0; c < 8; c++) seen.add(fallbackColor(c, 8).join(","));
    expect(seen.size).toBe(8);
  });
});
