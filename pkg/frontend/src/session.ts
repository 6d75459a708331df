import type {
  AssetSummary, Bbox, MaskEdit, Placement, SceneSpec, Vec3, VoxelView,
} from "./types";
import { cloneSpec, emptySpec } from "./types";

export interface CameraState {
  yaw: number;   // radians about world z
  pitch: number; // radians above the xy plane
  distance: number;
  target: Vec3;
}

/**
 * Tight bbox of an asset after the service's pose pipeline (rotate quarter
 * turns about z, then mirror_x, then mirror_y). z is untouched by all poses.
 * Rotation requires a square xy footprint server-side; the same numbers fall
 * out here because the plane dims swap on every quarter turn.
 */
export function posedBbox(asset: AssetSummary, placement: Placement): Bbox {
  let [xm, ym] = [asset.dims[0], asset.dims[1]];
  let [x0, y0, z0, x1, y1, z1] = asset.bbox as Bbox;
  for (let k = 0; k < ((placement.rotate % 4) + 4) % 4; k++) {
    [x0, x1, y0, y1] = [ym - y1, ym - y0, x0, x1];
    [xm, ym] = [ym, xm];
  }
  if (placement.mirror_x) [x0, x1] = [xm - x1, xm - x0];
  if (placement.mirror_y) [y0, y1] = [ym - y1, ym - y0];
  return [x0, y0, z0, x1, y1, z1];
}

export function placementFits(asset: AssetSummary, placement: Placement,
                              dims: Vec3): boolean {
  const [x0, y0, z0, x1, y1, z1] = posedBbox(asset, placement);
  const [dx, dy, dz] = placement.offset;
  return x0 + dx >= 0 && x1 + dx <= dims[0]
    && y0 + dy >= 0 && y1 + dy <= dims[1]
    && z0 + dz >= 0 && z1 + dz <= dims[2];
}

export class PlacementRejected extends Error {
  constructor(msg: string) {
    super(msg);
    this.name = "PlacementRejected";
  }
}

/**
 * Editing state for one user: the replayable scene spec, snapshot-based
 * undo/redo over it, the current/previous generation results for A/B
 * comparison, and UI selections. Every mutation goes through apply() so
 * undo-after-do always restores the exact prior spec and any new edit clears
 * the redo stack.
 */
export class EditorSession {
  spec: SceneSpec;
  private undoStack: SceneSpec[] = [];
  private redoStack: SceneSpec[] = [];

  selectedClass = 1;
  selectedAssetId: string | null = null;
  camera: CameraState;

  lastResult: VoxelView | null = null;
  previousResult: VoxelView | null = null;

  constructor(dims: Vec3, numClasses = 8) {
    this.spec = emptySpec(dims, numClasses);
    const [X, Y, Z] = dims;
    this.camera = {
      yaw: Math.PI / 4, pitch: Math.PI / 5,
      distance: 2.5 * Math.max(X, Y, Z),
      target: [X / 2, Y / 2, Z / 2],
    };
  }

  private apply(mutate: (spec: SceneSpec) => void): void {
    const before = cloneSpec(this.spec);
    const next = cloneSpec(this.spec);
    mutate(next);
    this.undoStack.push(before);
    this.redoStack = [];
    this.spec = next;
  }

  canUndo(): boolean { return this.undoStack.length > 0; }
  canRedo(): boolean { return this.redoStack.length > 0; }

  undo(): void {
    const prev = this.undoStack.pop();
    if (prev === undefined) return;
    this.redoStack.push(this.spec);
    this.spec = prev;
  }

  redo(): void {
    const next = this.redoStack.pop();
    if (next === undefined) return;
    this.undoStack.push(this.spec);
    this.spec = next;
  }

  // -- placements ----------------------------------------------------------

  placeAsset(asset: AssetSummary, offset: Vec3,
             pose: Partial<Placement> = {}): void {
    const placement: Placement = {
      asset_id: asset.id, offset, rotate: pose.rotate ?? 0,
      mirror_x: pose.mirror_x, mirror_y: pose.mirror_y, mode: pose.mode,
    };
    if (!placementFits(asset, placement, this.spec.dims)) {
      throw new PlacementRejected(
        `asset ${asset.id} at ${offset} falls outside ${this.spec.dims}`);
    }
    this.apply((s) => { s.base.push(placement); });
  }

  rotatePlacement(index: number, asset: AssetSummary): void {
    this.posePlacement(index, asset,
      (p) => { p.rotate = (p.rotate + 1) % 4; });
  }

  mirrorPlacement(index: number, asset: AssetSummary, axis: "x" | "y"): void {
    this.posePlacement(index, asset, (p) => {
      if (axis === "x") p.mirror_x = !p.mirror_x;
      else p.mirror_y = !p.mirror_y;
    });
  }

  private posePlacement(index: number, asset: AssetSummary,
                        change: (p: Placement) => void): void {
    const current = this.spec.base[index];
    if (!current) throw new RangeError(`no placement at ${index}`);
    const candidate = { ...current };
    change(candidate);
    if (!placementFits(asset, candidate, this.spec.dims)) {
      throw new PlacementRejected(
        `posed asset ${asset.id} falls outside ${this.spec.dims}`);
    }
    this.apply((s) => { change(s.base[index]); });
  }

  removePlacement(index: number): void {
    if (!this.spec.base[index]) throw new RangeError(`no placement at ${index}`);
    this.apply((s) => { s.base.splice(index, 1); });
  }

  // -- mask edits -----------------------------------------------------------

  addEdit(edit: MaskEdit): void {
    this.apply((s) => { s.edits.push(edit); });
  }

  eraseRegion(classId: number, bbox: Bbox): void {
    this.addEdit({ op: "erase", class_id: classId, bbox });
  }

  addRegion(classId: number, bbox: Bbox): void {
    this.addEdit({ op: "add", class_id: classId, bbox });
  }

  widenRoad(classId: number, factor = 2.0): void {
    this.addEdit({ op: "widen_road", class_id: classId, factor });
  }

  // -- results --------------------------------------------------------------

  setResult(view: VoxelView): void {
    this.previousResult = this.lastResult;
    this.lastResult = view;
  }
}
