/**
 * End-to-end smoke: boots the real scene service on a scratch data root,
 * then drives the full editing loop through the same modules the browser
 * uses — palette, spec composition, generation job, rendering, removal
 * edit, regeneration, A/B absence check. Only the HTTP API and the CLI are
 * touched; toy checkpoints are trained on first run and cached under
 * e2e/.cache so later runs start in seconds.
 */
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { existsSync, mkdirSync, rmSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { absenceCheck, countClass } from "../src/compare";
import { GenerationRunner } from "../src/jobs";
import { previewPopcount } from "../src/painter";
import { EditorSession } from "../src/session";
import type { AssetSummary, Bbox, VoxelView } from "../src/types";
import type { DrawTarget } from "../src/viewer";
import { projectVoxels, renderDrawList } from "../src/viewer";

const here = dirname(fileURLToPath(import.meta.url));
const work = join(here, ".work");
const cache = join(here, ".cache");
const aeCkpt = join(cache, "ae.ssck");
const diffCkpt = join(cache, "diff.ssck");
const PORT = 8731;
const BASE = `http://127.0.0.1:${PORT}`;

// Mask geometry of the toy checkpoints: 16x16x4 scenes, xy downsample 2,
// z downsample 1 -> 8x8x4 mask grids.
const MASK_DIMS: [number, number, number] = [8, 8, 4];
const D = 2, DZ = 1;

function cli(args: string[]): void {
  const res = spawnSync("ssed", args, { encoding: "utf-8" });
  if (res.status !== 0) {
    throw new Error(`ssed ${args.join(" ")} failed:\n${res.stdout}\n${res.stderr}`);
  }
}

// Plenty of training for 16x16x4 toys (~2.5 min single-core): the smoke's
// absence check needs a model that actually obeys the per-class masks, and
// with fewer scenes the vehicle positions correlate with the road layout so
// the model ignores the vehicle channel.
function trainToyCheckpoints(): void {
  const scenes = join(work, "scenes");
  cli(["make-toyset", "--n", "16", "--dims", "16x16x4", "--seed", "0",
       "--out", scenes]);
  const aeCfg = join(work, "ae.cfg");
  writeFileSync(aeCfg, [
    "c_z=8", "decoder_width=64", "encoder_width=16", "pos_bands=4",
    "points_per_step=2048", "epochs=300", "batch_size=4", "",
  ].join("\n"));
  cli(["train-ae", "--data", scenes, "--config", aeCfg, "--out", aeCkpt]);
  const diffCfg = join(work, "diff.cfg");
  writeFileSync(diffCfg, [
    "T=50", "epochs=600", "base=16", "mults=1,2", "res_blocks=1",
    "time_embed_dim=32", "c_emb=32", "geo_hidden=64", "sem_hidden=64", "",
  ].join("\n"));
  cli(["train-diffusion", "--data", scenes, "--ae", aeCkpt,
       "--config", diffCfg, "--out", diffCkpt]);
}

let server: ChildProcess;
let serverLog = "";

async function waitForService(api: ApiClient, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      await api.listAssets();
      return;
    } catch {
      if (Date.now() > deadline) {
        throw new Error(`service not reachable in ${timeoutMs} ms\n${serverLog}`);
      }
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}

const api = new ApiClient(BASE, (url, init) => fetch(url, init));

beforeAll(async () => {
  rmSync(work, { recursive: true, force: true });
  mkdirSync(work, { recursive: true });
  mkdirSync(cache, { recursive: true });
  if (!(existsSync(aeCkpt) && existsSync(diffCkpt))) trainToyCheckpoints();
  if (!existsSync(join(work, "scenes"))) {
    cli(["make-toyset", "--n", "16", "--dims", "16x16x4", "--seed", "0",
         "--out", join(work, "scenes")]);
  }
  for (let i = 0; i < 4; i++) {
    cli(["decompose", "--scene", join(work, "scenes", `scene_000${i}.ssv1`),
         "--out-lib", join(work, "lib"), "--id-prefix", `s${i}`]);
  }
  server = spawn("ssed", [
    "serve", "--port", String(PORT), "--data-root", join(work, "data"),
    "--lib", join(work, "lib"), "--ckpt-ae", aeCkpt, "--ckpt-diff", diffCkpt,
  ]);
  server.stdout?.on("data", (d) => { serverLog += d; });
  server.stderr?.on("data", (d) => { serverLog += d; });
  await waitForService(api, 60_000);
});

afterAll(() => {
  server?.kill("SIGTERM");
});

class CountingTarget implements DrawTarget {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  rects = 0;
  fillRect(): void { this.rects++; }
  clearRect(): void { /* no-op */ }
}

function renderedCubeCount(view: VoxelView, session: EditorSession): number {
  const cubes = projectVoxels(view, session.camera, { width: 640, height: 480 });
  const target = new CountingTarget();
  const { cubesDrawn } = renderDrawList(target, cubes, 640, 480);
  expect(target.rects).toBe(cubesDrawn);
  return cubesDrawn;
}

describe("editor against a live service", () => {
  it("runs the full place / generate / erase / regenerate loop", async () => {
    // -- palette: pick one road and one vehicle asset -----------------------
    const assets = await api.listAssets();
    const road = assets.find((a: AssetSummary) => a.id.endsWith("-road"));
    const vehicle = assets.find((a: AssetSummary) => a.id.endsWith("-vehicle"));
    expect(road, "library should hold a road asset").toBeDefined();
    expect(vehicle, "library should hold a vehicle asset").toBeDefined();
    if (!road || !vehicle) return;

    const byClass = await api.listAssets({ class_id: road.class_id });
    expect(byClass.length).toBeGreaterThan(0);
    expect(byClass.every((a) => a.class_id === road.class_id)).toBe(true);

    // -- compose a spec with one road and one vehicle -----------------------
    const session = new EditorSession(MASK_DIMS, 8);
    session.placeAsset(road, [0, 0, 0]);
    session.placeAsset(vehicle, [0, 0, 0]);
    expect(session.spec.base).toHaveLength(2);

    const preview1 = await api.compose(session.spec);
    const preview2 = await api.compose(session.spec);
    expect(JSON.stringify(preview2)).toBe(JSON.stringify(preview1)); // replay determinism
    expect(previewPopcount(preview1, road.class_id)).toBeGreaterThan(0);
    expect(previewPopcount(preview1, vehicle.class_id)).toBeGreaterThan(0);

    // -- generate and render ------------------------------------------------
    const runner = new GenerationRunner(api, { initialMs: 200, maxMs: 1000 });
    const sampler = { strategy: "ddpm" as const, steps: 10, cfg_scale: 2, seed: 11 };
    const view1 = await runner.run(session.spec, sampler);
    session.setResult(view1);
    expect(runner.lastJob?.state).toBe("done");
    expect(runner.lastJob?.timings?.steps).toBe(10);
    expect(view1.voxels.length).toBeGreaterThan(0);
    expect(renderedCubeCount(view1, session)).toBe(view1.voxels.length);

    // -- removal edit -------------------------------------------------------
    const maskRegion = vehicle.bbox as Bbox; // placed at the origin
    session.eraseRegion(vehicle.class_id, maskRegion);
    const erased = await api.compose(session.spec);
    expect(previewPopcount(erased, vehicle.class_id)).toBe(0);

    // undo/redo round-trips the removal
    session.undo();
    expect(session.spec.edits).toHaveLength(0);
    session.redo();
    expect(session.spec.edits).toHaveLength(1);

    // -- regenerate and A/B compare -----------------------------------------
    const view2 = await runner.run(session.spec, sampler);
    session.setResult(view2);
    expect(session.previousResult).toBe(view1); // A/B toggle sources
    expect(session.lastResult).toBe(view2);
    expect(renderedCubeCount(view2, session)).toBe(view2.voxels.length);

    const gridRegion: Bbox = [
      maskRegion[0] * D, maskRegion[1] * D, maskRegion[2] * DZ,
      maskRegion[3] * D, maskRegion[4] * D, maskRegion[5] * DZ,
    ];
    const report = absenceCheck(view1, view2, vehicle.class_id, gridRegion);
    expect(report.regionVolume).toBeGreaterThan(0);
    expect(report.afterFraction,
      `vehicle residue ${report.afterCount}/${report.regionVolume}`)
      .toBeLessThanOrEqual(0.05);
    expect(report.absent).toBe(true);
    // the removed class also stays absent scene-wide outside noise level
    expect(countClass(view2, vehicle.class_id, gridRegion)).toBe(report.afterCount);
  });

  it("surfaces a failed job's diagnostic", async () => {
    const session = new EditorSession([6, 6, 6], 8); // wrong mask dims
    session.addRegion(1, [0, 0, 0, 4, 4, 2]);
    const runner = new GenerationRunner(api, { initialMs: 200, maxMs: 1000 });
    await expect(runner.run(session.spec, { steps: 5 }))
      .rejects.toThrow(/dims|mask/i);
  });
});
