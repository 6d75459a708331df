// Browser entry point: wires the editor session, mask painter, and voxel
// viewer to the DOM. Everything testable lives in the other modules; this
// file is intentionally just glue.

import { ApiClient, ApiError } from "./api";
import { absenceCheck, diffSummary } from "./compare";
import { GenerationRunner } from "./jobs";
import { MaskPainter, fallbackColor, overlayPixels } from "./painter";
import { EditorSession, PlacementRejected } from "./session";
import type { AssetSummary, Bbox, MaskPreview, SamplerOptions, VoxelView } from "./types";
import { cssColor, orbit, projectVoxels, renderDrawList, zoom } from "./viewer";

const DIMS: [number, number, number] = [32, 32, 8];
const NUM_CLASSES = 8;
const CELL = 14; // painter pixels per grid cell

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function ctx2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  return ctx;
}

const session = new EditorSession(DIMS, NUM_CLASSES);
const painter = new MaskPainter(DIMS);
let api = new ApiClient("http://localhost:8000");
let runner = new GenerationRunner(api);
let assets: AssetSummary[] = [];
let preview: MaskPreview | null = null;
let viewMode: "current" | "previous" = "current";
const visible = new Set<number>();
for (let c = 1; c < NUM_CLASSES; c++) visible.add(c);
let lastEraseRegion: Bbox | null = null;

const banner = $<HTMLDivElement>("banner");
const paintCanvas = $<HTMLCanvasElement>("paint");
const viewCanvas = $<HTMLCanvasElement>("view");
const assetList = $<HTMLUListElement>("assets");
const classSelect = $<HTMLSelectElement>("class-select");
const diffBody = $<HTMLTableSectionElement>("diff-body");
const statusLine = $<HTMLSpanElement>("status");

paintCanvas.width = DIMS[0] * CELL;
paintCanvas.height = DIMS[1] * CELL;
viewCanvas.width = 560;
viewCanvas.height = 420;

function setBanner(text: string | null): void {
  banner.textContent = text ?? "";
  banner.style.display = text ? "block" : "none";
}

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function reportError(err: unknown): void {
  if (err instanceof ApiError && err.unreachable) {
    setBanner(`Service unreachable at ${api.baseUrl} — is \`ssed serve\` running?`);
  } else if (err instanceof PlacementRejected) {
    setStatus(err.message);
  } else {
    setStatus(err instanceof Error ? err.message : String(err));
  }
}

function classColor(classId: number): [number, number, number] {
  const view = session.lastResult;
  const entry = view?.palette[classId];
  return entry ? entry.color : fallbackColor(classId, NUM_CLASSES);
}

function visibleArray(): boolean[] {
  const arr = new Array<boolean>(NUM_CLASSES).fill(false);
  for (const c of visible) arr[c] = true;
  return arr;
}

// ---- mask painter rendering -------------------------------------------------

const overlayScratch = document.createElement("canvas");
overlayScratch.width = DIMS[0];
overlayScratch.height = DIMS[1];

function drawPainter(): void {
  const ctx = ctx2d(paintCanvas);
  ctx.fillStyle = "#1b1e24";
  ctx.fillRect(0, 0, paintCanvas.width, paintCanvas.height);
  if (preview) {
    const colors: [number, number, number][] = [];
    for (let c = 0; c < NUM_CLASSES; c++) colors.push(classColor(c));
    const pixels = overlayPixels(preview, colors, visibleArray());
    const image = new ImageData(DIMS[0], DIMS[1]);
    image.data.set(pixels);
    const sctx = ctx2d(overlayScratch);
    sctx.putImageData(image, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(overlayScratch, 0, 0, paintCanvas.width, paintCanvas.height);
  }
  ctx.strokeStyle = "#3a3f4a";
  for (let x = 0; x <= DIMS[0]; x++) {
    ctx.beginPath();
    ctx.moveTo(x * CELL, 0);
    ctx.lineTo(x * CELL, paintCanvas.height);
    ctx.stroke();
  }
  for (let y = 0; y <= DIMS[1]; y++) {
    ctx.beginPath();
    ctx.moveTo(0, y * CELL);
    ctx.lineTo(paintCanvas.width, y * CELL);
    ctx.stroke();
  }
  const box = painter.strokeBbox();
  if (box) {
    const [x0, y0, , x1, y1] = box;
    ctx.strokeStyle = painter.tool === "erase" ? "#ff5555" : "#7fdc7f";
    ctx.lineWidth = 2;
    ctx.strokeRect(x0 * CELL, y0 * CELL, (x1 - x0) * CELL, (y1 - y0) * CELL);
    ctx.lineWidth = 1;
  }
}

async function refreshPreview(): Promise<void> {
  try {
    preview = await api.compose(session.spec);
    setBanner(null);
  } catch (err) {
    reportError(err);
    return;
  }
  drawPainter();
  renderSpec();
}

function cellFromEvent(ev: MouseEvent): [number, number] {
  const rect = paintCanvas.getBoundingClientRect();
  const x = Math.floor((ev.clientX - rect.left) / rect.width * DIMS[0]);
  const y = Math.floor((ev.clientY - rect.top) / rect.height * DIMS[1]);
  return [x, y];
}

paintCanvas.addEventListener("mousedown", (ev) => {
  const [x, y] = cellFromEvent(ev);
  if (session.selectedAssetId !== null) {
    const asset = assets.find((a) => a.id === session.selectedAssetId);
    if (asset) {
      try {
        session.placeAsset(asset, [x, y, 0]);
        setStatus(`placed ${asset.id} at (${x}, ${y})`);
        void refreshPreview();
      } catch (err) {
        reportError(err);
      }
    }
    return;
  }
  painter.beginStroke(x, y);
  drawPainter();
});

paintCanvas.addEventListener("mousemove", (ev) => {
  if (!painter.stroking) return;
  const [x, y] = cellFromEvent(ev);
  painter.updateStroke(x, y);
  drawPainter();
});

paintCanvas.addEventListener("mouseup", () => {
  const box = painter.endStroke();
  if (!box) return;
  if (painter.tool === "erase") {
    session.eraseRegion(painter.classId, box);
    lastEraseRegion = box;
  } else {
    session.addRegion(painter.classId, box);
  }
  void refreshPreview();
});

paintCanvas.addEventListener("mouseleave", () => {
  painter.cancelStroke();
  drawPainter();
});

// ---- 3D viewer --------------------------------------------------------------

function activeView(): VoxelView | null {
  return viewMode === "previous" ? session.previousResult : session.lastResult;
}

function drawView(): void {
  const ctx = ctx2d(viewCanvas);
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, viewCanvas.width, viewCanvas.height);
  const view = activeView();
  if (!view) return;
  const cubes = projectVoxels(view, session.camera, {
    width: viewCanvas.width,
    height: viewCanvas.height,
    visible: visibleArray(),
  });
  renderDrawList(ctx, cubes, viewCanvas.width, viewCanvas.height);
}

let dragging = false;
let lastDrag: [number, number] = [0, 0];
viewCanvas.addEventListener("mousedown", (ev) => {
  dragging = true;
  lastDrag = [ev.clientX, ev.clientY];
});
window.addEventListener("mouseup", () => { dragging = false; });
window.addEventListener("mousemove", (ev) => {
  if (!dragging) return;
  const dx = ev.clientX - lastDrag[0];
  const dy = ev.clientY - lastDrag[1];
  lastDrag = [ev.clientX, ev.clientY];
  orbit(session.camera, dx * 0.01, -dy * 0.01);
  drawView();
});
viewCanvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  zoom(session.camera, ev.deltaY > 0 ? 1.1 : 0.9);
  drawView();
});

// ---- palette / controls -----------------------------------------------------

function renderAssets(): void {
  assetList.textContent = "";
  for (const asset of assets) {
    const li = document.createElement("li");
    li.textContent = `${asset.id} (${asset.kind}, class ${asset.class_id})`;
    li.className = asset.id === session.selectedAssetId ? "selected" : "";
    li.addEventListener("click", () => {
      session.selectedAssetId =
        session.selectedAssetId === asset.id ? null : asset.id;
      renderAssets();
    });
    assetList.appendChild(li);
  }
}

function renderClassControls(): void {
  classSelect.textContent = "";
  for (let c = 1; c < NUM_CLASSES; c++) {
    const opt = document.createElement("option");
    opt.value = String(c);
    opt.textContent = `class ${c}`;
    classSelect.appendChild(opt);
  }
  classSelect.value = String(painter.classId);

  const holder = $<HTMLDivElement>("visibility");
  holder.textContent = "";
  for (let c = 1; c < NUM_CLASSES; c++) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = visible.has(c);
    box.addEventListener("change", () => {
      if (box.checked) visible.add(c); else visible.delete(c);
      drawPainter();
      drawView();
    });
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = cssColor(classColor(c));
    label.append(box, swatch, ` ${c}`);
    holder.appendChild(label);
  }
}

function renderSpec(): void {
  $<HTMLPreElement>("spec-json").textContent =
    JSON.stringify(session.spec, null, 2);
  $<HTMLButtonElement>("undo").disabled = !session.canUndo();
  $<HTMLButtonElement>("redo").disabled = !session.canRedo();
}

function renderDiff(): void {
  diffBody.textContent = "";
  const before = session.previousResult;
  const after = session.lastResult;
  if (!before || !after) return;
  for (const row of diffSummary(before, after)) {
    const tr = document.createElement("tr");
    const delta = row.after - row.before;
    tr.innerHTML = `<td>${row.name}</td><td>${row.before}</td>`
      + `<td>${row.after}</td><td>${delta >= 0 ? "+" : ""}${delta}</td>`;
    diffBody.appendChild(tr);
  }
  if (lastEraseRegion) {
    const report = absenceCheck(before, after, painter.classId, lastEraseRegion);
    setStatus(`erase check: ${report.afterCount}/${report.regionVolume} voxels `
      + `remain (${(report.afterFraction * 100).toFixed(1)}%) — `
      + (report.absent ? "clear" : "still present"));
  }
}

function samplerOptions(): Partial<SamplerOptions> {
  const strategy = $<HTMLSelectElement>("sampler").value;
  const opts: Partial<SamplerOptions> = {
    strategy: strategy as SamplerOptions["strategy"],
    steps: Number($<HTMLInputElement>("steps").value) || 100,
    cfg_scale: Number($<HTMLInputElement>("cfg").value) || 2,
  };
  const seed = $<HTMLInputElement>("seed").value.trim();
  if (seed !== "") opts.seed = Number(seed);
  return opts;
}

async function generate(): Promise<void> {
  const button = $<HTMLButtonElement>("generate");
  button.disabled = true;
  setStatus("generating…");
  try {
    const view = await runner.run(session.spec, samplerOptions(), (job) => {
      setStatus(`job ${job.id}: ${job.state}`);
    });
    session.setResult(view);
    viewMode = "current";
    const t = runner.lastJob?.timings;
    setStatus(t ? `done in ${t.total_seconds.toFixed(1)}s `
      + `(${t.steps} steps, ${(t.per_step_seconds * 1000).toFixed(0)}ms/step)`
      : "done");
    setBanner(null);
    drawView();
    renderDiff();
    renderClassControls();
  } catch (err) {
    reportError(err);
  } finally {
    button.disabled = false;
  }
}

function bindControls(): void {
  $<HTMLButtonElement>("connect").addEventListener("click", () => {
    api = new ApiClient($<HTMLInputElement>("base-url").value);
    runner = new GenerationRunner(api);
    void bootstrap();
  });
  $<HTMLSelectElement>("tool").addEventListener("change", (ev) => {
    painter.tool = (ev.target as HTMLSelectElement).value as "add" | "erase";
  });
  classSelect.addEventListener("change", () => {
    painter.classId = Number(classSelect.value);
  });
  const zlo = $<HTMLInputElement>("z-lo");
  const zhi = $<HTMLInputElement>("z-hi");
  zlo.max = zhi.max = String(DIMS[2]);
  zhi.value = String(DIMS[2]);
  const syncZ = () => {
    painter.setZRange(Number(zlo.value), Number(zhi.value));
    $<HTMLSpanElement>("z-label").textContent =
      `z ∈ [${painter.zRange[0]}, ${painter.zRange[1]})`;
  };
  zlo.addEventListener("input", syncZ);
  zhi.addEventListener("input", syncZ);
  syncZ();

  $<HTMLButtonElement>("undo").addEventListener("click", () => {
    if (!session.canUndo()) return;
    session.undo();
    void refreshPreview();
  });
  $<HTMLButtonElement>("redo").addEventListener("click", () => {
    if (!session.canRedo()) return;
    session.redo();
    void refreshPreview();
  });
  $<HTMLButtonElement>("rotate").addEventListener("click", () => {
    const i = session.spec.base.length - 1;
    if (i < 0) return;
    const asset = assets.find((a) => a.id === session.spec.base[i].asset_id);
    if (!asset) return;
    try {
      session.rotatePlacement(i, asset);
      void refreshPreview();
    } catch (err) {
      reportError(err);
    }
  });
  $<HTMLButtonElement>("widen").addEventListener("click", () => {
    session.widenRoad(painter.classId);
    void refreshPreview();
  });
  $<HTMLButtonElement>("generate").addEventListener("click", () => { void generate(); });
  $<HTMLButtonElement>("show-current").addEventListener("click", () => {
    viewMode = "current";
    drawView();
  });
  $<HTMLButtonElement>("show-previous").addEventListener("click", () => {
    viewMode = "previous";
    drawView();
  });
}

async function bootstrap(): Promise<void> {
  try {
    assets = await api.listAssets();
    setBanner(null);
  } catch (err) {
    reportError(err);
    assets = [];
  }
  renderAssets();
  renderClassControls();
  renderSpec();
  drawPainter();
  drawView();
  void refreshPreview();
}

bindControls();
void bootstrap();
