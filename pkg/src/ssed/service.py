"""HTTP service: asset library, scene composition, generation jobs, eval.

All state lives under one data root (asset library directory, SSV1 scenes,
job records, composed mask sets) so a restarted service sees everything its
predecessor persisted.  Generation runs on a single FIFO worker thread;
clients poll job state.
"""
from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query, Request, Response

from .diffusion import SamplerConfig, generate_scene, load_diffusion
from .autoencoder import load_autoencoder
from .trimask import (AssetFormatError, AssetLibrary, SceneMaskSet, add_region,
                      asset_from_bytes, asset_to_bytes, empty_mask_set,
                      erase_region, mask_set_from_bytes, mask_set_to_bytes,
                      paste_asset, transform_asset, widen_road)
from .voxel import default_palette, iou, miou, read_scene, write_scene


@dataclass
class ServiceConfig:
    data_root: Path
    lib_dir: Path | None = None
    ckpt_ae: Path | None = None
    ckpt_diff: Path | None = None
    queue_size: int = 8

    def __post_init__(self):
        self.data_root = Path(self.data_root)
        self.lib_dir = Path(self.lib_dir) if self.lib_dir else self.data_root / "library"
        self.ckpt_ae = Path(self.ckpt_ae) if self.ckpt_ae else None
        self.ckpt_diff = Path(self.ckpt_diff) if self.ckpt_diff else None


# ---------------------------------------------------------------------------
# Scene spec composition
# ---------------------------------------------------------------------------

def compose_from_spec(spec: dict, lib: AssetLibrary) -> SceneMaskSet:
    """Replay a scene spec: start empty, paste posed base assets, then apply
    the ordered mask edits.  Raises ValueError on any malformed field."""
    if not isinstance(spec, dict):
        raise ValueError("spec must be an object")
    try:
        dims = tuple(int(v) for v in spec["dims"])
        num_classes = int(spec.get("num_classes", 8))
    except (KeyError, TypeError, ValueError):
        raise ValueError("spec requires dims [Xm, Ym, Zm] and integer num_classes")
    if len(dims) != 3 or min(dims) <= 0:
        raise ValueError(f"bad dims {dims}")
    out = empty_mask_set(num_classes, dims)
    for placement in spec.get("base", []):
        if "asset_id" not in placement:
            raise ValueError("base placement requires asset_id")
        try:
            record = lib.get(str(placement["asset_id"]))
        except KeyError as e:
            raise ValueError(str(e))
        if record.class_id >= num_classes:
            raise ValueError(f"asset class {record.class_id} outside num_classes")
        try:
            rotate = int(placement.get("rotate", 0)) % 4
            offset = tuple(int(v) for v in placement.get("offset", (0, 0, 0)))
        except (TypeError, ValueError):
            raise ValueError(f"malformed placement for {record.id!r}")
        if len(offset) != 3:
            raise ValueError("offset must have 3 entries")
        for _ in range(rotate):
            record = transform_asset(record, "rotate90_z")
        if placement.get("mirror_x"):
            record = transform_asset(record, "mirror_x")
        if placement.get("mirror_y"):
            record = transform_asset(record, "mirror_y")
        mode = str(placement.get("mode", "union"))
        out = paste_asset(out, record, offset, mode)
    for edit in spec.get("edits", []):
        op = edit.get("op")
        try:
            if op in ("add", "erase"):
                class_id = int(edit["class_id"])
                if not 0 <= class_id < num_classes:
                    raise ValueError(f"class {class_id} out of range")
                bbox = tuple(int(v) for v in edit["bbox"])
                if len(bbox) != 6:
                    raise ValueError("bbox must have 6 entries")
                fn = add_region if op == "add" else erase_region
                out = fn(out, class_id, bbox)
            elif op == "widen_road":
                out = widen_road(out, int(edit["class_id"]),
                                 float(edit.get("factor", 2.0)))
            else:
                raise ValueError(f"unknown edit op {op!r}")
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed {op!r} edit: {e}")
    return out


def mask_set_preview(mask_set: SceneMaskSet) -> dict:
    masks = []
    for tm in mask_set.masks:
        masks.append({"class_id": tm.class_id,
                      "m_xy": tm.m_xy.tolist(),
                      "m_xz": tm.m_xz.tolist(),
                      "m_yz": tm.m_yz.tolist()})
    return {"dims": list(mask_set.dims), "num_classes": mask_set.num_classes,
            "masks": masks}


# ---------------------------------------------------------------------------
# Durable stores
# ---------------------------------------------------------------------------

class JobStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, job_id: str) -> Path:
        return self.root / f"{job_id}.json"

    def write(self, record: dict) -> None:
        tmp = self._path(record["id"]).with_suffix(".tmp")
        tmp.write_text(json.dumps(record, indent=2))
        tmp.replace(self._path(record["id"]))

    def read(self, job_id: str) -> dict:
        path = self._path(job_id)
        if not path.exists():
            raise KeyError(job_id)
        return json.loads(path.read_text())

    def all_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


class SceneStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, scene_id: str) -> Path:
        return self.root / f"{scene_id}.ssv1"

    def write(self, scene_id: str, grid, palette) -> None:
        buf = BytesIO()
        write_scene(grid, palette, buf)
        tmp = self._path(scene_id).with_suffix(".tmp")
        tmp.write_bytes(buf.getvalue())
        tmp.replace(self._path(scene_id))

    def read_bytes(self, scene_id: str) -> bytes:
        path = self._path(scene_id)
        if not path.exists():
            raise KeyError(scene_id)
        return path.read_bytes()

    def read(self, scene_id: str):
        return read_scene(BytesIO(self.read_bytes(scene_id)))


# ---------------------------------------------------------------------------
# Worker
# ---------------------------------------------------------------------------

class ServiceState:
    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        cfg.data_root.mkdir(parents=True, exist_ok=True)
        self.lib = AssetLibrary(cfg.lib_dir)
        self.jobs = JobStore(cfg.data_root / "jobs")
        self.scenes = SceneStore(cfg.data_root / "scenes")
        self.mask_dir = cfg.data_root / "masksets"
        self.mask_dir.mkdir(parents=True, exist_ok=True)
        self.queue: queue.Queue = queue.Queue(maxsize=cfg.queue_size)
        self.worker: threading.Thread | None = None
        self._models = None
        self._model_lock = threading.Lock()
        self._fail_interrupted()

    def _fail_interrupted(self):
        for job_id in self.jobs.all_ids():
            record = self.jobs.read(job_id)
            if record["state"] in ("queued", "running"):
                record["state"] = "failed"
                record["error"] = "interrupted by service restart"
                self.jobs.write(record)

    def models(self):
        with self._model_lock:
            if self._models is None:
                if self.cfg.ckpt_ae is None or self.cfg.ckpt_diff is None:
                    raise RuntimeError("generation checkpoints not configured")
                ae = load_autoencoder(self.cfg.ckpt_ae)
                diff, _ = load_diffusion(self.cfg.ckpt_diff)
                self._models = (ae, diff)
            return self._models

    def write_mask_set(self, mask_id: str, mask_set: SceneMaskSet) -> None:
        (self.mask_dir / f"{mask_id}.tmss").write_bytes(mask_set_to_bytes(mask_set))

    def read_mask_set(self, mask_id: str) -> SceneMaskSet:
        return mask_set_from_bytes((self.mask_dir / f"{mask_id}.tmss").read_bytes())

    def start_worker(self):
        self.worker = threading.Thread(target=self._worker_loop, daemon=True)
        self.worker.start()

    def stop_worker(self):
        if self.worker is not None:
            self.queue.put(None)
            self.worker.join(timeout=60)
            self.worker = None

    def _worker_loop(self):
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            try:
                self._run_job(job_id)
            except Exception as e:  # a failed job must never kill the worker
                try:
                    record = self.jobs.read(job_id)
                    record["state"] = "failed"
                    record["error"] = str(e)
                    self.jobs.write(record)
                except Exception:
                    pass
            finally:
                self.queue.task_done()

    def _run_job(self, job_id: str):
        record = self.jobs.read(job_id)
        record["state"] = "running"
        self.jobs.write(record)
        try:
            mask_set = self.read_mask_set(job_id)
            sampler = SamplerConfig(**record["sampler"])
            ae, diff = self.models()
            t0 = time.monotonic()
            grid = generate_scene(mask_set, diff, ae, sampler)
            total = time.monotonic() - t0
            self.scenes.write(job_id, grid, default_palette(grid.num_classes))
            record["state"] = "done"
            record["scene_id"] = job_id
            record["timings"] = {"total_seconds": total,
                                 "per_step_seconds": total / sampler.steps,
                                 "steps": sampler.steps}
        except Exception as e:
            record["state"] = "failed"
            record["error"] = str(e)
        self.jobs.write(record)


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------

def create_app(cfg: ServiceConfig) -> FastAPI:
    state = ServiceState(cfg)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state.start_worker()
        yield
        state.stop_worker()

    app = FastAPI(title="ssed scene service", lifespan=lifespan)
    app.state.ssed = state

    try:
        from fastapi.middleware.cors import CORSMiddleware
        app.add_middleware(CORSMiddleware, allow_origins=["*"],
                           allow_methods=["*"], allow_headers=["*"])
    except ImportError:  # pragma: no cover
        pass

    @app.get("/assets")
    def list_assets(class_id: int | None = Query(default=None),
                    kind: str | None = Query(default=None)):
        records = state.lib.list(class_id=class_id, kind=kind)
        return {"assets": [{"id": r.id, "class_id": r.class_id, "kind": r.kind,
                            "dims": list(r.trimask.dims), "bbox": list(r.bbox),
                            "provenance": r.provenance} for r in records]}

    @app.post("/assets", status_code=201)
    async def upload_asset(request: Request):
        body = await request.body()
        try:
            record = asset_from_bytes(body)
        except (AssetFormatError, ValueError) as e:
            raise HTTPException(400, f"invalid asset: {e}")
        try:
            state.lib.put(record)
        except KeyError as e:
            raise HTTPException(409, str(e.args[0]))
        return {"id": record.id, "class_id": record.class_id, "kind": record.kind}

    @app.get("/assets/{asset_id}")
    def get_asset(asset_id: str):
        try:
            record = state.lib.get(asset_id)
        except KeyError:
            raise HTTPException(404, f"unknown asset id {asset_id!r}")
        return Response(asset_to_bytes(record), media_type="application/octet-stream")

    @app.post("/scenes/compose")
    def compose(spec: dict = Body(...)):
        try:
            mask_set = compose_from_spec(spec, state.lib)
        except ValueError as e:
            raise HTTPException(400, str(e))
        return mask_set_preview(mask_set)

    @app.post("/jobs", status_code=201)
    def submit_job(payload: dict = Body(...)):
        spec = payload.get("spec")
        sampler_dict = payload.get("sampler", {})
        try:
            mask_set = compose_from_spec(spec, state.lib)
            sampler = SamplerConfig(**sampler_dict)
        except (ValueError, TypeError) as e:
            raise HTTPException(400, str(e))
        job_id = uuid.uuid4().hex[:12]
        record = {"id": job_id, "state": "queued", "spec": spec,
                  "sampler": sampler.__dict__, "seed": sampler.seed,
                  "scene_id": None, "timings": None, "error": None,
                  "created": time.time()}
        state.write_mask_set(job_id, mask_set)
        state.jobs.write(record)
        try:
            state.queue.put_nowait(job_id)
        except queue.Full:
            (state.jobs.root / f"{job_id}.json").unlink(missing_ok=True)
            (state.mask_dir / f"{job_id}.tmss").unlink(missing_ok=True)
            raise HTTPException(503, "job queue is full")
        return {"id": job_id, "state": "queued"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return state.jobs.read(job_id)
        except KeyError:
            raise HTTPException(404, f"unknown job id {job_id!r}")

    @app.get("/scenes/{scene_id}")
    def get_scene(scene_id: str, format: str | None = Query(default=None)):
        try:
            raw = state.scenes.read_bytes(scene_id)
        except KeyError:
            raise HTTPException(404, f"unknown scene id {scene_id!r}")
        if format is None:
            return Response(raw, media_type="application/octet-stream")
        if format != "json":
            raise HTTPException(400, f"unknown format {format!r}")
        grid, palette = read_scene(BytesIO(raw))
        xs, ys, zs = grid.labels.nonzero()
        voxels = [[int(x), int(y), int(z), int(grid.labels[x, y, z])]
                  for x, y, z in zip(xs, ys, zs)]
        return {"dims": list(grid.dims),
                "palette": [{"name": n, "color": list(c)}
                            for n, c in zip(palette.names, palette.colors)],
                "voxels": voxels}

    @app.post("/eval")
    def eval_scenes(payload: dict = Body(...)):
        for key in ("pred", "gt"):
            if key not in payload:
                raise HTTPException(400, f"missing {key!r} scene id")
        try:
            pred, _ = state.scenes.read(str(payload["pred"]))
            gt, _ = state.scenes.read(str(payload["gt"]))
        except KeyError as e:
            raise HTTPException(404, f"unknown scene id {e.args[0]!r}")
        if pred.dims != gt.dims:
            raise HTTPException(400, "scene dims differ")
        return {"iou": iou(pred, gt), "miou": miou(pred, gt)}

    return app
