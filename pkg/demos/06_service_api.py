"""The HTTP service end to end: upload assets, compose masks, run a
generation job, evaluate the result.  Uses the in-process test client so no
port is opened; `ssed serve` runs the same app over uvicorn.

Run:  python3 demos/06_service_api.py
"""
import tempfile
import time
from io import BytesIO
from pathlib import Path

from fastapi.testclient import TestClient

from ssed.autoencoder import AEConfig, save_autoencoder, train_autoencoder
from ssed.diffusion import (DenoiserConfig, DiffusionTrainConfig,
                            save_diffusion, train_diffusion)
from ssed.service import ServiceConfig, create_app
from ssed.trimask import asset_to_bytes, decompose_scene, make_asset
from ssed.voxel import (ToySceneSpec, default_palette, generate_toy_scene,
                        read_scene)

root = Path(tempfile.mkdtemp(prefix="ssed-demo-"))
print(f"service data root: {root}")

# Train and save a small checkpoint pair for the worker to load lazily.
# A couple of minutes of training: enough that generations follow the masks
# instead of decoding to noise (16 scenes so vehicle placement decorrelates
# from the road layout).
scenes = [generate_toy_scene(ToySceneSpec(dims=(16, 16, 4), seed=s))
          for s in range(16)]
ae, _ = train_autoencoder(scenes, AEConfig(
    c_z=8, decoder_width=64, encoder_width=16, pos_bands=4,
    points_per_step=2048, epochs=300, batch_size=4))
save_autoencoder(ae, root / "ae.ssck")
pairs = [(s, decompose_scene(s, 2, 1)) for s in scenes]
tcfg = DiffusionTrainConfig(T=50, epochs=600, denoiser=DenoiserConfig(
    c_z=8, num_classes=8, mask_dims=(8, 8, 4), base=16, mults=(1, 2),
    res_blocks=1, time_embed_dim=32, c_emb=32, geo_hidden=64, sem_hidden=64))
model, _ = train_diffusion(pairs, ae, tcfg)
save_diffusion(model, tcfg, root / "diff.ssck")

app = create_app(ServiceConfig(data_root=root / "data",
                               ckpt_ae=root / "ae.ssck",
                               ckpt_diff=root / "diff.ssck"))

with TestClient(app) as client:
    # Assets travel as raw TMSK bytes.
    vehicle = pairs[0][1].masks[4]
    record = make_asset("veh-0", "scene-level", vehicle, provenance="demo")
    r = client.post("/assets", content=asset_to_bytes(record))
    print(f"\nPOST /assets -> {r.status_code} {r.json()}")
    print(f"GET  /assets -> {client.get('/assets').json()['assets']}")

    # Compose previews a mask set without starting a job.
    spec = {"dims": [8, 8, 4],
            "base": [{"asset_id": "veh-0", "rotate": 1}],
            "edits": [{"op": "add", "class_id": 1,
                       "bbox": [0, 0, 0, 8, 3, 1]}]}
    preview = client.post("/scenes/compose", json=spec).json()
    road_cells = sum(sum(row) for row in preview["masks"][1]["m_xy"])
    print(f"POST /scenes/compose -> road covers {road_cells} map cells")

    # Jobs run on a single FIFO worker; clients poll until the state flips.
    payload = {"spec": spec, "sampler": {"strategy": "ddpm", "steps": 25,
                                         "seed": 5}}
    job = client.post("/jobs", json=payload).json()
    print(f"POST /jobs -> {job}")
    while True:
        job = client.get(f"/jobs/{job['id']}").json()
        if job["state"] in ("done", "failed"):
            break
        time.sleep(0.1)
    print(f"job finished: state={job['state']} "
          f"timings={job.get('timings')}")

    # The finished scene is served raw (SSV1) or as JSON voxels.
    scene_id = job["scene_id"]
    raw = client.get(f"/scenes/{scene_id}").content
    grid, _ = read_scene(BytesIO(raw))
    body = client.get(f"/scenes/{scene_id}", params={"format": "json"}).json()
    print(f"GET /scenes/{scene_id} -> {grid.dims}, "
          f"{len(body['voxels'])} occupied voxels")

    # Eval compares two stored scenes by id.  Against itself: perfect scores.
    # Against a real toy scene: low, as it should be — the job's spec was a
    # hand-painted road band plus one vehicle, not that scene's layout.
    scores = client.post("/eval",
                         json={"pred": scene_id, "gt": scene_id}).json()
    print(f"POST /eval (vs itself)  -> {scores}")
    app.state.ssed.scenes.write("gt", scenes[0], default_palette(8))
    scores = client.post("/eval", json={"pred": scene_id, "gt": "gt"}).json()
    print(f"POST /eval (vs scene 0) -> {scores}")
