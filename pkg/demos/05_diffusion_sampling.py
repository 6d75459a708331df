"""Mask-conditional diffusion: train a small model, sample scenes, compare
the plain ancestral sampler with the resampling (inpainting) variant.

Takes a few minutes.  Run:  python3 demos/05_diffusion_sampling.py
"""
import time
from pathlib import Path

import torch

from ssed.autoencoder import AEConfig, train_autoencoder
from ssed.diffusion import (DenoiserConfig, DiffusionTrainConfig, SamplerConfig,
                            bench_sampling, ddpm_sample, generate_scene,
                            repaint_sample, scene_latent_map, train_diffusion)
from ssed.gsfm import mask_set_to_tensors
from ssed.trimask import decompose_scene
from ssed.voxel import ToySceneSpec, generate_toy_scene, miou

out_dir = Path(__file__).parent / "_out"
out_dir.mkdir(exist_ok=True)

scenes = [generate_toy_scene(ToySceneSpec(dims=(16, 16, 4), seed=s))
          for s in range(8)]
pairs = [(s, decompose_scene(s, d=2, d_z=1)) for s in scenes]

print("training a small autoencoder ...")
ae_cfg = AEConfig(c_z=8, decoder_width=48, encoder_width=16, pos_bands=4,
                  points_per_step=512, epochs=60, batch_size=2)
ae, _ = train_autoencoder(scenes, ae_cfg)

print("training a small diffusion model ...")
dcfg = DenoiserConfig(c_z=8, num_classes=8, mask_dims=(8, 8, 4), base=32,
                      mults=(1, 2), res_blocks=1, time_embed_dim=64,
                      c_emb=32, geo_hidden=64, sem_hidden=64)
tcfg = DiffusionTrainConfig(T=100, epochs=60, denoiser=dcfg)
t0 = time.time()
model, curve = train_diffusion(pairs, ae, tcfg)
print(f"  {len(curve)} epochs in {time.time() - t0:.0f}s, "
      f"loss {curve[0][1]:.3f} -> {curve[-1][1]:.3f}")

# Generation: masks in, scene out.  The same seed reproduces the scene.
mask_set = pairs[0][1]
sampler = SamplerConfig(steps=50, cfg_scale=2.0, seed=11)
gen = generate_scene(mask_set, model, ae, sampler)
again = generate_scene(mask_set, model, ae, sampler)
assert gen == again
print(f"\ngenerated {gen.dims} scene; miou vs the mask donor "
      f"{miou(gen, scenes[0]):.3f}")

# Fewer steps trade quality for speed by striding the schedule.
fast = generate_scene(mask_set, model, ae, SamplerConfig(steps=10, seed=11))
print(f"10-step sample still matches donor at miou {miou(fast, scenes[0]):.3f}")

# The resampling sampler re-noises and re-denoises each step r times; with a
# known region it inpaints the rest around it.
mask = mask_set_to_tensors(mask_set)
known = scene_latent_map(ae, scenes[1])
km = torch.zeros(model.cfg.map_hw)
km[:4, :] = 1.0  # keep the left part of the map
x0 = repaint_sample(model, mask,
                    SamplerConfig(strategy="repaint", steps=50, resample_r=3,
                                  jump_j=1, seed=11),
                    known_latent=known, known_mask=km)
assert torch.equal(x0[:, :4, :], known[:, :4, :])
print("inpainting kept the known region bit-exactly")

# Wall-clock comparison written the same way the CLI benchmark does it.
rows = bench_sampling(model, mask_set, ("ddpm", "repaint"), (10, 50), runs=1,
                      base_sampler=SamplerConfig(resample_r=3))
print("\nstrategy   steps  seconds")
for r in rows:
    print(f"{r['strategy']:<10s} {r['steps']:<6d} {r['wall_seconds']:.2f}")
