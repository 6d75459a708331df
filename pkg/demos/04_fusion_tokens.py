"""Conditioning tokens: how per-class masks and triplane features fuse.

Run:  python3 demos/04_fusion_tokens.py
"""
import torch

from ssed.gsfm import (GSFM, GSFMConfig, concat_planes, mask_set_to_tensors,
                       pool_semantic_tokens, split_map)
from ssed.trimask import decompose_scene
from ssed.voxel import ToySceneSpec, default_palette, generate_toy_scene

torch.manual_seed(0)

scene = generate_toy_scene(ToySceneSpec(dims=(32, 32, 8), seed=3))
mask_set = decompose_scene(scene, d=2, d_z=1)
mask = mask_set_to_tensors(mask_set)

# Masks and latents share one 2D layout: xy top-left, xz top-right,
# yz (transposed) bottom-left, and an unused zero corner.
print(f"mask planes {tuple(mask.m_xy.shape)} -> map {tuple(mask.map.shape)}")
xy, xz, yz = split_map(mask.map, mask.dims)
assert torch.equal(concat_planes(xy, xz, yz), mask.map)

cfg = GSFMConfig(num_classes=8, mask_dims=mask.dims)
gsfm = GSFM(cfg)

# A fake latent map stands in for a diffusion x0 estimate.
latent_map = torch.randn(cfg.c_z, *cfg.map_hw)

ctx = gsfm(mask, latent_map)
print(f"fused tokens: {tuple(ctx.tokens.shape)}  (one row per class)")

# The semantic branch pools latent features under each class's mask; empty
# classes contribute zero rows before the label embedding is added.
tokens = pool_semantic_tokens(mask, latent_map)
names = default_palette().names
for cid in range(8):
    support = int(mask.m_xy[cid].sum())
    print(f"  {names[cid]:12s} xy support {support:3d}  "
          f"|pooled| {tokens[cid].norm():.3f}")

# Branches are individually removable; a disabled branch has no parameters,
# so nothing can leak gradients through it.
for flags in ({"use_semantic_branch": False}, {"use_geometric_branch": False}):
    sub = GSFM(GSFMConfig(num_classes=8, mask_dims=mask.dims, **flags))
    n_params = sum(p.numel() for p in sub.parameters())
    out = sub(mask, latent_map)
    print(f"{flags}: {n_params} params, tokens {tuple(out.tokens.shape)}")

none = GSFM(GSFMConfig(num_classes=8, mask_dims=mask.dims,
                       use_geometric_branch=False, use_semantic_branch=False))
print(f"both branches off: tokens = {none(mask, latent_map).tokens}")
