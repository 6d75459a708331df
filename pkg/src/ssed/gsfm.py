"""Geometric-semantic fusion: turn per-class masks plus triplane features into
N conditioning tokens for the denoiser.

The geometric branch embeds each class's concatenated 2D mask map and mixes
classes with self-attention.  The semantic branch adds a learned label
embedding to masked-pooled triplane features.  A cross-attention step fuses
the two into one token per class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .autoencoder import Triplane
from .numerics import attention, gelu, layer_norm, linear, masked_mean
from .trimask import SceneMaskSet


# ---------------------------------------------------------------------------
# Concatenated 2D layout shared by masks and triplane latents
# ---------------------------------------------------------------------------

def map_shape(dims) -> tuple[int, int]:
    xm, ym, zm = dims
    return (xm + zm, ym + zm)


def concat_planes(p_xy: torch.Tensor, p_xz: torch.Tensor,
                  p_yz: torch.Tensor) -> torch.Tensor:
    """Tile (..., Xm, Ym), (..., Xm, Zm), (..., Ym, Zm) into one
    (..., Xm+Zm, Ym+Zm) map: xy top-left, xz top-right, yz transposed
    bottom-left, bottom-right corner zero."""
    xm, ym = p_xy.shape[-2:]
    zm = p_xz.shape[-1]
    if p_xz.shape[-2] != xm or p_yz.shape[-2:] != (ym, zm):
        raise ValueError("inconsistent plane dims")
    out = p_xy.new_zeros(p_xy.shape[:-2] + (xm + zm, ym + zm))
    out[..., :xm, :ym] = p_xy
    out[..., :xm, ym:] = p_xz
    out[..., xm:, :ym] = p_yz.transpose(-1, -2)
    return out


def split_map(m: torch.Tensor, dims) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Invert concat_planes: (..., Xm+Zm, Ym+Zm) -> xy, xz, yz blocks."""
    xm, ym, zm = dims
    if m.shape[-2:] != (xm + zm, ym + zm):
        raise ValueError(f"map shape {tuple(m.shape[-2:])} does not match dims {tuple(dims)}")
    return (m[..., :xm, :ym],
            m[..., :xm, ym:],
            m[..., xm:, :ym].transpose(-1, -2))


def concat_trimask(mask_set: SceneMaskSet) -> np.ndarray:
    """Per-class (N, Xm+Zm, Ym+Zm) float32 map of the binary plane triple."""
    n = mask_set.num_classes
    h, w = map_shape(mask_set.dims)
    out = np.zeros((n, h, w), dtype=np.float32)
    for i, tm in enumerate(mask_set.masks):
        out[i] = concat_planes(torch.from_numpy(tm.m_xy.astype(np.float32)),
                               torch.from_numpy(tm.m_xz.astype(np.float32)),
                               torch.from_numpy(tm.m_yz.astype(np.float32))).numpy()
    return out


def triplane_to_map(tp: Triplane) -> torch.Tensor:
    """(C_z, Xm+Zm, Ym+Zm) map of the three feature planes."""
    return concat_planes(tp.t_xy, tp.t_xz, tp.t_yz)


def map_to_triplane(m: torch.Tensor, dims, d: int, d_z: int) -> Triplane:
    t_xy, t_xz, t_yz = split_map(m, dims)
    return Triplane(t_xy.contiguous(), t_xz.contiguous(), t_yz.contiguous(), d, d_z)


@dataclass(eq=False)
class MaskTensors:
    """Torch views of a SceneMaskSet: stacked per-class planes plus the
    concatenated map, all float."""

    m_xy: torch.Tensor  # (N, Xm, Ym)
    m_xz: torch.Tensor  # (N, Xm, Zm)
    m_yz: torch.Tensor  # (N, Ym, Zm)
    map: torch.Tensor   # (N, Xm+Zm, Ym+Zm)

    @property
    def num_classes(self) -> int:
        return self.m_xy.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.m_xy.shape[1], self.m_xy.shape[2], self.m_xz.shape[2])

    def zeros_like(self) -> "MaskTensors":
        return MaskTensors(torch.zeros_like(self.m_xy), torch.zeros_like(self.m_xz),
                           torch.zeros_like(self.m_yz), torch.zeros_like(self.map))

    def to(self, dtype) -> "MaskTensors":
        return MaskTensors(self.m_xy.to(dtype), self.m_xz.to(dtype),
                           self.m_yz.to(dtype), self.map.to(dtype))


def mask_set_to_tensors(mask_set: SceneMaskSet, dtype=torch.float32) -> MaskTensors:
    m_xy = torch.from_numpy(np.stack([tm.m_xy for tm in mask_set.masks])).to(dtype)
    m_xz = torch.from_numpy(np.stack([tm.m_xz for tm in mask_set.masks])).to(dtype)
    m_yz = torch.from_numpy(np.stack([tm.m_yz for tm in mask_set.masks])).to(dtype)
    return MaskTensors(m_xy, m_xz, m_yz, concat_planes(m_xy, m_xz, m_yz))


def pool_semantic_tokens(mask: MaskTensors, latent_map: torch.Tensor) -> torch.Tensor:
    """(N, C_z) per-class tokens: masked mean of each feature plane over the
    class's mask support, averaged across the three planes.  Empty planes
    contribute zero vectors."""
    t_xy, t_xz, t_yz = split_map(latent_map, mask.dims)
    rows = []
    for i in range(mask.num_classes):
        v = (masked_mean(t_xy, mask.m_xy[i]) + masked_mean(t_xz, mask.m_xz[i])
             + masked_mean(t_yz, mask.m_yz[i])) / 3.0
        rows.append(v)
    return torch.stack(rows)


# ---------------------------------------------------------------------------
# Branches
# ---------------------------------------------------------------------------

@dataclass
class GSFMConfig:
    num_classes: int = 8
    mask_dims: tuple[int, int, int] = (16, 16, 8)
    c_z: int = 16
    c_emb: int = 64
    geo_hidden: int = 256
    sem_hidden: int = 256
    use_geometric_branch: bool = True
    use_semantic_branch: bool = True
    use_semantic_tokens: bool = True

    @property
    def map_hw(self) -> tuple[int, int]:
        return map_shape(self.mask_dims)


class GeometricBranch(nn.Module):
    """Shared two-layer embed of each class's flattened mask map, then one
    single-head self-attention block with post-LayerNorm and residual."""

    def __init__(self, cfg: GSFMConfig):
        super().__init__()
        h, w = cfg.map_hw
        self.map_hw = (h, w)
        self.fc1 = nn.Linear(h * w, cfg.geo_hidden)
        self.fc2 = nn.Linear(cfg.geo_hidden, cfg.c_emb)
        self.q = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.k = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.v = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.out = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.norm = nn.LayerNorm(cfg.c_emb)

    def embed(self, maps: torch.Tensor) -> torch.Tensor:
        if maps.shape[-2:] != self.map_hw:
            raise ValueError(f"map shape {tuple(maps.shape[-2:])} does not match "
                             f"weights for {self.map_hw}")
        flat = maps.reshape(maps.shape[0], -1)
        return linear(gelu(linear(flat, self.fc1.weight, self.fc1.bias)),
                      self.fc2.weight, self.fc2.bias)

    def self_attention(self, e_m: torch.Tensor) -> torch.Tensor:
        attn = attention(linear(e_m, self.q.weight, self.q.bias),
                         linear(e_m, self.k.weight, self.k.bias),
                         linear(e_m, self.v.weight, self.v.bias))
        attn = linear(attn, self.out.weight, self.out.bias)
        return e_m + layer_norm(attn, self.norm.weight, self.norm.bias)

    def forward(self, maps: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        e_m = self.embed(maps)
        return e_m, self.self_attention(e_m)


class SemanticBranch(nn.Module):
    """Label-embedding table plus projected pooled triplane tokens, through a
    shared two-layer network."""

    def __init__(self, cfg: GSFMConfig):
        super().__init__()
        self.label_table = nn.Embedding(cfg.num_classes, cfg.c_emb)
        self.token_proj = nn.Linear(cfg.c_z, cfg.c_emb) if cfg.use_semantic_tokens else None
        self.fc1 = nn.Linear(cfg.c_emb, cfg.sem_hidden)
        self.fc2 = nn.Linear(cfg.sem_hidden, cfg.c_emb)

    def forward(self, t_sem: torch.Tensor | None) -> tuple[torch.Tensor, torch.Tensor]:
        ids = torch.arange(self.label_table.num_embeddings)
        e_label = self.label_table(ids)
        if self.token_proj is not None:
            if t_sem is None:
                t_sem = e_label.new_zeros(e_label.shape[0], self.token_proj.in_features)
            x = e_label + linear(t_sem, self.token_proj.weight, self.token_proj.bias)
        else:
            x = e_label
        e_sem = linear(gelu(linear(x, self.fc1.weight, self.fc1.bias)),
                       self.fc2.weight, self.fc2.bias)
        return e_label, e_sem


class FusionModule(nn.Module):
    """Cross-attention of geometric queries over the stacked [geometric;
    semantic] rows, post-LayerNorm, residual."""

    def __init__(self, cfg: GSFMConfig):
        super().__init__()
        self.q = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.k = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.v = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.out = nn.Linear(cfg.c_emb, cfg.c_emb)
        self.norm = nn.LayerNorm(cfg.c_emb)

    def forward(self, e_m_prime: torch.Tensor, e_sem: torch.Tensor) -> torch.Tensor:
        kv = torch.cat([e_m_prime, e_sem], dim=0)
        attn = attention(linear(e_m_prime, self.q.weight, self.q.bias),
                         linear(kv, self.k.weight, self.k.bias),
                         linear(kv, self.v.weight, self.v.bias))
        attn = linear(attn, self.out.weight, self.out.bias)
        return e_m_prime + layer_norm(attn, self.norm.weight, self.norm.bias)


@dataclass(eq=False)
class FusedContext:
    """Conditioning tokens plus branch intermediates (None when disabled)."""

    tokens: torch.Tensor | None
    e_m: torch.Tensor | None = None
    e_m_prime: torch.Tensor | None = None
    e_label: torch.Tensor | None = None
    t_sem: torch.Tensor | None = None
    e_sem: torch.Tensor | None = None


class GSFM(nn.Module):
    """Full fusion module.  Disabled branches are absent from the module tree
    so their parameters never receive gradients."""

    def __init__(self, cfg: GSFMConfig):
        super().__init__()
        self.cfg = cfg
        self.geometric = GeometricBranch(cfg) if cfg.use_geometric_branch else None
        self.semantic = SemanticBranch(cfg) if cfg.use_semantic_branch else None
        both = cfg.use_geometric_branch and cfg.use_semantic_branch
        self.fusion = FusionModule(cfg) if both else None

    def forward(self, mask: MaskTensors, latent_map: torch.Tensor | None) -> FusedContext:
        ctx = FusedContext(tokens=None)
        if self.geometric is not None:
            ctx.e_m, ctx.e_m_prime = self.geometric(mask.map)
        if self.semantic is not None:
            if self.cfg.use_semantic_tokens and latent_map is not None:
                ctx.t_sem = pool_semantic_tokens(mask, latent_map)
            ctx.e_label, ctx.e_sem = self.semantic(ctx.t_sem)
        if self.fusion is not None:
            ctx.tokens = self.fusion(ctx.e_m_prime, ctx.e_sem)
        elif ctx.e_m_prime is not None:
            ctx.tokens = ctx.e_m_prime
        elif ctx.e_sem is not None:
            ctx.tokens = ctx.e_sem
        return ctx
