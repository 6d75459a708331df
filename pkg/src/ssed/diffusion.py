"""Mask-conditional latent diffusion over triplane maps.

The clean triplane latent, standardized per channel and tiled into the
concatenated 2D layout, is noised with a linear-beta schedule and denoised by
a small residual U-Net that predicts the clean latent directly (x0
prediction).  Conditioning enters two ways: the per-class mask maps are
concatenated to the input channels, and fused mask/label tokens feed
cross-attention at the coarse levels.  Samplers: ancestral DDPM on the x0
posterior, and a resampling (renoise-and-redenoise) variant for inpainting
comparisons.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .autoencoder import TriplaneAutoencoder, Triplane, reconstruct_scene
from .gsfm import (GSFM, GSFMConfig, FusedContext, MaskTensors, map_shape,
                   map_to_triplane, mask_set_to_tensors, triplane_to_map)
from .numerics import Adam, mse
from .trimask import SceneMaskSet
from .voxel import VoxelGrid


# ---------------------------------------------------------------------------
# Forward process
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class NoiseSchedule:
    """Linear-beta schedule; index t is 1-based, alpha_bar[0] is t=1 and the
    t=0 convention is alpha_bar=1 (no noise)."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def abar(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])


def make_schedule(T: int = 100, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"invalid beta endpoints ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(T, beta, alpha, np.cumprod(alpha))


def q_sample(x0: torch.Tensor, t: int, noise: torch.Tensor,
             sched: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward sample: sqrt(abar_t) x0 + sqrt(1-abar_t) noise."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"t={t} out of range [1, {sched.T}]")
    if noise.shape != x0.shape:
        raise ValueError("noise shape must match x0")
    a = sched.abar(t)
    return math.sqrt(a) * x0 + math.sqrt(1.0 - a) * noise


def posterior_coeffs(sched: NoiseSchedule, t: int, t_prev: int):
    """Gaussian posterior q(x_{t_prev} | x_t, x0) coefficients for the
    x0 parameterization: (coef_x0, coef_xt, variance).  Supports strided
    step sequences (t_prev < t need not be t-1); t_prev=0 returns the clean
    endpoint (mean = x0, variance 0)."""
    if not 0 <= t_prev < t <= sched.T:
        raise ValueError(f"invalid step pair ({t}, {t_prev})")
    a_t, a_p = sched.abar(t), sched.abar(t_prev)
    beta_eff = 1.0 - a_t / a_p
    coef_x0 = math.sqrt(a_p) * beta_eff / (1.0 - a_t)
    coef_xt = math.sqrt(a_t / a_p) * (1.0 - a_p) / (1.0 - a_t)
    var = (1.0 - a_p) / (1.0 - a_t) * beta_eff
    return coef_x0, coef_xt, var


def timestep_sequence(T: int, steps: int) -> list[int]:
    """Descending sample times, evenly spaced over [1, T], endpoints included."""
    if not 1 <= steps <= T:
        raise ValueError(f"steps={steps} must be in [1, {T}]")
    if steps == 1:
        return [T]
    ts = np.round(np.linspace(T, 1, steps)).astype(int)
    out = [int(ts[0])]
    for t in ts[1:]:
        if t < out[-1]:
            out.append(int(t))
    return out


# ---------------------------------------------------------------------------
# Denoiser
# ---------------------------------------------------------------------------

@dataclass
class DenoiserConfig:
    c_z: int = 16
    num_classes: int = 8
    mask_dims: tuple[int, int, int] = (16, 16, 8)
    base: int = 64
    mults: tuple[int, ...] = (1, 2, 4)
    res_blocks: int = 2
    time_embed_dim: int = 128
    c_emb: int = 64
    geo_hidden: int = 256
    sem_hidden: int = 256
    use_geometric_branch: bool = True
    use_semantic_branch: bool = True
    use_semantic_tokens: bool = True
    use_mask_concat: bool = True

    @property
    def in_channels(self) -> int:
        return self.c_z + (self.num_classes if self.use_mask_concat else 0)

    @property
    def has_context(self) -> bool:
        return self.use_geometric_branch or self.use_semantic_branch

    @property
    def map_hw(self) -> tuple[int, int]:
        return map_shape(self.mask_dims)

    def flags(self) -> dict[str, bool]:
        return {"use_geometric_branch": self.use_geometric_branch,
                "use_semantic_branch": self.use_semantic_branch,
                "use_semantic_tokens": self.use_semantic_tokens,
                "use_mask_concat": self.use_mask_concat}

    def gsfm_config(self) -> GSFMConfig:
        return GSFMConfig(num_classes=self.num_classes, mask_dims=self.mask_dims,
                          c_z=self.c_z, c_emb=self.c_emb, geo_hidden=self.geo_hidden,
                          sem_hidden=self.sem_hidden,
                          use_geometric_branch=self.use_geometric_branch,
                          use_semantic_branch=self.use_semantic_branch,
                          use_semantic_tokens=self.use_semantic_tokens)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time = nn.Linear(time_dim, c_out)
        self.norm2 = nn.GroupNorm(8, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class ContextAttention(nn.Module):
    """Single-head cross-attention from spatial positions to context tokens."""

    def __init__(self, channels: int, ctx_dim: int):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Linear(ctx_dim, channels)
        self.v = nn.Linear(ctx_dim, channels)
        self.out = nn.Conv2d(channels, channels, 1)

    def forward(self, x, ctx):
        if ctx is None:
            return x
        B, C, H, W = x.shape
        q = self.q(self.norm(x)).reshape(B, C, H * W).transpose(1, 2)
        k, v = self.k(ctx), self.v(ctx)
        attn = torch.softmax(q @ k.t() / math.sqrt(C), dim=-1) @ v
        return x + self.out(attn.transpose(1, 2).reshape(B, C, H, W))


class _Level(nn.Module):
    def __init__(self, blocks, attn):
        super().__init__()
        self.blocks = nn.ModuleList(blocks)
        self.attn = attn

    def forward(self, h, temb, ctx):
        for b in self.blocks:
            h = b(h, temb)
        if self.attn is not None:
            h = self.attn(h, ctx)
        return h


class Denoiser(nn.Module):
    """Residual U-Net over the concatenated-plane layout, x0 prediction.

    Cross-attention with the fused context tokens sits at the two coarsest
    resolution levels; the output head is zero-initialized so the model
    predicts exactly zero before training.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        L = len(cfg.mults)
        widths = [cfg.base * m for m in cfg.mults]
        time_dim = cfg.time_embed_dim * 2
        attn_levels = set(range(max(0, L - 2), L)) if cfg.has_context else set()
        self.time_mlp = nn.Sequential(nn.Linear(cfg.time_embed_dim, time_dim),
                                      nn.SiLU(), nn.Linear(time_dim, time_dim))
        self.stem = nn.Conv2d(cfg.in_channels, widths[0], 3, padding=1)

        def level(c_in, c_out, with_attn):
            blocks = [ResBlock(c_in, c_out, time_dim)]
            blocks += [ResBlock(c_out, c_out, time_dim) for _ in range(cfg.res_blocks - 1)]
            attn = ContextAttention(c_out, cfg.c_emb) if with_attn else None
            return _Level(blocks, attn)

        self.down_levels = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i in range(L):
            c_in = widths[0] if i == 0 else widths[i - 1]
            self.down_levels.append(level(c_in, widths[i], i in attn_levels))
            if i < L - 1:
                self.downsamples.append(nn.Conv2d(widths[i], widths[i], 3,
                                                  stride=2, padding=1))
        self.up_convs = nn.ModuleList()
        self.up_levels = nn.ModuleList()
        for i in range(L - 1, 0, -1):
            self.up_convs.append(nn.Conv2d(widths[i], widths[i], 3, padding=1))
            self.up_levels.append(level(widths[i] + widths[i - 1], widths[i - 1],
                                        (i - 1) in attn_levels))
        self.head_norm = nn.GroupNorm(8, widths[0])
        self.head = nn.Conv2d(widths[0], cfg.c_z, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor,
                ctx: torch.Tensor | None) -> torch.Tensor:
        cfg = self.cfg
        if x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
        stride = 2 ** (len(cfg.mults) - 1)
        if x.shape[2] % stride or x.shape[3] % stride:
            raise ValueError(f"spatial dims {tuple(x.shape[2:])} not divisible by {stride}")
        temb = self.time_mlp(timestep_embedding(t.to(x.dtype), cfg.time_embed_dim))
        h = self.stem(x)
        skips = []
        for i, lvl in enumerate(self.down_levels):
            h = lvl(h, temb, ctx)
            if i < len(self.downsamples):
                skips.append(h)
                h = self.downsamples[i](h)
        for conv, lvl in zip(self.up_convs, self.up_levels):
            h = conv(F.interpolate(h, scale_factor=2, mode="nearest"))
            h = torch.cat([h, skips.pop()], dim=1)
            h = lvl(h, temb, ctx)
        return self.head(F.silu(self.head_norm(h)))


class DiffusionModel(nn.Module):
    """GSFM + denoiser + schedule + latent standardization stats."""

    def __init__(self, cfg: DenoiserConfig, sched: NoiseSchedule):
        super().__init__()
        self.cfg = cfg
        self.sched = sched
        self.gsfm = GSFM(cfg.gsfm_config())
        self.denoiser = Denoiser(cfg)
        self.register_buffer("latent_mean", torch.zeros(cfg.c_z))
        self.register_buffer("latent_std", torch.ones(cfg.c_z))

    def context(self, mask: MaskTensors, token_latent: torch.Tensor | None) -> FusedContext:
        return self.gsfm(mask, token_latent)

    def forward(self, x_t: torch.Tensor, t: int, mask: MaskTensors,
                token_latent: torch.Tensor | None) -> torch.Tensor:
        """Predict the clean latent map from a noised one: (C_z, H, W) -> same."""
        ctx = self.context(mask, token_latent)
        x = torch.cat([x_t, mask.map], dim=0) if self.cfg.use_mask_concat else x_t
        t_batch = torch.full((1,), float(t))
        return self.denoiser(x.unsqueeze(0), t_batch, ctx.tokens).squeeze(0)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class DiffusionTrainConfig:
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    p_drop: float = 0.1
    lr: float = 1e-4
    batch_size: int = 1
    epochs: int = 40
    seed: int = 0
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)

    def __post_init__(self):
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must be in [0, 1)")
        if self.batch_size != 1:
            raise ValueError("per-sample updates only (batch_size=1)")


def training_step(model: DiffusionModel, x0_map: torch.Tensor, mask: MaskTensors,
                  p_drop: float, rng: np.random.Generator,
                  noise_gen: torch.Generator) -> torch.Tensor:
    """One x0-prediction MSE step: noise to a uniform t, optionally drop the
    mask conditioning (both injection routes), predict, compare to x0."""
    sched = model.sched
    t = int(rng.integers(1, sched.T + 1))
    noise = torch.randn(x0_map.shape, generator=noise_gen)
    x_t = q_sample(x0_map, t, noise, sched)
    cond = mask if rng.random() >= p_drop else mask.zeros_like()
    x0_hat = model(x_t, t, cond, x0_map)
    loss = mse(x0_hat, x0_map)
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite diffusion loss")
    return loss


def scene_latent_map(ae: TriplaneAutoencoder, grid: VoxelGrid) -> torch.Tensor:
    """Standardized triplane of a scene in the concatenated 2D layout."""
    with torch.no_grad():
        tp = ae.encode(grid)
    mean, std = ae.latent_mean[:, None, None], ae.latent_std[:, None, None]
    std_tp = Triplane((tp.t_xy - mean) / std, (tp.t_xz - mean) / std,
                      (tp.t_yz - mean) / std, tp.d, tp.d_z)
    return triplane_to_map(std_tp)


def train_diffusion(pairs, ae: TriplaneAutoencoder, cfg: DiffusionTrainConfig,
                    log=None, max_seconds: float | None = None):
    """Train on (VoxelGrid, SceneMaskSet) pairs against a trained autoencoder.

    Returns (model, curve) where curve rows are (epoch, mean_loss).
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    noise_gen = torch.Generator().manual_seed(cfg.seed + 1)
    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    model = DiffusionModel(cfg.denoiser, sched)
    model.latent_mean.copy_(ae.latent_mean)
    model.latent_std.copy_(ae.latent_std)

    data = []
    for grid, mask_set in pairs:
        data.append((scene_latent_map(ae, grid), mask_set_to_tensors(mask_set)))

    opt = Adam(model, lr=cfg.lr)
    curve = []
    start = time.monotonic()
    first_epoch_loss = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for idx in order:
            x0_map, mask = data[idx]
            opt.zero_grad()
            loss = training_step(model, x0_map, mask, cfg.p_drop, rng, noise_gen)
            loss.backward()
            opt.step()
            total += loss.item()
        mean_loss = total / max(1, len(data))
        curve.append((epoch, mean_loss))
        if log is not None:
            log(f"epoch {epoch}: loss {mean_loss:.5f}")
        if first_epoch_loss is None:
            first_epoch_loss = mean_loss
        elif not math.isfinite(mean_loss) or mean_loss > 50.0 * max(first_epoch_loss, 1e-8):
            raise RuntimeError(f"diffusion training diverged at epoch {epoch}")
        if max_seconds is not None and time.monotonic() - start > max_seconds:
            break
    return model, curve


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass
class SamplerConfig:
    strategy: str = "ddpm"
    steps: int = 100
    cfg_scale: float = 2.0
    resample_r: int = 5
    jump_j: int = 1
    seed: int = 0
    token_source: str = "x0"  # "x0": pool tokens from the running estimate; "zero": none

    def __post_init__(self):
        if self.strategy not in ("ddpm", "repaint"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.cfg_scale < 0:
            raise ValueError("cfg_scale must be >= 0")
        if self.resample_r < 0 or self.jump_j < 0:
            raise ValueError("resample_r and jump_j must be >= 0")
        if self.token_source not in ("x0", "zero"):
            raise ValueError(f"unknown token_source {self.token_source!r}")


X0_CLAMP = 3.0


def _guided_x0(model: DiffusionModel, x_t: torch.Tensor, t: int, mask: MaskTensors,
               mask_zero: MaskTensors, x0_est: torch.Tensor | None,
               w: float) -> torch.Tensor:
    """CFG on the x0 prediction: uncond + w (cond - uncond); w=1 never touches
    the unconditional path so it is bit-identical to conditional-only."""
    with torch.no_grad():
        cond = model(x_t, t, mask, x0_est)
        if w == 1.0:
            x0 = cond
        else:
            uncond = model(x_t, t, mask_zero, x0_est)
            x0 = (1.0 - w) * uncond + w * cond
    return x0.clamp(-X0_CLAMP, X0_CLAMP)


def _posterior_step(x0_hat: torch.Tensor, x_t: torch.Tensor, t: int, t_prev: int,
                    sched: NoiseSchedule, gen: torch.Generator) -> torch.Tensor:
    c0, ct, var = posterior_coeffs(sched, t, t_prev)
    mean = c0 * x0_hat + ct * x_t
    if t_prev == 0 or var == 0.0:
        return mean
    return mean + math.sqrt(var) * torch.randn(x_t.shape, generator=gen)


def _renoise(x: torch.Tensor, t_from: int, t_to: int, sched: NoiseSchedule,
             gen: torch.Generator) -> torch.Tensor:
    """Forward q transition from a lower to a higher time."""
    a = sched.abar(t_to) / sched.abar(t_from)
    return math.sqrt(a) * x + math.sqrt(1.0 - a) * torch.randn(x.shape, generator=gen)


def _sample(model: DiffusionModel, mask: MaskTensors, sampler: SamplerConfig,
            known_latent: torch.Tensor | None = None,
            known_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Shared ancestral loop; resampling and known-region overwrite degenerate
    away when r=0 and no region is given, leaving the plain DDPM trajectory."""
    sched = model.sched
    seq = timestep_sequence(sched.T, sampler.steps)
    gen = torch.Generator().manual_seed(sampler.seed)
    mask_zero = mask.zeros_like()
    shape = (model.cfg.c_z,) + model.cfg.map_hw
    x_t = torch.randn(shape, generator=gen)
    x0_est = torch.zeros(shape) if sampler.token_source == "x0" else None
    x0_hat = torch.zeros(shape)
    resamples = sampler.resample_r if sampler.strategy == "repaint" else 0
    km = None
    if known_mask is not None:
        km = known_mask.to(torch.float32)
        if km.shape != model.cfg.map_hw:
            raise ValueError("known_mask must match the map layout")
        km = km[None, :, :]

    def denoise_to(x, i):
        """One guided posterior step seq[i] -> seq[i+1] (or 0)."""
        nonlocal x0_est, x0_hat
        t = seq[i]
        t_prev = seq[i + 1] if i + 1 < len(seq) else 0
        if km is not None:
            noise = torch.randn(shape, generator=gen)
            x = km * q_sample(known_latent, t, noise, sched) + (1 - km) * x
        x0_hat = _guided_x0(model, x, t, mask, mask_zero, x0_est, sampler.cfg_scale)
        if x0_est is not None:
            x0_est = x0_hat
        return _posterior_step(x0_hat, x, t, t_prev, sched, gen)

    for i in range(len(seq)):
        x_prev = denoise_to(x_t, i)
        for _ in range(resamples):
            if i + 1 >= len(seq):
                break  # nothing below the final step to resample
            back = max(0, i + 1 - sampler.jump_j)
            x = _renoise(x_prev, seq[i + 1], seq[back], sched, gen)
            for k in range(back, i + 1):
                x = denoise_to(x, k)
            x_prev = x
        x_t = x_prev
    # the loop ends at t_prev=0 where the posterior mean is x0_hat itself
    if km is not None:
        x_t = km * known_latent + (1 - km) * x_t
    return x_t


def ddpm_sample(model: DiffusionModel, mask: MaskTensors,
                sampler: SamplerConfig) -> torch.Tensor:
    return _sample(model, mask, sampler)


def repaint_sample(model: DiffusionModel, mask: MaskTensors, sampler: SamplerConfig,
                   known_latent: torch.Tensor | None = None,
                   known_mask: torch.Tensor | None = None) -> torch.Tensor:
    return _sample(model, mask, sampler, known_latent, known_mask)


def generate_scene(mask_set: SceneMaskSet, model: DiffusionModel,
                   ae: TriplaneAutoencoder, sampler: SamplerConfig) -> VoxelGrid:
    """Mask set -> sampled latent -> de-standardized triplane -> argmax scene."""
    if mask_set.num_classes != model.cfg.num_classes:
        raise ValueError(f"mask set has {mask_set.num_classes} classes, "
                         f"model expects {model.cfg.num_classes}")
    if tuple(mask_set.dims) != tuple(model.cfg.mask_dims):
        raise ValueError(f"mask dims {mask_set.dims} do not match model "
                         f"{model.cfg.mask_dims}")
    mask = mask_set_to_tensors(mask_set)
    if sampler.strategy == "repaint":
        x0 = repaint_sample(model, mask, sampler)
    else:
        x0 = ddpm_sample(model, mask, sampler)
    mean, std = model.latent_mean[:, None, None], model.latent_std[:, None, None]
    tp = map_to_triplane(x0 * std + mean, model.cfg.mask_dims, ae.cfg.d, ae.cfg.d_z)
    xm, ym, zm = model.cfg.mask_dims
    dims = (xm * ae.cfg.d, ym * ae.cfg.d, zm * ae.cfg.d_z)
    return reconstruct_scene(ae, tp, dims)


def bench_sampling(model: DiffusionModel, mask_set: SceneMaskSet,
                   strategies=("ddpm", "repaint"), steps_list=(10, 100),
                   runs: int = 1,
                   base_sampler: SamplerConfig | None = None) -> list[dict]:
    """Wall-time rows for each strategy at each step count."""
    base = base_sampler or SamplerConfig()
    mask = mask_set_to_tensors(mask_set)
    rows = []
    for strategy in strategies:
        for steps in steps_list:
            total = 0.0
            for run in range(runs):
                sampler = SamplerConfig(strategy=strategy, steps=steps,
                                        cfg_scale=base.cfg_scale,
                                        resample_r=base.resample_r,
                                        jump_j=base.jump_j, seed=base.seed + run,
                                        token_source=base.token_source)
                t0 = time.monotonic()
                _sample(model, mask, sampler)
                total += time.monotonic() - t0
            rows.append({"strategy": strategy, "steps": steps,
                         "wall_seconds": total / runs})
    return rows


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_diffusion(model: DiffusionModel, cfg: DiffusionTrainConfig, path) -> None:
    from .numerics import module_state, save_checkpoint
    params = module_state(model.denoiser, "diffusion.")
    params.update(module_state(model.gsfm, "gsfm."))
    d = model.cfg
    flag_vec = [float(v) for v in d.flags().values()]
    meta = {
        "meta.diffusion.schedule": torch.tensor([float(model.sched.T),
                                                 cfg.beta_start, cfg.beta_end]),
        "meta.diffusion.p_drop": torch.tensor([cfg.p_drop]),
        "meta.diffusion.flags": torch.tensor(flag_vec),
        "meta.diffusion.arch": torch.tensor([float(v) for v in
                                             (d.c_z, d.num_classes, d.base,
                                              d.res_blocks, d.time_embed_dim,
                                              d.c_emb, d.geo_hidden, d.sem_hidden)]),
        "meta.diffusion.mults": torch.tensor([float(m) for m in d.mults]),
        "meta.diffusion.mask_dims": torch.tensor([float(v) for v in d.mask_dims]),
        "meta.diffusion.latent_mean": model.latent_mean.detach().clone(),
        "meta.diffusion.latent_std": model.latent_std.detach().clone(),
    }
    params.update(meta)
    with open(path, "wb") as f:
        save_checkpoint(params, f)


def load_diffusion(path) -> tuple[DiffusionModel, DiffusionTrainConfig]:
    from .numerics import CheckpointError, load_checkpoint, load_into_module
    with open(path, "rb") as f:
        arrays = load_checkpoint(f)
    try:
        T, beta_start, beta_end = arrays["meta.diffusion.schedule"]
        p_drop = float(arrays["meta.diffusion.p_drop"][0])
        flags = arrays["meta.diffusion.flags"]
        arch = arrays["meta.diffusion.arch"]
        mults = tuple(int(m) for m in arrays["meta.diffusion.mults"])
        mask_dims = tuple(int(v) for v in arrays["meta.diffusion.mask_dims"])
    except KeyError as e:
        raise CheckpointError(f"missing tensors: {e.args[0]}") from None
    c_z, num_classes, base, res_blocks, time_embed_dim, c_emb, geo_h, sem_h = (
        int(v) for v in arch)
    fg, fs, ft, fm = (bool(round(float(v))) for v in flags)
    dcfg = DenoiserConfig(c_z=c_z, num_classes=num_classes, mask_dims=mask_dims,
                          base=base, mults=mults, res_blocks=res_blocks,
                          time_embed_dim=time_embed_dim, c_emb=c_emb,
                          geo_hidden=geo_h, sem_hidden=sem_h,
                          use_geometric_branch=fg, use_semantic_branch=fs,
                          use_semantic_tokens=ft, use_mask_concat=fm)
    tcfg = DiffusionTrainConfig(T=int(T), beta_start=float(beta_start),
                                beta_end=float(beta_end), p_drop=p_drop,
                                denoiser=dcfg)
    model = DiffusionModel(dcfg, make_schedule(int(T), float(beta_start),
                                               float(beta_end)))
    load_into_module(model.denoiser, arrays, "diffusion.")
    load_into_module(model.gsfm, arrays, "gsfm.")
    model.latent_mean.copy_(torch.from_numpy(arrays["meta.diffusion.latent_mean"]))
    model.latent_std.copy_(torch.from_numpy(arrays["meta.diffusion.latent_std"]))
    return model, tcfg
