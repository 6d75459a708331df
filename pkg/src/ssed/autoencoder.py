"""Stage one: triplane scene autoencoder.

Encodes a labeled voxel grid into three orthogonal 2D feature planes via a 3D
conv stack + axis-wise average pooling, and decodes by querying the planes at
continuous points (bilinear lookups summed across planes, plus sinusoidal
positional embedding) through a small MLP to per-class logits.  Trained with
point cross-entropy plus a weighted Lovasz-softmax term on the full
reconstructed grid.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from . import numerics
from .numerics import Adam, gelu
from .voxel import VoxelGrid


@dataclass
class AEConfig:
    c_z: int = 16            # latent channels per plane
    d: int = 2               # xy downsampling factor (1 or 2)
    d_z: int = 1             # z downsampling factor (1 or 2)
    alpha: float = 1.0       # weight of the Lovasz term
    pos_bands: int = 10      # sinusoidal bands per axis
    decoder_width: int = 128
    points_per_step: int = 4096
    lr: float = 1e-3
    lr_schedule: str = "constant"  # or "cosine" (decay to ~0 over the run)
    batch_size: int = 4
    epochs: int = 60
    seed: int = 0
    num_classes: int = 8
    encoder_width: int = 32
    standardize_latent: bool = True

    def check_dims(self, dims):
        X, Y, Z = dims
        if X % self.d or Y % self.d or Z % self.d_z:
            raise ValueError(f"dims {dims} not divisible by (d={self.d}, d_z={self.d_z})")


@dataclass
class Triplane:
    """Three orthogonal feature planes t_xy (C,Xm,Ym), t_xz (C,Xm,Zm),
    t_yz (C,Ym,Zm), plus the downsampling factors that map them back to grid
    coordinates."""

    t_xy: torch.Tensor
    t_xz: torch.Tensor
    t_yz: torch.Tensor
    d: int = 2
    d_z: int = 1

    def __post_init__(self):
        c = self.t_xy.shape[0]
        if self.t_xz.shape[0] != c or self.t_yz.shape[0] != c:
            raise ValueError("planes must share the channel count")
        xm, ym = self.t_xy.shape[1:]
        if self.t_xz.shape[1] != xm or self.t_yz.shape[1] != ym:
            raise ValueError("plane spatial dims inconsistent")
        if self.t_xz.shape[2] != self.t_yz.shape[2]:
            raise ValueError("plane spatial dims inconsistent")

    @property
    def channels(self) -> int:
        return self.t_xy.shape[0]

    @property
    def mask_dims(self) -> tuple[int, int, int]:
        return (self.t_xy.shape[1], self.t_xy.shape[2], self.t_xz.shape[2])

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        xm, ym, zm = self.mask_dims
        return (xm * self.d, ym * self.d, zm * self.d_z)

    def __add__(self, other: "Triplane") -> "Triplane":
        return Triplane(self.t_xy + other.t_xy, self.t_xz + other.t_xz,
                        self.t_yz + other.t_yz, self.d, self.d_z)


def pool_to_triplane(z: torch.Tensor, d: int, d_z: int) -> Triplane:
    """Axis-wise mean pooling of a (C, Xm, Ym, Zm) latent volume into planes."""
    if z.dim() != 4:
        raise ValueError("expected (C, Xm, Ym, Zm) latent")
    return Triplane(z.mean(dim=3), z.mean(dim=2), z.mean(dim=1), d, d_z)


class SceneEncoder(nn.Module):
    """One-hot grid -> 3D conv stack -> latent volume -> axis-pooled planes."""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        if cfg.d not in (1, 2) or cfg.d_z not in (1, 2):
            raise ValueError("encoder supports downsampling factors 1 or 2 per axis")
        self.cfg = cfg
        w = cfg.encoder_width
        self.conv_in = nn.Conv3d(cfg.num_classes, w, 3, padding=1)
        self.conv_down = nn.Conv3d(w, w, 3, stride=(cfg.d, cfg.d, cfg.d_z), padding=1)
        # Post-stride refinement at latent resolution: axis pooling dilutes a
        # sparse object's code by the pooled-axis length, so the pre-pooling
        # stack needs enough depth to form codes that survive the averaging.
        self.conv_mid1 = nn.Conv3d(w, w, 3, padding=1)
        self.conv_mid2 = nn.Conv3d(w, w, 3, padding=1)
        self.conv_out = nn.Conv3d(w, cfg.c_z, 1)

    def forward(self, onehot: torch.Tensor) -> torch.Tensor:
        """(B, N, X, Y, Z) -> (B, C_z, Xm, Ym, Zm)."""
        h = gelu(self.conv_in(onehot))
        h = gelu(self.conv_down(h))
        h = h + gelu(self.conv_mid1(h))
        h = h + gelu(self.conv_mid2(h))
        return self.conv_out(h)


def one_hot_grid(grid: VoxelGrid, dtype=torch.float32) -> torch.Tensor:
    """(N, X, Y, Z) one-hot encoding of a grid."""
    t = torch.from_numpy(grid.labels.astype(np.int64))
    return torch.nn.functional.one_hot(t, grid.num_classes).permute(3, 0, 1, 2).to(dtype)


def _bilinear_plane(plane: torch.Tensor, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Bilinear lookup on (C, H, W) at continuous (u, v), edges clamped.
    Returns (P, C)."""
    H, W = plane.shape[1:]
    i0 = torch.floor(u)
    j0 = torch.floor(v)
    fu = (u - i0).to(plane.dtype)
    fv = (v - j0).to(plane.dtype)
    i0 = i0.long()
    j0 = j0.long()
    i0c = i0.clamp(0, H - 1)
    i1c = (i0 + 1).clamp(0, H - 1)
    j0c = j0.clamp(0, W - 1)
    j1c = (j0 + 1).clamp(0, W - 1)
    p00 = plane[:, i0c, j0c]
    p01 = plane[:, i0c, j1c]
    p10 = plane[:, i1c, j0c]
    p11 = plane[:, i1c, j1c]
    out = (p00 * (1 - fu) * (1 - fv) + p01 * (1 - fu) * fv
           + p10 * fu * (1 - fv) + p11 * fu * fv)
    return out.transpose(0, 1)


def query_triplane(tp: Triplane, coords: torch.Tensor) -> torch.Tensor:
    """Sum of bilinear lookups of the three planes at projected coordinates.

    coords: (P, 3) continuous grid-space positions; integer values are voxel
    centers.  Plane coordinates are voxel-center aligned: grid position g maps
    to plane position (g - (d-1)/2) / d along downsampled axes.
    """
    X, Y, Z = tp.grid_dims
    x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
    if (x.min() < 0 or y.min() < 0 or z.min() < 0
            or x.max() >= X or y.max() >= Y or z.max() >= Z):
        raise ValueError("query coordinate out of bounds")
    u = (x - (tp.d - 1) / 2) / tp.d
    v = (y - (tp.d - 1) / 2) / tp.d
    w = (z - (tp.d_z - 1) / 2) / tp.d_z
    return (_bilinear_plane(tp.t_xy, u, v)
            + _bilinear_plane(tp.t_xz, u, w)
            + _bilinear_plane(tp.t_yz, v, w))


def positional_embedding(coords: torch.Tensor, dims, bands: int) -> torch.Tensor:
    """Sinusoidal embedding of coords normalized to [0, 1): sin/cos of
    2^k * pi * u for k < bands, per axis.  (P, 3) -> (P, 6 * bands)."""
    norm = coords / coords.new_tensor([float(d) for d in dims])
    k = 2.0 ** torch.arange(bands, dtype=coords.dtype) * torch.pi
    phases = norm.unsqueeze(-1) * k  # (P, 3, bands)
    out = torch.cat([torch.sin(phases), torch.cos(phases)], dim=-1)
    return out.reshape(coords.shape[0], 6 * bands)


class PointDecoder(nn.Module):
    """Per-point MLP: triplane features + positional embedding -> class logits."""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        w = cfg.decoder_width
        in_dim = cfg.c_z + 6 * cfg.pos_bands
        self.fc1 = nn.Linear(in_dim, w)
        self.fc2 = nn.Linear(w, w)
        self.fc3 = nn.Linear(w, w)
        self.fc4 = nn.Linear(w, cfg.num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        h = gelu(self.fc1(features))
        h = gelu(self.fc2(h))
        h = gelu(self.fc3(h))
        return self.fc4(h)


class TriplaneAutoencoder(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = SceneEncoder(cfg)
        self.decoder = PointDecoder(cfg)
        # per-channel latent standardization statistics (identity until trained)
        self.register_buffer("latent_mean", torch.zeros(cfg.c_z))
        self.register_buffer("latent_std", torch.ones(cfg.c_z))

    def encode(self, grid: VoxelGrid) -> Triplane:
        self.cfg.check_dims(grid.dims)
        onehot = one_hot_grid(grid, dtype=self.latent_mean.dtype).unsqueeze(0)
        z = self.encoder(onehot)[0]
        return pool_to_triplane(z, self.cfg.d, self.cfg.d_z)

    def encode_batch(self, grids) -> list[Triplane]:
        for g in grids:
            self.cfg.check_dims(g.dims)
        onehot = torch.stack([one_hot_grid(g, dtype=self.latent_mean.dtype) for g in grids])
        z = self.encoder(onehot)
        return [pool_to_triplane(z[i], self.cfg.d, self.cfg.d_z) for i in range(len(grids))]

    def decode_points(self, features: torch.Tensor, coords: torch.Tensor, dims) -> torch.Tensor:
        pe = positional_embedding(coords.to(features.dtype), dims, self.cfg.pos_bands)
        return self.decoder(torch.cat([features, pe], dim=-1))


def grid_coords(dims, dtype=torch.float32) -> torch.Tensor:
    """All voxel centers of a grid as (X*Y*Z, 3), x fastest."""
    X, Y, Z = dims
    xs = torch.arange(X, dtype=dtype)
    ys = torch.arange(Y, dtype=dtype)
    zs = torch.arange(Z, dtype=dtype)
    gx, gy, gz = torch.meshgrid(xs, ys, zs, indexing="ij")
    coords = torch.stack([gx, gy, gz], dim=-1).reshape(-1, 3)
    # reorder to x-fastest to match VoxelGrid.ravel(order="F")
    idx = torch.arange(X * Y * Z).reshape(X, Y, Z).permute(2, 1, 0).reshape(-1)
    return coords[idx]


def decode_full_grid(model: TriplaneAutoencoder, tp: Triplane, dims,
                     chunk: int = 16384) -> torch.Tensor:
    """Logits for every voxel center, x-fastest order: (X*Y*Z, N)."""
    coords = grid_coords(dims, dtype=model.latent_mean.dtype)
    outs = []
    for i in range(0, coords.shape[0], chunk):
        c = coords[i:i + chunk]
        outs.append(model.decode_points(query_triplane(tp, c), c, dims))
    return torch.cat(outs, dim=0)


def reconstruct_scene(model: TriplaneAutoencoder, tp: Triplane, dims) -> VoxelGrid:
    """Argmax decode of every voxel center; ties break toward the lower class id."""
    if tp.grid_dims != tuple(dims):
        raise ValueError(f"dims {dims} inconsistent with triplane {tp.grid_dims}")
    with torch.no_grad():
        logits = decode_full_grid(model, tp, dims)
    flat = np.argmax(logits.numpy(), axis=1).astype(np.uint16)  # first max wins
    X, Y, Z = dims
    return VoxelGrid(flat.reshape((X, Y, Z), order="F"), model.cfg.num_classes)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _lovasz_grad(fg_sorted: torch.Tensor) -> torch.Tensor:
    """Gradient of the Lovasz extension wrt sorted errors (Jaccard set function)."""
    gts = fg_sorted.sum()
    intersection = gts - fg_sorted.cumsum(0)
    union = gts + (1 - fg_sorted).cumsum(0)
    jaccard = 1.0 - intersection / union
    if fg_sorted.numel() > 1:
        jaccard = jaccard.clone()
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Lovasz extension of the per-class Jaccard loss on softmax probabilities,
    averaged over classes present in the labels.

    probs: (P, N) rows summing to 1 (tolerance 1e-4); labels: (P,) class ids.
    Zero for a perfect one-hot match; always within [0, 1].
    """
    if probs.dim() != 2 or labels.shape[0] != probs.shape[0]:
        raise ValueError("expected (P,N) probs and (P,) labels")
    sums = probs.detach().sum(dim=1)
    if (sums - 1).abs().max() > 1e-4:
        raise ValueError("probability rows must sum to 1")
    losses = []
    for c in range(probs.shape[1]):
        fg = (labels == c).to(probs.dtype)
        if fg.sum() == 0:
            continue
        errors = (fg - probs[:, c]).abs()
        errors_sorted, perm = torch.sort(errors, dim=0, descending=True)
        grad = _lovasz_grad(fg[perm])
        losses.append(torch.dot(errors_sorted, grad))
    if not losses:
        return probs.sum() * 0.0
    return torch.stack(losses).mean()


def ae_loss(point_logits, point_labels, recon_logits, grid_labels, alpha=1.0):
    """Point cross-entropy + alpha * Lovasz-softmax on the full grid.

    Returns (total, ce, lovasz) tensors.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    ce = numerics.cross_entropy(point_logits, point_labels)
    if alpha == 0:
        zero = ce.detach() * 0.0
        return ce, ce, zero
    lov = lovasz_softmax(torch.softmax(recon_logits, dim=-1), grid_labels)
    return ce + alpha * lov, ce, lov


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _sample_point_indices(rng, labels_flat: np.ndarray, n_points: int) -> np.ndarray:
    """Class-balanced point sampling: an equal share of points, drawn with
    replacement, from every class present in the grid.  Rare classes would
    otherwise contribute almost no cross-entropy signal."""
    classes = np.unique(labels_flat)
    share = max(1, n_points // classes.size)
    picks = [rng.choice(np.flatnonzero(labels_flat == c), size=share, replace=True)
             for c in classes]
    idx = np.concatenate(picks)
    if idx.size < n_points:
        idx = np.concatenate([idx, rng.choice(idx, size=n_points - idx.size)])
    return idx[:n_points]


def compute_latent_stats(model: TriplaneAutoencoder, grids) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel mean/std of plane features over a scene set."""
    cells = [[] for _ in range(3)]
    with torch.no_grad():
        for g in grids:
            tp = model.encode(g)
            for i, p in enumerate((tp.t_xy, tp.t_xz, tp.t_yz)):
                cells[i].append(p.reshape(p.shape[0], -1))
    allc = torch.cat([torch.cat(c, dim=1) for c in cells], dim=1)
    return allc.mean(dim=1), allc.std(dim=1).clamp(min=1e-6)


def train_autoencoder(scenes, cfg: AEConfig, log=None, max_seconds=None):
    """Train on a scene list.  Deterministic given cfg.seed.

    Returns (model, curve) where curve rows are (epoch, ce, lovasz, total).
    Raises on divergence (non-finite loss).
    """
    if not scenes:
        raise ValueError("need at least one scene")
    dims = scenes[0].dims
    for g in scenes:
        if g.dims != dims or g.num_classes != cfg.num_classes:
            raise ValueError("scenes must share dims and num_classes")
    cfg.check_dims(dims)

    if cfg.lr_schedule not in ("cosine", "constant"):
        raise ValueError(f"unknown lr_schedule {cfg.lr_schedule!r}")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = TriplaneAutoencoder(cfg)
    opt = Adam(model, lr=cfg.lr)
    steps_per_epoch = (len(scenes) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    global_step = 0

    flat_labels = [torch.from_numpy(g.labels.ravel(order="F").astype(np.int64)) for g in scenes]
    flat_np = [g.labels.ravel(order="F") for g in scenes]

    curve = []
    t_start = time.time()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(scenes))
        ep_ce, ep_lov, ep_total, n_batches = 0.0, 0.0, 0.0, 0
        for b0 in range(0, len(scenes), cfg.batch_size):
            batch = order[b0:b0 + cfg.batch_size]
            planes = model.encode_batch([scenes[i] for i in batch])
            total = ce_sum = lov_sum = 0.0
            for i, tp in zip(batch, planes):
                recon_logits = decode_full_grid(model, tp, dims)
                idx = torch.from_numpy(
                    _sample_point_indices(rng, flat_np[i], cfg.points_per_step))
                loss, ce, lov = ae_loss(recon_logits[idx], flat_labels[i][idx],
                                        recon_logits, flat_labels[i], cfg.alpha)
                total = total + loss
                ce_sum = ce_sum + ce.detach()
                lov_sum = lov_sum + lov.detach()
            total = total / len(batch)
            if not torch.isfinite(total):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={total.item()}")
            opt.zero_grad()
            total.backward()
            if cfg.lr_schedule == "cosine":
                opt.lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * global_step / total_steps))
            opt.step()
            global_step += 1
            ep_total += total.item()
            ep_ce += (ce_sum / len(batch)).item()
            ep_lov += (lov_sum / len(batch)).item()
            n_batches += 1
        row = (epoch, ep_ce / n_batches, ep_lov / n_batches, ep_total / n_batches)
        curve.append(row)
        if log:
            log(f"epoch {row[0]}: ce={row[1]:.4f} lovasz={row[2]:.4f} total={row[3]:.4f}")
        if max_seconds is not None and time.time() - t_start > max_seconds:
            break

    if cfg.standardize_latent:
        mean, std = compute_latent_stats(model, scenes)
        with torch.no_grad():
            model.latent_mean.copy_(mean)
            model.latent_std.copy_(std)
    return model, curve


def reconstruction_miou(model: TriplaneAutoencoder, scenes) -> float:
    """Mean over scenes of miou(reconstruct(encode(scene)), scene)."""
    from .voxel import miou
    scores = []
    with torch.no_grad():
        for g in scenes:
            tp = model.encode(g)
            scores.append(miou(reconstruct_scene(model, tp, g.dims), g))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Checkpoint round trip
# ---------------------------------------------------------------------------

_AE_META_FIELDS = ("c_z", "d", "d_z", "pos_bands", "decoder_width",
                   "num_classes", "encoder_width")


def save_autoencoder(model: TriplaneAutoencoder, path) -> None:
    state = numerics.module_state(model, prefix="ae.")
    for f in _AE_META_FIELDS:
        state["meta.ae." + f] = np.array([getattr(model.cfg, f)], dtype=np.float32)
    with open(path, "wb") as fh:
        numerics.save_checkpoint(state, fh)


def load_autoencoder(path) -> TriplaneAutoencoder:
    with open(path, "rb") as fh:
        arrays = numerics.load_checkpoint(fh)
    kwargs = {}
    for f in _AE_META_FIELDS:
        key = "meta.ae." + f
        if key not in arrays:
            raise numerics.CheckpointError(f"missing tensors: {key}")
        kwargs[f] = int(arrays[key][0])
    model = TriplaneAutoencoder(AEConfig(**kwargs))
    numerics.load_into_module(model, arrays, prefix="ae.")
    return model
