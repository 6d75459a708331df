"""Differentiable building blocks, gradient verification, Adam, checkpoints.

The model stack is built from exactly these primitives, backed by torch on
CPU.  Every primitive has an exact reverse-mode gradient; the finite-difference
harness below machine-checks them in double precision.  Checkpoints use the
SSCK binary container (named f32 tensors).
"""
from __future__ import annotations

import struct

import numpy as np
import torch
import torch.nn.functional as F

LAYERNORM_EPS = 1e-5

_SSCK_MAGIC = b"SSCK"
_SSCK_VERSION = 1


class CheckpointError(ValueError):
    """Raised on malformed SSCK streams or model/checkpoint mismatches."""


# ---------------------------------------------------------------------------
# Primitive ops.  Thin wrappers with shape validation; gradients come from the
# backend's reverse mode.
# ---------------------------------------------------------------------------

def conv3d(x, weight, bias=None, stride=(1, 1, 1), padding=0):
    if x.dim() != 5 or weight.dim() != 5:
        raise ValueError("conv3d expects rank-5 input (B,C,X,Y,Z) and weight")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[1]} vs weight {weight.shape[1]}")
    if any(s < 1 for s in stride):
        raise ValueError(f"invalid stride {stride}")
    return F.conv3d(x, weight, bias, stride=stride, padding=padding)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[1]} vs weight {weight.shape[1]}")
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


def linear(x, weight, bias=None):
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear shape mismatch: {x.shape[-1]} vs {weight.shape}")
    return F.linear(x, weight, bias)


def gelu(x):
    return F.gelu(x)  # exact (erf) form


def layer_norm(x, gamma=None, beta=None, eps=LAYERNORM_EPS):
    """LayerNorm over the last axis."""
    shape = (x.shape[-1],)
    if gamma is not None and tuple(gamma.shape) != shape:
        raise ValueError("gamma shape mismatch")
    return F.layer_norm(x, shape, gamma, beta, eps)


def softmax(x, dim=-1):
    return F.softmax(x, dim=dim)


def attention(q, k, v):
    """Single-head scaled-dot-product attention: softmax(q k^T / sqrt(d)) v."""
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("query/key width mismatch")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key/value count mismatch")
    scale = q.shape[-1] ** -0.5
    w = softmax(q @ k.transpose(-1, -2) * scale, dim=-1)
    return w @ v


def avg_pool_axis(x, axis):
    """Mean over one axis (the axis is removed)."""
    if not -x.dim() <= axis < x.dim():
        raise ValueError(f"axis {axis} out of range for rank {x.dim()}")
    return x.mean(dim=axis)


def masked_mean(x, mask):
    """Mean of x over cells where mask is nonzero; zero vector if mask is empty.

    x: (C, *spatial), mask: (*spatial).  Returns (C,).
    """
    if x.shape[1:] != mask.shape:
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match {tuple(x.shape)}")
    m = mask.to(x.dtype)
    count = m.sum()
    return (x * m).sum(dim=tuple(range(1, x.dim()))) / count.clamp(min=1)


def embedding_lookup(table, ids):
    if ids.max() >= table.shape[0] or ids.min() < 0:
        raise ValueError("embedding id out of range")
    return table[ids]


def concat(tensors, dim=0):
    return torch.cat(list(tensors), dim=dim)


def mse(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return F.mse_loss(pred, target)


def cross_entropy(logits, labels):
    """Mean per-point cross-entropy from raw logits (P, N) and class ids (P,)."""
    if logits.dim() != 2 or labels.dim() != 1 or logits.shape[0] != labels.shape[0]:
        raise ValueError("cross_entropy expects (P,N) logits and (P,) labels")
    if labels.max() >= logits.shape[1] or labels.min() < 0:
        raise ValueError("label out of range")
    return F.cross_entropy(logits, labels)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def finite_difference_check(fn, point, eps=1e-5, probe_seed=0):
    """Max relative error between the analytic gradient of fn at point and
    central differences.

    fn maps one tensor to one tensor; its output is reduced to a scalar via a
    fixed random probe so tensor-valued ops can be checked.  Runs in double
    precision regardless of the input dtype.  Error metric per element:
    |g_a - g_fd| / max(1, |g_a|, |g_fd|).
    """
    x = point.detach().to(torch.float64).requires_grad_(True)
    out = fn(x)
    if not torch.isfinite(out).all():
        raise FloatingPointError("non-finite values in forward pass")
    gen = torch.Generator().manual_seed(probe_seed)
    probe = torch.randn(out.shape, generator=gen, dtype=torch.float64)
    (out * probe).sum().backward()
    g_a = x.grad.detach().reshape(-1)
    if not torch.isfinite(g_a).all():
        raise FloatingPointError("non-finite analytic gradient")

    flat = x.detach().clone().reshape(-1)
    g_fd = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = (fn(flat.reshape(point.shape)) * probe).sum()
            flat[i] = orig - eps
            lo = (fn(flat.reshape(point.shape)) * probe).sum()
            flat[i] = orig
            g_fd[i] = (hi - lo) / (2 * eps)
    if not torch.isfinite(g_fd).all():
        raise FloatingPointError("non-finite finite-difference gradient")
    denom = torch.maximum(torch.ones_like(g_a), torch.maximum(g_a.abs(), g_fd.abs()))
    return ((g_a - g_fd).abs() / denom).max().item()


def check_parameter_gradient(model, inputs_fn, param_name, eps=1e-6):
    """Finite-difference check of a scalar loss wrt one named parameter of a
    torch module, using functional substitution of that parameter."""
    from torch.func import functional_call

    params = dict(model.named_parameters())
    if param_name not in params:
        raise KeyError(param_name)
    base = {k: v.detach() for k, v in params.items()}

    def fn(p):
        return inputs_fn(lambda *args, **kw: functional_call(
            model, {**base, param_name: p}, args, kw))

    return finite_difference_check(fn, base[param_name], eps=eps)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, torch.Tensor] = {}
        self.v: dict[str, torch.Tensor] = {}


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update with bias correction, in place on `params`.

    params/grads are name->tensor dicts.  Parameters whose gradient is missing
    or non-finite are skipped; the list of skipped names is returned.
    Deterministic given identical inputs.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    skipped = []
    for name in params:
        g = grads.get(name)
        if g is None:
            continue
        if not torch.isfinite(g).all():
            skipped.append(name)
            continue
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if name not in state.m:
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        with torch.no_grad():
            p.add_(-lr * m_hat / (v_hat.sqrt() + eps))
    return skipped


class Adam:
    """Adam over a torch module's parameters, reading .grad like an optimizer."""

    def __init__(self, module, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(module.named_parameters())
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self):
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        return adam_step(self.params, grads, self.state, self.lr, self.betas, self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# SSCK checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(params, sink) -> int:
    """Write a name->tensor mapping as SSCK (sorted by name, f32 little-endian).

    Returns the byte count written.
    """
    items = []
    for name in sorted(params):
        t = params[name]
        arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
        items.append((name, np.ascontiguousarray(arr, dtype="<f4")))
    parts = [_SSCK_MAGIC, struct.pack("<II", _SSCK_VERSION, len(items))]
    for name, arr in items:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    blob = b"".join(parts)
    sink.write(blob)
    return len(blob)


def load_checkpoint(source) -> dict[str, np.ndarray]:
    """Read an SSCK stream back into a name->float32-array mapping."""
    def need(n):
        buf = source.read(n)
        if buf is None or len(buf) < n:
            raise CheckpointError("truncated checkpoint")
        return buf

    if need(4) != _SSCK_MAGIC:
        raise CheckpointError("bad magic")
    version, count = struct.unpack("<II", need(8))
    if version != _SSCK_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", need(2))
        name = need(ln).decode("utf-8")
        (rank,) = struct.unpack("<B", need(1))
        dims = struct.unpack(f"<{rank}I", need(4 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(need(4 * size), dtype="<f4").reshape(dims)
        out[name] = arr.copy()
    return out


def module_state(module, prefix="") -> dict[str, torch.Tensor]:
    """Named parameters and buffers of a torch module, with an optional prefix."""
    state = {}
    for name, p in module.named_parameters():
        state[prefix + name] = p
    for name, b in module.named_buffers():
        state[prefix + name] = b
    return state


def load_into_module(module, arrays, prefix=""):
    """Copy checkpoint arrays into a module.  Raises listing any missing names;
    raises on shape mismatch against the model definition."""
    state = module_state(module, prefix)
    missing = [n for n in state if n not in arrays]
    if missing:
        raise CheckpointError(f"missing tensors: {', '.join(sorted(missing))}")
    for name, target in state.items():
        arr = arrays[name]
        if tuple(arr.shape) != tuple(target.shape):
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {tuple(arr.shape)} "
                f"vs model {tuple(target.shape)}")
        with torch.no_grad():
            target.copy_(torch.from_numpy(np.array(arr)))
