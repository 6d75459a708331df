"""Trimask assets: per-class binary plane triples, editing algebra, library.

A trimask compresses a class's 3D occupancy into three orthogonal binary
projections (xy, xz, yz) at mask resolution.  Scenes decompose into one
trimask per class; assets persist in the TMSK binary container inside a
directory library with a JSON manifest.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .voxel import VoxelGrid

_TMSK_MAGIC = b"TMSK"
_TMSK_VERSION = 1
_TMSS_MAGIC = b"TMSS"

KIND_SCENE = "scene-level"
KIND_BASIC = "basic"
_KIND_CODES = {KIND_SCENE: 0, KIND_BASIC: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class AssetFormatError(ValueError):
    """Raised on malformed TMSK/TMSS streams."""


def _as_binary(plane) -> np.ndarray:
    arr = np.asarray(plane)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask planes must be binary")
    return arr.astype(np.uint8)


@dataclass(eq=False)
class Trimask:
    """Binary projections of one class: m_xy (Xm,Ym), m_xz (Xm,Zm), m_yz (Ym,Zm)."""

    class_id: int
    m_xy: np.ndarray
    m_xz: np.ndarray
    m_yz: np.ndarray

    def __post_init__(self):
        self.m_xy = _as_binary(self.m_xy)
        self.m_xz = _as_binary(self.m_xz)
        self.m_yz = _as_binary(self.m_yz)
        xm, ym = self.m_xy.shape
        if self.m_xz.shape[0] != xm or self.m_yz.shape[0] != ym:
            raise ValueError("plane dims inconsistent")
        if self.m_xz.shape[1] != self.m_yz.shape[1]:
            raise ValueError("plane dims inconsistent")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.m_xy.shape[0], self.m_xy.shape[1], self.m_xz.shape[1])

    def is_empty(self) -> bool:
        return not (self.m_xy.any() or self.m_xz.any() or self.m_yz.any())

    def popcount(self) -> int:
        return int(self.m_xy.sum()) + int(self.m_xz.sum()) + int(self.m_yz.sum())

    def copy(self) -> "Trimask":
        return Trimask(self.class_id, self.m_xy.copy(), self.m_xz.copy(), self.m_yz.copy())

    def __eq__(self, other):
        if not isinstance(other, Trimask):
            return NotImplemented
        return (self.class_id == other.class_id
                and np.array_equal(self.m_xy, other.m_xy)
                and np.array_equal(self.m_xz, other.m_xz)
                and np.array_equal(self.m_yz, other.m_yz))


def empty_trimask(class_id: int, dims) -> Trimask:
    xm, ym, zm = dims
    return Trimask(class_id, np.zeros((xm, ym), np.uint8),
                   np.zeros((xm, zm), np.uint8), np.zeros((ym, zm), np.uint8))


def trimask_bbox(tm: Trimask) -> tuple[int, int, int, int, int, int]:
    """Tight half-open bbox (x0,y0,z0,x1,y1,z1) of the union of plane supports;
    all zeros if the trimask is empty."""
    if tm.is_empty():
        return (0, 0, 0, 0, 0, 0)
    xs = np.flatnonzero(tm.m_xy.any(axis=1) | tm.m_xz.any(axis=1))
    ys = np.flatnonzero(tm.m_xy.any(axis=0) | tm.m_yz.any(axis=1))
    zs = np.flatnonzero(tm.m_xz.any(axis=0) | tm.m_yz.any(axis=0))
    x0, x1 = (int(xs[0]), int(xs[-1]) + 1) if xs.size else (0, 0)
    y0, y1 = (int(ys[0]), int(ys[-1]) + 1) if ys.size else (0, 0)
    z0, z1 = (int(zs[0]), int(zs[-1]) + 1) if zs.size else (0, 0)
    return (x0, y0, z0, x1, y1, z1)


@dataclass(eq=False)
class SceneMaskSet:
    """One trimask per class id 0..N-1, all sharing mask dims."""

    masks: list[Trimask]
    dims: tuple[int, int, int]

    def __post_init__(self):
        for i, tm in enumerate(self.masks):
            if tm.class_id != i:
                raise ValueError("masks must be ordered by class id")
            if tm.dims != tuple(self.dims):
                raise ValueError("all trimasks must share dims")

    @property
    def num_classes(self) -> int:
        return len(self.masks)

    def copy(self) -> "SceneMaskSet":
        return SceneMaskSet([m.copy() for m in self.masks], self.dims)

    def __eq__(self, other):
        if not isinstance(other, SceneMaskSet):
            return NotImplemented
        return self.dims == other.dims and self.masks == other.masks


def empty_mask_set(num_classes: int, dims) -> SceneMaskSet:
    return SceneMaskSet([empty_trimask(c, dims) for c in range(num_classes)], tuple(dims))


@dataclass(eq=False)
class AssetRecord:
    """A stored trimask: scene-level (whole decomposed scene class) or basic
    (an individual object)."""

    id: str
    kind: str
    class_id: int
    trimask: Trimask
    bbox: tuple[int, int, int, int, int, int]
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown asset kind {self.kind!r}")
        tight = trimask_bbox(self.trimask)
        if tuple(self.bbox) != tight:
            raise ValueError(f"bbox {self.bbox} is not the tight bbox {tight}")

    def __eq__(self, other):
        if not isinstance(other, AssetRecord):
            return NotImplemented
        return (self.id == other.id and self.kind == other.kind
                and self.class_id == other.class_id
                and tuple(self.bbox) == tuple(other.bbox)
                and self.provenance == other.provenance
                and self.trimask == other.trimask)


def make_asset(id: str, kind: str, trimask: Trimask, provenance: str = "") -> AssetRecord:
    return AssetRecord(id, kind, trimask.class_id, trimask, trimask_bbox(trimask), provenance)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

def _pool_mask(mask3d: np.ndarray, d: int, d_z: int) -> np.ndarray:
    """Binary max-pool of a (X, Y, Z) mask down to (X/d, Y/d, Z/d_z)."""
    X, Y, Z = mask3d.shape
    if X % d or Y % d or Z % d_z:
        raise ValueError(f"dims {mask3d.shape} not divisible by (d={d}, d_z={d_z})")
    r = mask3d.reshape(X // d, d, Y // d, d, Z // d_z, d_z)
    return r.any(axis=(1, 3, 5))


def decompose_class(grid: VoxelGrid, class_id: int, d: int = 2, d_z: int = 1) -> Trimask:
    """Project one class's occupancy onto the three orthogonal planes at mask
    resolution (max-pool by (d, d, d_z) first, then any-along-axis)."""
    if not 0 <= class_id < grid.num_classes:
        raise ValueError(f"class {class_id} out of range")
    pooled = _pool_mask(grid.labels == class_id, d, d_z)
    return Trimask(class_id,
                   pooled.any(axis=2).astype(np.uint8),
                   pooled.any(axis=1).astype(np.uint8),
                   pooled.any(axis=0).astype(np.uint8))


def decompose_scene(grid: VoxelGrid, d: int = 2, d_z: int = 1) -> SceneMaskSet:
    """One trimask per class, empty class included."""
    masks = [decompose_class(grid, c, d, d_z) for c in range(grid.num_classes)]
    X, Y, Z = grid.dims
    return SceneMaskSet(masks, (X // d, Y // d, Z // d_z))


# ---------------------------------------------------------------------------
# Editing algebra
# ---------------------------------------------------------------------------

def _shift_plane(plane: np.ndarray, da: int, db: int) -> np.ndarray:
    """Translate a plane by (da, db), zero-filling; content must stay in bounds."""
    out = np.zeros_like(plane)
    H, W = plane.shape
    src = plane
    a0, a1 = max(0, da), min(H, H + da)
    b0, b1 = max(0, db), min(W, W + db)
    out[a0:a1, b0:b1] = src[a0 - da:a1 - da, b0 - db:b1 - db]
    return out


def paste_asset(target: SceneMaskSet, asset: AssetRecord, offset=(0, 0, 0),
                mode: str = "union") -> SceneMaskSet:
    """Place an asset's trimask into a mask set at a translation offset.

    union ORs the shifted planes in; replace first clears the target class
    inside the translated bbox footprint.  The translated bbox must stay in
    bounds.
    """
    if mode not in ("union", "replace"):
        raise ValueError(f"unknown paste mode {mode!r}")
    dx, dy, dz = offset
    x0, y0, z0, x1, y1, z1 = asset.bbox
    Xm, Ym, Zm = target.dims
    if not (0 <= x0 + dx and x1 + dx <= Xm and 0 <= y0 + dy and y1 + dy <= Ym
            and 0 <= z0 + dz and z1 + dz <= Zm):
        raise ValueError("pasted asset out of bounds")
    out = target.copy()
    tm = out.masks[asset.class_id]
    if mode == "replace":
        _erase_planes(tm, (x0 + dx, y0 + dy, z0 + dz, x1 + dx, y1 + dy, z1 + dz))
    src = asset.trimask
    if src.dims == target.dims:
        tm.m_xy |= _shift_plane(src.m_xy, dx, dy)
        tm.m_xz |= _shift_plane(src.m_xz, dx, dz)
        tm.m_yz |= _shift_plane(src.m_yz, dy, dz)
    else:
        # asset stored at its own dims: paste its bbox content
        sxy = np.zeros((Xm, Ym), np.uint8)
        sxy[x0 + dx:x1 + dx, y0 + dy:y1 + dy] = src.m_xy[x0:x1, y0:y1]
        sxz = np.zeros((Xm, Zm), np.uint8)
        sxz[x0 + dx:x1 + dx, z0 + dz:z1 + dz] = src.m_xz[x0:x1, z0:z1]
        syz = np.zeros((Ym, Zm), np.uint8)
        syz[y0 + dy:y1 + dy, z0 + dz:z1 + dz] = src.m_yz[y0:y1, z0:z1]
        tm.m_xy |= sxy
        tm.m_xz |= sxz
        tm.m_yz |= syz
    return out


def _erase_planes(tm: Trimask, bbox):
    x0, y0, z0, x1, y1, z1 = bbox
    tm.m_xy[x0:x1, y0:y1] = 0
    tm.m_xz[x0:x1, z0:z1] = 0
    tm.m_yz[y0:y1, z0:z1] = 0


def erase_region(target: SceneMaskSet, class_id: int, bbox) -> SceneMaskSet:
    """Zero one class's planes inside the 2D projections of a half-open 3D bbox.

    Same-class objects overlapping the bbox along a projection axis cannot be
    separated; that is inherent to the trimask representation.
    """
    x0, y0, z0, x1, y1, z1 = bbox
    Xm, Ym, Zm = target.dims
    if not (0 <= x0 <= x1 <= Xm and 0 <= y0 <= y1 <= Ym and 0 <= z0 <= z1 <= Zm):
        raise ValueError(f"bbox {bbox} out of bounds for dims {target.dims}")
    if not 0 <= class_id < target.num_classes:
        raise ValueError(f"class {class_id} out of range")
    out = target.copy()
    _erase_planes(out.masks[class_id], bbox)
    return out


def add_region(target: SceneMaskSet, class_id: int, bbox) -> SceneMaskSet:
    """Set one class's planes inside the 2D projections of a half-open 3D bbox."""
    x0, y0, z0, x1, y1, z1 = bbox
    Xm, Ym, Zm = target.dims
    if not (0 <= x0 <= x1 <= Xm and 0 <= y0 <= y1 <= Ym and 0 <= z0 <= z1 <= Zm):
        raise ValueError(f"bbox {bbox} out of bounds for dims {target.dims}")
    out = target.copy()
    tm = out.masks[class_id]
    tm.m_xy[x0:x1, y0:y1] = 1
    tm.m_xz[x0:x1, z0:z1] = 1
    tm.m_yz[y0:y1, z0:z1] = 1
    return out


def transform_asset(asset: AssetRecord, op: str, offset=(0, 0, 0)) -> AssetRecord:
    """translate | rotate90_z | mirror_x | mirror_y, bbox recomputed.

    rotate90_z rotates +90 degrees about z (x,y) -> (Xm-1-y, x) and requires a
    square xy footprint; mirrors flip one axis in every affected plane.
    """
    tm = asset.trimask
    if op == "translate":
        dx, dy, dz = offset
        x0, y0, z0, x1, y1, z1 = asset.bbox
        xm, ym, zm = tm.dims
        if not (0 <= x0 + dx and x1 + dx <= xm and 0 <= y0 + dy and y1 + dy <= ym
                and 0 <= z0 + dz and z1 + dz <= zm):
            raise ValueError("translate out of bounds")
        new = Trimask(tm.class_id,
                      _shift_plane(tm.m_xy, dx, dy),
                      _shift_plane(tm.m_xz, dx, dz),
                      _shift_plane(tm.m_yz, dy, dz))
    elif op == "rotate90_z":
        xm, ym, _ = tm.dims
        if xm != ym:
            raise ValueError("rotate90_z requires square xy dims")
        new = Trimask(tm.class_id,
                      np.rot90(tm.m_xy, 1).copy(),
                      tm.m_yz[::-1, :].copy(),
                      tm.m_xz.copy())
    elif op == "mirror_x":
        new = Trimask(tm.class_id, tm.m_xy[::-1, :].copy(),
                      tm.m_xz[::-1, :].copy(), tm.m_yz.copy())
    elif op == "mirror_y":
        new = Trimask(tm.class_id, tm.m_xy[:, ::-1].copy(),
                      tm.m_xz.copy(), tm.m_yz[::-1, :].copy())
    else:
        raise ValueError(f"unknown transform {op!r}")
    return replace(asset, trimask=new, bbox=trimask_bbox(new))


def _resize_plane_nearest(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    H, W = plane.shape
    ri = np.minimum((np.arange(h) + 0.5) * H / h, H - 1).astype(int)
    ci = np.minimum((np.arange(w) + 0.5) * W / w, W - 1).astype(int)
    return (plane[np.ix_(ri, ci)] != 0).astype(np.uint8)


def resize_trimask(tm: Trimask, new_dims) -> Trimask:
    """Nearest-neighbor resample of each plane to new mask dims, re-binarized."""
    xm, ym, zm = new_dims
    if min(xm, ym, zm) <= 0:
        raise ValueError("new dims must be positive")
    return Trimask(tm.class_id,
                   _resize_plane_nearest(tm.m_xy, xm, ym),
                   _resize_plane_nearest(tm.m_xz, xm, zm),
                   _resize_plane_nearest(tm.m_yz, ym, zm))


def widen_road(mask_set: SceneMaskSet, class_id: int, factor: float = 2.0) -> SceneMaskSet:
    """Widen a band-shaped class (e.g. a road) across its narrow horizontal axis.

    The class region is reconstructed as the intersection of its three
    projections, dilated symmetrically along the narrower of x/y until the
    footprint area reaches `factor` times the original, then re-projected.
    """
    tm = mask_set.masks[class_id]
    if tm.is_empty():
        return mask_set.copy()
    occ = (tm.m_xy[:, :, None] & tm.m_xz[:, None, :] & tm.m_yz[None, :, :]).astype(bool)
    x0, y0, z0, x1, y1, z1 = trimask_bbox(tm)
    axis = 0 if (x1 - x0) < (y1 - y0) else 1  # widen across the narrow axis
    target = int(round(tm.m_xy.sum() * factor))
    grown = occ
    while grown.any(axis=2).sum() < target:
        shifted_f = np.roll(grown, 1, axis=axis)
        shifted_b = np.roll(grown, -1, axis=axis)
        if axis == 0:
            shifted_f[0], shifted_b[-1] = False, False
        else:
            shifted_f[:, 0], shifted_b[:, -1] = False, False
        new = grown | shifted_f | shifted_b
        if new.any(axis=2).sum() == grown.any(axis=2).sum():
            break  # hit the boundary everywhere
        grown = new
        # stop early if the next full dilation would badly overshoot
        if grown.any(axis=2).sum() >= target:
            break
    out = mask_set.copy()
    out.masks[class_id] = Trimask(class_id,
                                  grown.any(axis=2).astype(np.uint8),
                                  grown.any(axis=1).astype(np.uint8),
                                  grown.any(axis=0).astype(np.uint8))
    return out


# ---------------------------------------------------------------------------
# TMSK / TMSS persistence
# ---------------------------------------------------------------------------

def _pack_plane(plane: np.ndarray) -> bytes:
    return np.packbits(plane, axis=None).tobytes()


def _unpack_plane(data: bytes, h: int, w: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=h * w)
    return bits.reshape(h, w).astype(np.uint8)


def _plane_nbytes(h: int, w: int) -> int:
    return (h * w + 7) // 8


def asset_to_bytes(asset: AssetRecord) -> bytes:
    tm = asset.trimask
    xm, ym, zm = tm.dims
    parts = [_TMSK_MAGIC, struct.pack("<IH", _TMSK_VERSION, asset.class_id),
             struct.pack("<III", xm, ym, zm),
             _pack_plane(tm.m_xy), _pack_plane(tm.m_xz), _pack_plane(tm.m_yz),
             struct.pack("<6I", *asset.bbox),
             struct.pack("<B", _KIND_CODES[asset.kind])]
    for text in (asset.id, asset.provenance):
        raw = text.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(parts)


def asset_from_bytes(data: bytes) -> AssetRecord:
    view = memoryview(data)

    def take(n):
        nonlocal view
        if len(view) < n:
            raise AssetFormatError("truncated asset")
        out, view = view[:n], view[n:]
        return bytes(out)

    if take(4) != _TMSK_MAGIC:
        raise AssetFormatError("bad magic")
    version, class_id = struct.unpack("<IH", take(6))
    if version != _TMSK_VERSION:
        raise AssetFormatError(f"unsupported version {version}")
    xm, ym, zm = struct.unpack("<III", take(12))
    m_xy = _unpack_plane(take(_plane_nbytes(xm, ym)), xm, ym)
    m_xz = _unpack_plane(take(_plane_nbytes(xm, zm)), xm, zm)
    m_yz = _unpack_plane(take(_plane_nbytes(ym, zm)), ym, zm)
    bbox = struct.unpack("<6I", take(24))
    (kind_code,) = struct.unpack("<B", take(1))
    if kind_code not in _KIND_NAMES:
        raise AssetFormatError(f"unknown kind code {kind_code}")
    texts = []
    for _ in range(2):
        (ln,) = struct.unpack("<H", take(2))
        texts.append(take(ln).decode("utf-8"))
    tm = Trimask(class_id, m_xy, m_xz, m_yz)
    return AssetRecord(texts[0], _KIND_NAMES[kind_code], class_id, tm, bbox, texts[1])


def mask_set_to_bytes(mask_set: SceneMaskSet) -> bytes:
    xm, ym, zm = mask_set.dims
    parts = [_TMSS_MAGIC, struct.pack("<IHIII", _TMSK_VERSION,
                                      mask_set.num_classes, xm, ym, zm)]
    for tm in mask_set.masks:
        parts.extend((_pack_plane(tm.m_xy), _pack_plane(tm.m_xz), _pack_plane(tm.m_yz)))
    return b"".join(parts)


def mask_set_from_bytes(data: bytes) -> SceneMaskSet:
    view = memoryview(data)

    def take(n):
        nonlocal view
        if len(view) < n:
            raise AssetFormatError("truncated mask set")
        out, view = view[:n], view[n:]
        return bytes(out)

    if take(4) != _TMSS_MAGIC:
        raise AssetFormatError("bad magic")
    version, n, xm, ym, zm = struct.unpack("<IHIII", take(18))
    if version != _TMSK_VERSION:
        raise AssetFormatError(f"unsupported version {version}")
    masks = []
    for c in range(n):
        m_xy = _unpack_plane(take(_plane_nbytes(xm, ym)), xm, ym)
        m_xz = _unpack_plane(take(_plane_nbytes(xm, zm)), xm, zm)
        m_yz = _unpack_plane(take(_plane_nbytes(ym, zm)), ym, zm)
        masks.append(Trimask(c, m_xy, m_xz, m_yz))
    return SceneMaskSet(masks, (xm, ym, zm))


# ---------------------------------------------------------------------------
# Asset library
# ---------------------------------------------------------------------------

class AssetLibrary:
    """Directory of .tmsk files plus a manifest mapping id -> path/class/kind.

    Writes are serialized through the manifest rewrite; reads are lock-free.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        if not self.manifest_path.exists():
            self._write_manifest({})

    def _read_manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text())

    def _write_manifest(self, manifest: dict) -> None:
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        tmp.replace(self.manifest_path)

    def put(self, record: AssetRecord) -> None:
        manifest = self._read_manifest()
        if record.id in manifest:
            raise KeyError(f"duplicate asset id {record.id!r}")
        fname = f"{record.id}.tmsk"
        (self.root / fname).write_bytes(asset_to_bytes(record))
        manifest[record.id] = {"path": fname, "class_id": record.class_id,
                               "kind": record.kind}
        self._write_manifest(manifest)

    def get(self, asset_id: str) -> AssetRecord:
        manifest = self._read_manifest()
        if asset_id not in manifest:
            raise KeyError(f"unknown asset id {asset_id!r}")
        return asset_from_bytes((self.root / manifest[asset_id]["path"]).read_bytes())

    def entries(self, class_id=None, kind=None) -> list[dict]:
        """Lightweight manifest rows (id, path, class_id, kind), id-sorted."""
        manifest = self._read_manifest()
        out = []
        for asset_id in sorted(manifest):
            entry = manifest[asset_id]
            if class_id is not None and entry["class_id"] != class_id:
                continue
            if kind is not None and entry["kind"] != kind:
                continue
            out.append({"id": asset_id, **entry})
        return out

    def list(self, class_id=None, kind=None) -> list[AssetRecord]:
        return [self.get(e["id"]) for e in self.entries(class_id, kind)]


def library_put(store: AssetLibrary, record: AssetRecord) -> None:
    store.put(record)


def library_get(store: AssetLibrary, asset_id: str) -> AssetRecord:
    return store.get(asset_id)


def library_list(store: AssetLibrary, class_id=None, kind=None) -> list[AssetRecord]:
    return store.list(class_id=class_id, kind=kind)
