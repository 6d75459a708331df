"""Dense labeled voxel scenes: representation, SSV1 persistence, metrics, toy city generator.

A scene is a dense 3D grid of class ids.  Class 0 is always empty/free space;
samplers and metrics rely on that convention.  Scenes are persisted in the SSV1
binary format (little-endian header + palette + run-length-encoded labels).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

EMPTY = 0

TOY_CLASS_NAMES = (
    "empty", "road", "sidewalk", "building",
    "vehicle", "pedestrian", "vegetation", "pole",
)
TOY_CLASS_COLORS = (
    (0, 0, 0), (128, 64, 128), (244, 35, 232), (70, 70, 70),
    (0, 0, 142), (220, 20, 60), (107, 142, 35), (153, 153, 153),
)

ROAD, SIDEWALK, BUILDING, VEHICLE, PEDESTRIAN, VEGETATION, POLE = range(1, 8)

DEFAULT_DENSITIES = {
    "road": 0.05,
    "sidewalk": 0.02,
    "building": 0.05,
    "vehicle": 0.01,
    "pedestrian": 0.002,
    "vegetation": 0.01,
    "pole": 0.003,
}

_SSV1_MAGIC = b"SSV1"
_SSV1_VERSION = 1
_MAX_RUN = 0xFFFF


class SceneFormatError(ValueError):
    """Raised when an SSV1 stream is malformed."""


@dataclass(eq=False)
class VoxelGrid:
    """Dense labeled occupancy grid, labels indexed [x, y, z]."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValueError(f"labels must be 3D, got shape {labels.shape}")
        if any(s <= 0 for s in labels.shape):
            raise ValueError(f"all dims must be positive, got {labels.shape}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2 (class 0 is empty)")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("label out of range")
        self.labels = labels.astype(np.uint16)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)

    def occupancy(self) -> np.ndarray:
        """Boolean mask of non-empty voxels."""
        return self.labels != EMPTY

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and self.dims == other.dims
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class ClassPalette:
    """Display names and RGB colors for the classes of a grid."""

    names: tuple[str, ...]
    colors: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.names) != len(self.colors):
            raise ValueError("names and colors must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("palette names must be unique")
        for c in self.colors:
            if len(c) != 3 or any(not (0 <= v <= 255) for v in c):
                raise ValueError(f"invalid RGB triple {c}")

    @property
    def num_classes(self) -> int:
        return len(self.names)


def default_palette(num_classes: int = 8) -> ClassPalette:
    """Palette for the toy-city class set, extended deterministically past 8."""
    names = list(TOY_CLASS_NAMES[:num_classes])
    colors = list(TOY_CLASS_COLORS[:num_classes])
    for i in range(len(names), num_classes):
        names.append(f"class{i}")
        colors.append(((37 * i) % 256, (91 * i) % 256, (151 * i) % 256))
    return ClassPalette(tuple(names), tuple(colors))


# ---------------------------------------------------------------------------
# SSV1 persistence
# ---------------------------------------------------------------------------

def _read_exact(source, n: int) -> bytes:
    buf = source.read(n)
    if buf is None or len(buf) < n:
        raise SceneFormatError("truncated stream")
    return buf


def write_scene(grid: VoxelGrid, palette: ClassPalette, sink) -> int:
    """Serialize a grid+palette to SSV1.  Returns the byte count written."""
    if palette.num_classes != grid.num_classes:
        raise ValueError("palette size does not match grid num_classes")
    X, Y, Z = grid.dims
    parts = [_SSV1_MAGIC, struct.pack("<IIIIH", _SSV1_VERSION, X, Y, Z, grid.num_classes)]
    for name, (r, g, b) in zip(palette.names, palette.colors):
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"palette name too long: {name!r}")
        parts.append(struct.pack("<B", len(raw)) + raw + struct.pack("<BBB", r, g, b))

    flat = grid.labels.ravel(order="F")  # row-major, x fastest
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    for s, e in zip(starts, ends):
        run, label = int(e - s), int(flat[s])
        while run > 0:
            chunk = min(run, _MAX_RUN)
            parts.append(struct.pack("<HH", chunk, label))
            run -= chunk
    blob = b"".join(parts)
    sink.write(blob)
    return len(blob)


def read_scene(source) -> tuple[VoxelGrid, ClassPalette]:
    """Parse an SSV1 stream.  Inverse of write_scene; validates all invariants."""
    magic = source.read(4)
    if magic != _SSV1_MAGIC:
        raise SceneFormatError(f"bad magic {magic!r}")
    version, X, Y, Z, n = struct.unpack("<IIIIH", _read_exact(source, 18))
    if version != _SSV1_VERSION:
        raise SceneFormatError(f"unsupported version {version}")
    if min(X, Y, Z) <= 0 or n < 2:
        raise SceneFormatError("invalid header dims")
    names, colors = [], []
    for _ in range(n):
        (ln,) = struct.unpack("<B", _read_exact(source, 1))
        names.append(_read_exact(source, ln).decode("utf-8"))
        colors.append(struct.unpack("<BBB", _read_exact(source, 3)))
    palette = ClassPalette(tuple(names), tuple(colors))

    total = X * Y * Z
    flat = np.empty(total, dtype=np.uint16)
    filled = 0
    while filled < total:
        chunk = source.read(4)
        if chunk is None or len(chunk) < 4:
            raise SceneFormatError("truncated voxel data")
        run, label = struct.unpack("<HH", chunk)
        if label >= n:
            raise SceneFormatError("label out of range")
        if run == 0:
            raise SceneFormatError("zero-length run")
        if filled + run > total:
            raise SceneFormatError(f"run overflow past {X}*{Y}*{Z}")
        flat[filled:filled + run] = label
        filled += run
    labels = flat.reshape((X, Y, Z), order="F")
    return VoxelGrid(labels, n), palette


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def iou(pred: VoxelGrid, gt: VoxelGrid) -> float:
    """Occupancy IoU: all non-empty classes count as occupied.  1.0 if both empty."""
    if pred.dims != gt.dims:
        raise ValueError(f"dim mismatch {pred.dims} vs {gt.dims}")
    p, g = pred.occupancy(), gt.occupancy()
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def miou(pred: VoxelGrid, gt: VoxelGrid) -> float:
    """Mean per-class IoU over non-empty classes present in either grid."""
    if pred.dims != gt.dims:
        raise ValueError(f"dim mismatch {pred.dims} vs {gt.dims}")
    if pred.num_classes != gt.num_classes:
        raise ValueError("num_classes mismatch")
    scores = []
    for c in range(1, gt.num_classes):
        p, g = pred.labels == c, gt.labels == c
        union = np.count_nonzero(p | g)
        if union == 0:
            continue  # class absent from both: excluded from the mean
        scores.append(np.count_nonzero(p & g) / union)
    if not scores:
        return 1.0  # both grids all-empty
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Deterministic toy-city generator
# ---------------------------------------------------------------------------

@dataclass
class ToySceneSpec:
    """Recipe for a procedural street scene.  Same spec + seed => identical grid.

    densities map class names to target voxel fractions of the whole grid; the
    generator lands within +/-20% of each nonzero target.
    """

    dims: tuple[int, int, int] = (32, 32, 8)
    num_classes: int = 8
    densities: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_DENSITIES))
    seed: int = 0

    def class_names(self) -> tuple[str, ...]:
        return default_palette(self.num_classes).names


def _validate_spec(spec: ToySceneSpec) -> dict[str, float]:
    X, Y, Z = spec.dims
    if X < 16 or Y < 16 or Z < 4:
        raise ValueError("dims too small to place mandatory road (min 16x16x4)")
    if spec.num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    known = set(spec.class_names()[1:])
    dens = {}
    for name, v in spec.densities.items():
        if name not in known:
            raise ValueError(f"density for unknown class {name!r}")
        if v < 0:
            raise ValueError(f"negative density for {name!r}")
        dens[name] = float(v)
    if sum(dens.values()) > 0.5:
        raise ValueError("density knobs sum above 0.5; scene would not fit")
    return dens


def _fill_footprints(rng, labels, cls, target, candidates, size_sampler,
                     z_base=0, max_attempts=4000):
    """Greedily place axis-aligned boxes of `cls` on empty cells until the voxel
    count lands in [0.82, 1.18] * target.  candidates yields legal (x, y) starts
    for a given footprint."""
    placed = 0
    attempts = 0
    while placed < 0.9 * target and attempts < max_attempts:
        attempts += 1
        bw, bd, bh = size_sampler(rng)
        vol = bw * bd * bh
        if placed + vol > 1.15 * target:
            if placed >= 0.82 * target:
                break
            continue
        pos = candidates(rng, bw, bd)
        if pos is None:
            continue
        x0, y0 = pos
        region = labels[x0:x0 + bw, y0:y0 + bd, z_base:z_base + bh]
        if region.shape != (bw, bd, bh) or region.any():
            continue
        region[:] = cls
        placed += vol
    return placed


def generate_toy_scene(spec: ToySceneSpec) -> VoxelGrid:
    """Procedural street scene: road band, sidewalks, buildings, vehicles,
    pedestrians, vegetation, poles.  Deterministic in (spec, seed)."""
    dens = _validate_spec(spec)
    X, Y, Z = spec.dims
    total = X * Y * Z
    rng = np.random.default_rng(spec.seed)
    labels = np.zeros((X, Y, Z), dtype=np.uint16)
    n = spec.num_classes
    tgt = {name: dens.get(name, 0.0) * total for name in spec.class_names()[1:]}

    # Road: a full-length band along x on the ground plane, with sidewalk
    # strips on both sides.  Band position jittered by seed.
    road_w = 0
    y_road0 = Y // 2
    sw_l = sw_r = 0
    if n > ROAD and tgt.get("road", 0) > 0:
        road_w = max(2, round(tgt["road"] / X))
        road_w = min(road_w, Y - 12)
        sw_total = round(tgt.get("sidewalk", 0.0) / X) if n > SIDEWALK else 0
        sw_l = (sw_total + 1) // 2
        sw_r = sw_total // 2
        lo = sw_l + 3
        hi = Y - 3 - sw_r - road_w
        y_road0 = int(rng.integers(lo, hi + 1)) if hi >= lo else max(lo, (Y - road_w) // 2)
        labels[:, y_road0:y_road0 + road_w, 0] = ROAD
        if sw_l:
            labels[:, y_road0 - sw_l:y_road0, 0] = SIDEWALK
        if sw_r:
            labels[:, y_road0 + road_w:y_road0 + road_w + sw_r, 0] = SIDEWALK

    # y-intervals left for buildings/vegetation/poles
    if road_w:
        zones = [(0, y_road0 - sw_l), (y_road0 + road_w + sw_r, Y)]
    else:
        zones = [(0, Y)]
    zones = [(a, b) for a, b in zones if b - a >= 2]

    def zone_candidates(rng_, bw, bd):
        fits = [(a, b) for a, b in zones if b - a >= bd]
        if not fits:
            return None
        a, b = fits[int(rng_.integers(len(fits)))]
        return int(rng_.integers(0, X - bw + 1)), int(rng_.integers(a, b - bd + 1))

    if n > BUILDING and tgt.get("building", 0) > 0:
        max_h = min(6, Z - 1)
        _fill_footprints(
            rng, labels, BUILDING, tgt["building"], zone_candidates,
            lambda r: (int(r.integers(2, 6)), int(r.integers(2, 6)), int(r.integers(2, max_h + 1))))

    if n > VEHICLE and tgt.get("vehicle", 0) > 0:
        if road_w >= 2:
            def road_candidates(rng_, bw, bd):
                return (int(rng_.integers(0, X - bw + 1)),
                        int(rng_.integers(y_road0, y_road0 + road_w - bd + 1)))
            cand, z_base = road_candidates, 1  # parked on top of the road surface
        else:
            cand, z_base = zone_candidates, 0
        _fill_footprints(
            rng, labels, VEHICLE, tgt["vehicle"], cand,
            lambda r: (int(r.integers(2, 4)), 2, 1), z_base=z_base)

    if n > PEDESTRIAN and tgt.get("pedestrian", 0) > 0 and sw_l + sw_r > 0:
        strips = [(y_road0 - sw_l, y_road0), (y_road0 + road_w, y_road0 + road_w + sw_r)]
        strips = [(a, b) for a, b in strips if b > a]

        def sw_candidates(rng_, bw, bd):
            a, b = strips[int(rng_.integers(len(strips)))]
            return int(rng_.integers(0, X - bw + 1)), int(rng_.integers(a, b - bd + 1))

        _fill_footprints(rng, labels, PEDESTRIAN, tgt["pedestrian"], sw_candidates,
                         lambda r: (1, 1, 2), z_base=1)

    if n > VEGETATION and tgt.get("vegetation", 0) > 0 and zones:
        _fill_footprints(rng, labels, VEGETATION, tgt["vegetation"], zone_candidates,
                         lambda r: (1, 1, int(r.integers(2, min(4, Z - 1) + 1))))

    if n > POLE and tgt.get("pole", 0) > 0 and zones:
        _fill_footprints(rng, labels, POLE, tgt["pole"], zone_candidates,
                         lambda r: (1, 1, int(r.integers(3, min(5, Z - 1) + 1))))

    return VoxelGrid(labels, n)
