"""Synthetic multispectral aerial scenes: generation, file I/O, ground-truth
masks, and dataset statistics.

Scenes are b-band reflectance cubes in [0,1] with oriented-box annotations.
Objects are rotated rectangles or ellipses filled with a per-class spectral
signature; backgrounds are clutter patches with signatures kept away from
every class signature. Generation is fully determined by (config, seed).

Annotation geometry is canonicalized through its serialized form: sampled
corners are quantized to 2 decimals and the stored box is reconstructed
from the quantized quad, so write -> read returns exactly the in-memory
annotation.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes import OrientedBox, box_from_corners

MAGIC = b"MSIC"
FORMAT_VERSION = 1

BAND_CENTERS_NM = (405.0, 450.0, 490.0, 550.0, 640.0, 710.0, 800.0, 900.0)
RGB_REFERENCE_NM = (460.0, 550.0, 640.0)

DEFAULT_MIN_SEPARATION = 0.25  # minimum L2 distance between class signatures

CHALLENGE_ATTRIBUTES = frozenset({
    "small", "occlusion", "low_illumination", "truncation",
    "dense", "clutter", "scale_variation", "blur",
})


class DataError(Exception):
    """Malformed or inconsistent dataset content."""


class GenerationError(Exception):
    """Scene synthesis could not satisfy the placement constraints."""


@dataclass(frozen=True)
class SpectralSignature:
    class_id: int
    reflectance: tuple[float, ...]
    band_centers: tuple[float, ...] = BAND_CENTERS_NM

    def __post_init__(self):
        if len(self.reflectance) != len(self.band_centers):
            raise DataError("signature length must match band count")
        if any(not (0.0 <= r <= 1.0) for r in self.reflectance):
            raise DataError("reflectance values must lie in [0,1]")
        centers = self.band_centers
        if any(centers[i] >= centers[i + 1] for i in range(len(centers) - 1)):
            raise DataError("band centers must be strictly increasing")
        if centers[0] < 395.0 or centers[-1] > 950.0:
            raise DataError("band centers must lie within [395, 950] nm")


# Class table. "car" and "van" are a deliberate metamer pair: identical in
# the three bands nearest 460/550/640 nm, well separated in the NIR bands,
# and they share the same geometry below, so an RGB projection cannot tell
# them apart while the full cube can.
CLASS_NAMES = ("car", "van", "bus", "truck", "bike", "pedestrian")

CLASS_SIGNATURES: dict[str, tuple[float, ...]] = {
    "car":        (0.28, 0.30, 0.33, 0.36, 0.38, 0.42, 0.46, 0.50),
    "van":        (0.16, 0.30, 0.45, 0.36, 0.38, 0.62, 0.72, 0.78),
    "bus":        (0.55, 0.60, 0.63, 0.66, 0.62, 0.58, 0.52, 0.47),
    "truck":      (0.32, 0.25, 0.27, 0.30, 0.58, 0.52, 0.42, 0.34),
    "bike":       (0.10, 0.11, 0.13, 0.15, 0.16, 0.20, 0.26, 0.30),
    "pedestrian": (0.36, 0.42, 0.44, 0.50, 0.52, 0.58, 0.66, 0.62),
}

CLUTTER_SIGNATURES: dict[str, tuple[float, ...]] = {
    "asphalt":  (0.08, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14, 0.15),
    "grass":    (0.04, 0.07, 0.09, 0.16, 0.09, 0.45, 0.60, 0.55),
    "soil":     (0.18, 0.22, 0.26, 0.30, 0.36, 0.40, 0.42, 0.44),
    "concrete": (0.46, 0.48, 0.50, 0.52, 0.50, 0.48, 0.50, 0.52),
}

# shape, w range (px), aspect (h/w) range. car/van are intentionally equal.
CLASS_GEOMETRY: dict[str, tuple[str, float, float, float, float]] = {
    "car":        ("rect", 10.0, 16.0, 0.45, 0.60),
    "van":        ("rect", 10.0, 16.0, 0.45, 0.60),
    "bus":        ("rect", 18.0, 26.0, 0.30, 0.42),
    "truck":      ("rect", 16.0, 24.0, 0.35, 0.50),
    "bike":       ("ellipse", 7.0, 11.0, 0.35, 0.55),
    "pedestrian": ("ellipse", 4.0, 7.0, 0.50, 0.80),
}


def rgb_band_indices(band_centers=BAND_CENTERS_NM,
                     targets=RGB_REFERENCE_NM) -> tuple[int, int, int]:
    """Indices of the bands nearest the blue/green/red reference wavelengths."""
    return tuple(int(np.argmin([abs(c - t) for c in band_centers])) for t in targets)


def signature_table(class_names=CLASS_NAMES) -> list[SpectralSignature]:
    return [SpectralSignature(i, CLASS_SIGNATURES[name]) for i, name in enumerate(class_names)]


def validate_tables(min_separation: float = DEFAULT_MIN_SEPARATION) -> None:
    """Enforce the separation invariants of the built-in tables."""
    sigs = {n: np.array(v) for n, v in CLASS_SIGNATURES.items()}
    names = list(sigs)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = float(np.linalg.norm(sigs[a] - sigs[b]))
            if d < min_separation:
                raise DataError(f"class signatures {a}/{b} separated by only {d:.3f}")
    for cn, cv in CLUTTER_SIGNATURES.items():
        for n, v in sigs.items():
            d = float(np.linalg.norm(np.array(cv) - v))
            if d < min_separation / 2.0:
                raise DataError(f"clutter {cn} too close to class {n}: {d:.3f}")
    r, g, b = rgb_band_indices()
    car, van = sigs["car"], sigs["van"]
    if not (car[r] == van[r] and car[g] == van[g] and car[b] == van[b]):
        raise DataError("metamer pair must match in the RGB projection bands")
    nir = np.array(car) - np.array(van)
    if float(np.linalg.norm(nir)) < min_separation:
        raise DataError("metamer pair must stay separated in the full cube")


@dataclass(frozen=True)
class Instance:
    quad: tuple[tuple[float, float], ...]  # 2-decimal corner quad, CCW
    box: OrientedBox                       # reconstructed canonical box
    class_id: int
    difficulty: int = 0


@dataclass
class SceneAnnotation:
    instances: list[Instance]
    attributes: frozenset[str] = frozenset()

    @property
    def boxes(self) -> list[OrientedBox]:
        return [inst.box for inst in self.instances]

    def __eq__(self, other):
        return (isinstance(other, SceneAnnotation)
                and self.instances == other.instances
                and self.attributes == other.attributes)


@dataclass
class MSICube:
    bands: np.ndarray  # float32 (b, H, W) in [0,1]
    scene_id: str
    rng_seed: int

    def __eq__(self, other):
        return (isinstance(other, MSICube)
                and self.scene_id == other.scene_id
                and self.rng_seed == other.rng_seed
                and np.array_equal(self.bands, other.bands))


@dataclass(frozen=True)
class GenConfig:
    image_size: int = 256
    num_classes: int = 6
    instances_min: int = 1
    instances_max: int = 24
    noise_sigma: float = 0.01
    clutter_density: float = 1.0
    illumination: float = 1.0
    max_overlap_iou: float = 0.0
    blur_sigma: float = 0.0
    max_place_attempts: int = 1000

    def __post_init__(self):
        if self.image_size & (self.image_size - 1):
            raise DataError("image_size must be a power of two")
        if not (1 <= self.num_classes <= len(CLASS_NAMES)):
            raise DataError(f"num_classes must be in 1..{len(CLASS_NAMES)}")
        if self.instances_min < 0 or self.instances_max < self.instances_min:
            raise DataError("bad instance count range")

    @property
    def class_names(self) -> tuple[str, ...]:
        return CLASS_NAMES[: self.num_classes]


def quantize_instance(box: OrientedBox, class_id: int, difficulty: int = 0) -> Instance:
    """Round corners to the serialized precision and rebuild the box from
    them, so the stored geometry is exactly what a reader reconstructs."""
    quad = np.round(box.corners(), 2)
    derived = box_from_corners(quad, class_id)
    return Instance(tuple((float(x), float(y)) for x, y in quad), derived,
                    class_id, difficulty)


def _paint(cube: np.ndarray, box: OrientedBox, signature: np.ndarray,
           shape: str, xs: np.ndarray, ys: np.ndarray) -> None:
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = xs[None, :] - box.cx
    dy = ys[:, None] - box.cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    if shape == "ellipse":
        mask = (2 * u / box.w) ** 2 + (2 * v / box.h) ** 2 <= 1.0
    else:
        mask = (np.abs(u) <= box.w / 2.0) & (np.abs(v) <= box.h / 2.0)
    cube[:, mask] = signature[:, None]


def _blur(cube: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return cube
    radius = max(1, int(round(3 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(cube, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    rows = sum(k[i] * padded[:, i : i + cube.shape[1], :] for i in range(k.size))
    padded = np.pad(rows, ((0, 0), (0, 0), (radius, radius)), mode="edge")
    return sum(k[i] * padded[:, :, i : i + cube.shape[2]] for i in range(k.size))


def generate_scene(config: GenConfig, seed: int) -> tuple[MSICube, SceneAnnotation]:
    """Render one scene deterministically from (config, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    size = config.image_size
    bands = len(BAND_CENTERS_NM)
    xs = np.arange(size) + 0.5
    ys = np.arange(size) + 0.5
    cube = np.empty((bands, size, size), dtype=np.float64)
    clutter_names = sorted(CLUTTER_SIGNATURES)
    base = np.array(CLUTTER_SIGNATURES[clutter_names[int(rng.integers(len(clutter_names)))]])
    cube[:] = base[:, None, None]

    n_patches = int(round(config.clutter_density * 24))
    for _ in range(n_patches):
        sig = np.array(CLUTTER_SIGNATURES[clutter_names[int(rng.integers(len(clutter_names)))]])
        pw = float(rng.uniform(16, 64))
        ph = float(rng.uniform(16, 64))
        patch = OrientedBox(float(rng.uniform(0, size)), float(rng.uniform(0, size)),
                            pw, ph, float(rng.uniform(-math.pi / 2, math.pi / 2)))
        _paint(cube, patch, sig, "rect", xs, ys)

    from .evaluation import rotated_iou  # local import to avoid cycle at module load

    class_names = config.class_names
    signatures = {i: np.array(CLASS_SIGNATURES[n]) for i, n in enumerate(class_names)}
    count = int(rng.integers(config.instances_min, config.instances_max + 1))
    instances: list[Instance] = []
    shapes: list[str] = []
    for _ in range(count):
        placed = None
        for _attempt in range(config.max_place_attempts):
            cid = int(rng.integers(len(class_names)))
            shape, wmin, wmax, amin, amax = CLASS_GEOMETRY[class_names[cid]]
            w = float(rng.uniform(wmin, wmax))
            h = w * float(rng.uniform(amin, amax))
            theta = float(rng.uniform(-math.pi / 2, math.pi / 2))
            margin = math.hypot(w, h) / 2.0 + 1.0
            cx = float(rng.uniform(margin, size - margin))
            cy = float(rng.uniform(margin, size - margin))
            cand = OrientedBox(cx, cy, w, h, theta, cid).canonical()
            inst = quantize_instance(cand, cid)
            if all(rotated_iou(inst.box, prev.box) <= config.max_overlap_iou
                   for prev in instances):
                placed = (inst, shape)
                break
        if placed is None:
            raise GenerationError(
                f"could not place instance after {config.max_place_attempts} attempts"
            )
        instances.append(placed[0])
        shapes.append(placed[1])

    for inst, shape in zip(instances, shapes):
        _paint(cube, inst.box, signatures[inst.class_id], shape, xs, ys)

    cube *= config.illumination
    cube = _blur(cube, config.blur_sigma)
    if config.noise_sigma > 0:
        cube = cube + rng.normal(0.0, config.noise_sigma, size=cube.shape)
    cube = np.clip(cube, 0.0, 1.0).astype(np.float32)

    attributes = _derive_attributes(config, instances)
    instances = [
        replace(inst, difficulty=1 if _near_border(inst.box, size) else 0)
        for inst in instances
    ]
    ann = SceneAnnotation(instances, attributes)
    return MSICube(cube, f"scene_{seed:012d}", seed), ann


def _near_border(box: OrientedBox, size: int, dist: float = 2.0) -> bool:
    pts = box.corners()
    return bool(
        (pts[:, 0] < dist).any() or (pts[:, 1] < dist).any()
        or (pts[:, 0] > size - dist).any() or (pts[:, 1] > size - dist).any()
    )


def _derive_attributes(config: GenConfig, instances: list[Instance]) -> frozenset[str]:
    tags = set()
    size = config.image_size
    areas = [inst.box.area for inst in instances]
    if any(a < 0.01 * size * size for a in areas):
        tags.add("small")
    if len(instances) >= 12:
        tags.add("dense")
    if config.clutter_density >= 1.5:
        tags.add("clutter")
    if config.illumination < 0.6:
        tags.add("low_illumination")
    if any(_near_border(inst.box, size) for inst in instances):
        tags.add("truncation")
    if config.max_overlap_iou > 0 and len(instances) > 1:
        from .evaluation import rotated_iou

        if any(rotated_iou(a.box, b.box) > 0
               for i, a in enumerate(instances) for b in instances[i + 1:]):
            tags.add("occlusion")
    if areas and max(areas) / max(min(areas), 1e-9) >= 4.0:
        tags.add("scale_variation")
    if config.blur_sigma > 0:
        tags.add("blur")
    return frozenset(tags)


# ---------------------------------------------------------------------------
# Ground-truth activation masks
# ---------------------------------------------------------------------------


def gaussian_at(box: OrientedBox, x, y):
    """Rotated 2-D Gaussian centered on the box, sigma = (w/6, h/6)."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = np.asarray(x, dtype=np.float64) - box.cx
    dy = np.asarray(y, dtype=np.float64) - box.cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    sx = box.w / 6.0
    sy = box.h / 6.0
    return np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))


GAUSSIAN_FLOOR = 1e-6  # truncate far tails so H(M_g) leaves real background


def rasterize_gt_mask(boxes: list[OrientedBox], grid_h: int, grid_w: int,
                      stride: float) -> np.ndarray:
    """Pixelwise max of per-instance Gaussians, sampled at cell centers.

    Values below GAUSSIAN_FLOOR are zeroed: without truncation the
    strictly-positive tails would mark the whole grid as foreground for the
    background indicator H(M_g > 0)."""
    mask = np.zeros((grid_h, grid_w), dtype=np.float64)
    if not boxes:
        return mask
    xs = (np.arange(grid_w) + 0.5) * stride
    ys = (np.arange(grid_h) + 0.5) * stride
    gx, gy = np.meshgrid(xs, ys)
    for box in boxes:
        mask = np.maximum(mask, gaussian_at(box, gx, gy))
    mask[mask < GAUSSIAN_FLOOR] = 0.0
    return mask


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_raster(path: str, cube: np.ndarray) -> None:
    b, h, w = cube.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(struct.pack("<III", b, h, w))
        f.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())


def read_raster(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<H", f.read(2))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        b, h, w = struct.unpack("<III", f.read(12))
        payload = f.read(4 * b * h * w)
        if len(payload) != 4 * b * h * w:
            raise DataError(f"{path}: truncated raster payload")
        return np.frombuffer(payload, dtype="<f4").reshape(b, h, w).copy()


def save_annotation(path: str, ann: SceneAnnotation, class_names) -> None:
    lines = []
    if ann.attributes:
        lines.append("attributes:" + ",".join(sorted(ann.attributes)))
    for inst in ann.instances:
        coords = " ".join(f"{v:.2f}" for pt in inst.quad for v in pt)
        lines.append(f"{coords} {class_names[inst.class_id]} {inst.difficulty}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def load_annotation(path: str, class_names) -> SceneAnnotation:
    name_to_id = {n: i for i, n in enumerate(class_names)}
    instances = []
    attributes: frozenset[str] = frozenset()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if ":" in line.split()[0]:
                key, _, value = line.partition(":")
                if key == "attributes":
                    tags = {t for t in value.split(",") if t}
                    unknown = tags - CHALLENGE_ATTRIBUTES
                    if unknown:
                        raise DataError(f"{path}:{lineno}: unknown attributes {sorted(unknown)}")
                    attributes = frozenset(tags)
                continue
            parts = line.split()
            if len(parts) != 10:
                raise DataError(f"{path}:{lineno}: expected 10 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts[:8]]
                difficulty = int(parts[9])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if parts[8] not in name_to_id:
                raise DataError(f"{path}:{lineno}: unknown class {parts[8]!r}")
            quad = np.array(vals).reshape(4, 2)
            cid = name_to_id[parts[8]]
            try:
                box = box_from_corners(quad, cid)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: degenerate box ({exc})") from exc
            instances.append(Instance(tuple((x, y) for x, y in quad.tolist()),
                                      box, cid, difficulty))
    return SceneAnnotation(instances, attributes)


@dataclass
class Dataset:
    root: str
    bands: int
    band_centers: tuple[float, ...]
    class_names: tuple[str, ...]
    image_size: int
    splits: dict[str, list[str]]
    cubes: dict[str, MSICube] = field(default_factory=dict)
    annotations: dict[str, SceneAnnotation] = field(default_factory=dict)

    def scene_ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return sorted(self.cubes)
        if split not in self.splits:
            raise DataError(f"unknown split {split!r}")
        return list(self.splits[split])


def write_dataset(root: str, scenes: list[tuple[MSICube, SceneAnnotation]],
                  class_names=CLASS_NAMES, splits: dict[str, list[str]] | None = None,
                  image_size: int | None = None, extra: dict | None = None) -> None:
    os.makedirs(os.path.join(root, "scenes"), exist_ok=True)
    os.makedirs(os.path.join(root, "annotations"), exist_ok=True)
    ids = []
    for cube, ann in scenes:
        ids.append(cube.scene_id)
        write_raster(os.path.join(root, "scenes", cube.scene_id + ".msic"), cube.bands)
        save_annotation(os.path.join(root, "annotations", cube.scene_id + ".txt"),
                        ann, class_names)
    manifest = {
        "version": FORMAT_VERSION,
        "bands": int(scenes[0][0].bands.shape[0]) if scenes else len(BAND_CENTERS_NM),
        "band_centers": list(BAND_CENTERS_NM),
        "class_names": list(class_names),
        "image_size": int(image_size if image_size is not None
                          else (scenes[0][0].bands.shape[1] if scenes else 0)),
        "scene_seeds": {cube.scene_id: int(cube.rng_seed) for cube, _ in scenes},
        "splits": splits if splits is not None else {"all": ids},
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(root, "manifest.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_dataset(root: str) -> Dataset:
    mpath = os.path.join(root, "manifest.json")
    if not os.path.exists(mpath):
        raise DataError(f"no manifest.json in {root}")
    with open(mpath, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    class_names = tuple(manifest["class_names"])
    ds = Dataset(
        root=root,
        bands=int(manifest["bands"]),
        band_centers=tuple(manifest["band_centers"]),
        class_names=class_names,
        image_size=int(manifest["image_size"]),
        splits={k: list(v) for k, v in manifest["splits"].items()},
    )
    seeds = manifest.get("scene_seeds", {})
    all_ids = sorted({sid for ids in ds.splits.values() for sid in ids})
    for sid in all_ids:
        cube = read_raster(os.path.join(root, "scenes", sid + ".msic"))
        if cube.shape[0] != ds.bands:
            raise DataError(
                f"{sid}: raster has {cube.shape[0]} bands but manifest says {ds.bands}"
            )
        ds.cubes[sid] = MSICube(cube, sid, int(seeds.get(sid, 0)))
        ds.annotations[sid] = load_annotation(
            os.path.join(root, "annotations", sid + ".txt"), class_names
        )
    return ds


def project_rgb(cube: np.ndarray, band_centers=BAND_CENTERS_NM) -> np.ndarray:
    """Select the bands nearest the RGB reference wavelengths (information-
    discarding projection used for the input-modality ablation)."""
    idx = rgb_band_indices(band_centers)
    return cube[list(idx)]


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

AREA_FRACTION_BINS = (0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 1.0)
ABS_SIZE_BINS = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 32.0, 48.0, 64.0, 128.0, 1e9)


@dataclass
class StatsReport:
    num_scenes: int
    per_class_counts: dict[str, int]
    instances_per_image: dict[int, int]
    area_fraction_hist: dict[str, int]
    abs_size_hist: dict[str, int]
    fraction_under_1pct: float
    attribute_counts: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "num_scenes": self.num_scenes,
            "per_class_counts": dict(sorted(self.per_class_counts.items())),
            "instances_per_image": {str(k): v for k, v in sorted(self.instances_per_image.items())},
            "area_fraction_hist": self.area_fraction_hist,
            "abs_size_hist": self.abs_size_hist,
            "fraction_under_1pct": self.fraction_under_1pct,
            "attribute_counts": dict(sorted(self.attribute_counts.items())),
        }


def dataset_stats(root: str, plot_dir: str | None = None) -> StatsReport:
    ds = read_dataset(root)
    per_class = {name: 0 for name in ds.class_names}
    per_image: dict[int, int] = {}
    frac_bins = {f"<{b:g}": 0 for b in AREA_FRACTION_BINS[1:]}
    size_bins = {f"<{b:g}": 0 for b in ABS_SIZE_BINS[1:]}
    attr_counts: dict[str, int] = {}
    total = 0
    under_1pct = 0
    img_area = float(ds.image_size * ds.image_size) if ds.image_size else 1.0
    for sid in sorted(ds.annotations):
        ann = ds.annotations[sid]
        per_image[len(ann.instances)] = per_image.get(len(ann.instances), 0) + 1
        for tag in sorted(ann.attributes):
            attr_counts[tag] = attr_counts.get(tag, 0) + 1
        for inst in ann.instances:
            total += 1
            per_class[ds.class_names[inst.class_id]] += 1
            frac = inst.box.area / img_area
            if frac < 0.01:
                under_1pct += 1
            for b in AREA_FRACTION_BINS[1:]:
                if frac < b:
                    frac_bins[f"<{b:g}"] += 1
                    break
            side = math.sqrt(inst.box.area)
            for b in ABS_SIZE_BINS[1:]:
                if side < b:
                    size_bins[f"<{b:g}"] += 1
                    break
    report = StatsReport(
        num_scenes=len(ds.annotations),
        per_class_counts=per_class,
        instances_per_image=per_image,
        area_fraction_hist=frac_bins,
        abs_size_hist=size_bins,
        fraction_under_1pct=(under_1pct / total) if total else 0.0,
        attribute_counts=attr_counts,
    )
    if plot_dir is not None:
        _write_stat_plots(report, plot_dir)
    return report


def _write_stat_plots(report: StatsReport, plot_dir: str) -> None:
    from . import svgplot

    os.makedirs(plot_dir, exist_ok=True)
    names = sorted(report.per_class_counts)
    svgplot.bar_chart(os.path.join(plot_dir, "class_counts.svg"), names,
                      [float(report.per_class_counts[n]) for n in names],
                      "Instances per category", "count")
    counts = sorted(report.instances_per_image)
    svgplot.bar_chart(os.path.join(plot_dir, "instances_per_image.svg"),
                      [str(c) for c in counts],
                      [float(report.instances_per_image[c]) for c in counts],
                      "Instances per image", "images")
    labels = list(report.area_fraction_hist)
    svgplot.bar_chart(os.path.join(plot_dir, "area_fraction.svg"), labels,
                      [float(report.area_fraction_hist[k]) for k in labels],
                      "Relative instance size (area fraction)", "instances")
    labels = list(report.abs_size_hist)
    svgplot.bar_chart(os.path.join(plot_dir, "abs_size.svg"), labels,
                      [float(report.abs_size_hist[k]) for k in labels],
                      "Absolute instance size (sqrt area, px)", "instances")
