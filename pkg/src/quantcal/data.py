"""Calibration dataset providers.

Three sources feed the quantization flows: image directories in the corpus
layout (``<dir>/images/*.png`` + ``<dir>/labels.csv``), procedurally
generated fractal images, and CIFAR-10 binary batches converted into the
corpus layout.  All providers yield float32 RGB pixels in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray            # (3, H, W) float32 in [0, 1]
    label: int | None
    source_id: str


@dataclass(frozen=True)
class Dataset:
    images: tuple[LabeledImage, ...]
    num_classes: int | None = None
    provenance: str = "directory"

    def __post_init__(self):
        if self.num_classes is not None:
            for img in self.images:
                if img.label is not None and not 0 <= img.label < self.num_classes:
                    raise DataError(
                        f"label {img.label} of {img.source_id!r} outside "
                        f"[0, {self.num_classes})"
                    )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def fully_labeled(self) -> bool:
        return all(img.label is not None for img in self.images)

    def labels(self) -> np.ndarray:
        if not self.fully_labeled:
            raise DataError("dataset has unlabeled images")
        return np.asarray([img.label for img in self.images], dtype=np.int64)

    def batches(self, batch_size: int):
        """Yield (pixels, labels-or-None) batches preserving dataset order."""
        for start in range(0, len(self.images), batch_size):
            chunk = self.images[start:start + batch_size]
            pixels = np.stack([img.pixels for img in chunk])
            labels = [img.label for img in chunk]
            yield pixels, (None if any(l is None for l in labels)
                           else np.asarray(labels, dtype=np.int64))

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.images[i] for i in indices),
                       num_classes=self.num_classes, provenance=self.provenance)


# ---------------------------------------------------------------------------
# Corpus directory  (<dir>/images/*.png + <dir>/labels.csv)
# ---------------------------------------------------------------------------

def load_image_dir(path: str | Path, labels_file: str | Path | None = None) -> Dataset:
    """Load a corpus directory; images ordered lexicographically by filename."""
    root = Path(path)
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise DataError(f"no images/ directory under {root}")
    files = sorted(p for p in img_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise DataError(f"no .png images in {img_dir}")

    labels: dict[str, int] = {}
    if labels_file is None and (root / "labels.csv").is_file():
        labels_file = root / "labels.csv"
    if labels_file is not None:
        names = {p.name for p in files}
        with open(labels_file, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["filename", "label"]:
                raise DataError(f"labels file must have header filename,label, "
                                f"got {reader.fieldnames}")
            for row in reader:
                if row["filename"] not in names:
                    raise DataError(f"labels row references missing file {row['filename']!r}")
                try:
                    value = int(row["label"])
                except ValueError as exc:
                    raise DataError(f"non-integer label for {row['filename']!r}") from exc
                if value < 0:
                    raise DataError(f"negative label for {row['filename']!r}")
                labels[row["filename"]] = value

    images = []
    for p in files:
        try:
            with Image.open(p) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except OSError as exc:
            raise DataError(f"unreadable image {p}: {exc}") from exc
        pixels = np.ascontiguousarray(rgb.transpose(2, 0, 1))
        images.append(LabeledImage(pixels, labels.get(p.name), p.name))

    num_classes = max(labels.values()) + 1 if labels else None
    return Dataset(tuple(images), num_classes=num_classes, provenance="directory")


def save_image_dir(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write a dataset in the corpus layout (8-bit PNGs + labels.csv)."""
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, img in enumerate(dataset.images):
        name = f"{i:06d}.png"
        u8 = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(img_dir / name)
        if img.label is not None:
            rows.append((name, img.label))
    if rows:
        with open(out / "labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "label"])
            writer.writerows(rows)
    return out


# ---------------------------------------------------------------------------
# Fractal images (iterated function systems rendered by the chaos game)
# ---------------------------------------------------------------------------

CHAOS_WARMUP = 100     # leading points discarded before rasterization
POINTS_PER_PIXEL = 20  # map applications = 20 * size^2


@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray   # 2x2, spectral norm < 1
    offset: np.ndarray   # 2-vector


@dataclass(frozen=True)
class FractalSystem:
    maps: tuple[AffineMap, ...]       # 2..4 contractions
    weights: np.ndarray               # positive, sums to 1
    color: tuple[float, float, float]

    def __post_init__(self):
        if not 2 <= len(self.maps) <= 4:
            raise DataError("fractal system needs 2-4 affine maps")
        for m in self.maps:
            if np.linalg.norm(m.matrix, 2) >= 1.0:
                raise DataError("fractal map is not a contraction")
        if np.any(self.weights <= 0):
            raise DataError("selection weights must be positive")


def _draw_system(rng: np.random.Generator) -> FractalSystem:
    n_maps = int(rng.integers(2, 5))
    maps = []
    for _ in range(n_maps):
        # Rejection-sample until the map is a strict contraction.
        while True:
            matrix = rng.uniform(-1.0, 1.0, size=(2, 2))
            if np.linalg.norm(matrix, 2) < 0.95:
                break
        offset = rng.uniform(-1.0, 1.0, size=2)
        maps.append(AffineMap(matrix, offset))
    weights = rng.uniform(0.2, 1.0, size=n_maps)
    weights = weights / weights.sum()
    color = rng.uniform(0.25, 1.0, size=3)
    color[int(rng.integers(0, 3))] = 1.0   # keep the tint saturated
    return FractalSystem(tuple(maps), weights, tuple(float(c) for c in color))


def _render(system: FractalSystem, size: int, seed: int) -> np.ndarray:
    """Chaos game -> (3, size, size) float32 image in [0, 1]."""
    rng = np.random.default_rng(seed)
    total = POINTS_PER_PIXEL * size * size
    picks = rng.choice(len(system.maps), size=total, p=system.weights)
    # The iteration is a strict recurrence; plain floats keep it fast and
    # give a fixed cross-platform evaluation order.
    mats = [(float(m.matrix[0, 0]), float(m.matrix[0, 1]),
             float(m.matrix[1, 0]), float(m.matrix[1, 1]),
             float(m.offset[0]), float(m.offset[1])) for m in system.maps]
    x = y = 0.0
    xs = np.empty(total - CHAOS_WARMUP)
    ys = np.empty(total - CHAOS_WARMUP)
    kept = 0
    for step, k in enumerate(picks):
        a, b, c, d, e, f = mats[k]
        x, y = a * x + b * y + e, c * x + d * y + f
        if step >= CHAOS_WARMUP:
            xs[kept] = x
            ys[kept] = y
            kept += 1
    span_x = max(xs.max() - xs.min(), 1e-9)
    span_y = max(ys.max() - ys.min(), 1e-9)
    ix = np.minimum((size * (xs - xs.min()) / span_x).astype(np.int64), size - 1)
    iy = np.minimum((size * (ys - ys.min()) / span_y).astype(np.int64), size - 1)
    counts = np.zeros((size, size), dtype=np.float64)
    np.add.at(counts, (iy, ix), 1.0)
    level = np.log1p(counts) / np.log1p(counts.max())
    out = np.empty((3, size, size), dtype=np.float32)
    for ch in range(3):
        out[ch] = (level * system.color[ch]).astype(np.float32)
    return out


def _system_for_class(rng: np.random.Generator, size: int, probe_seed: int) -> FractalSystem:
    """Draw systems until the rendered attractor is non-degenerate.

    The probe render must cover between 2% and 60% of the raster: below that
    the attractor is near-degenerate, above it the image approaches a filled
    block rather than a sparse fractal (and loses the dark background that
    characterizes this data family).
    """
    while True:
        system = _draw_system(rng)
        probe = _render(system, size, probe_seed)
        nonzero = float(np.count_nonzero(probe.max(axis=0))) / (size * size)
        if 0.02 <= nonzero <= 0.60:
            return system


def generate_fractal_dataset(count: int, num_classes: int, size: int, seed: int) -> Dataset:
    """Deterministic fractal calibration data: one IFS per class, chaos-game
    rendered per image with sub-seed = seed XOR image index."""
    if num_classes < 1 or count < num_classes:
        raise DataError(f"need count >= num_classes >= 1, got {count}/{num_classes}")
    if size < 8:
        raise DataError(f"size must be >= 8, got {size}")
    master = np.random.default_rng(seed)
    probe_seed = (seed ^ 0x5EED_FACE) & 0xFFFF_FFFF_FFFF_FFFF
    systems = [_system_for_class(master, size, probe_seed) for _ in range(num_classes)]
    images = []
    for i in range(count):
        label = i % num_classes
        pixels = _render(systems[label], size, (seed ^ i) & 0xFFFF_FFFF_FFFF_FFFF)
        images.append(LabeledImage(pixels, label, f"fractal-{seed}-{i:06d}"))
    return Dataset(tuple(images), num_classes=num_classes, provenance="fractal")


# ---------------------------------------------------------------------------
# Per-class sampling
# ---------------------------------------------------------------------------

def sample_per_class(dataset: Dataset, n_per_class: int, seed: int) -> Dataset:
    """Seeded balanced subsample: exactly n_per_class images per class,
    output ordered class-major with the shuffled order inside each class."""
    if not dataset.fully_labeled:
        raise DataError("per-class sampling requires a fully labeled dataset")
    labels = dataset.labels()
    classes = sorted(set(int(l) for l in labels))
    rng = np.random.default_rng(seed)
    picked: list[int] = []
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        if len(members) < n_per_class:
            raise DataError(f"class {cls} has {len(members)} images, "
                            f"need {n_per_class}")
        order = rng.permutation(len(members))[:n_per_class]
        picked.extend(int(members[i]) for i in order)
    return dataset.subset(picked)


# ---------------------------------------------------------------------------
# CIFAR-10 binary batches -> corpus directory
# ---------------------------------------------------------------------------

CIFAR_RECORD = 1 + 3 * 32 * 32


def load_cifar_batches(paths) -> Dataset:
    """Parse CIFAR-10 binary batch files (1 label byte + 3072 pixel bytes)."""
    images = []
    for path in paths:
        raw = Path(path).read_bytes()
        if not raw or len(raw) % CIFAR_RECORD != 0:
            raise DataError(f"{path}: not a CIFAR-10 binary batch "
                            f"({len(raw)} bytes is not a multiple of {CIFAR_RECORD})")
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        for i, rec in enumerate(records):
            label = int(rec[0])
            pixels = rec[1:].reshape(3, 32, 32).astype(np.float32) / 255.0
            images.append(LabeledImage(pixels, label, f"{Path(path).name}-{i:05d}"))
    if not images:
        raise DataError("no CIFAR records found")
    return Dataset(tuple(images), num_classes=10, provenance="directory")
