"""Teacher input-output pair collection.

The teacher is strictly a black box: any callable mapping a batch of noise
vectors and class labels to images in [-1, 1].  A DatasetTeacher wraps a
corpus directory in the primary toolkit's layout so stored images can stand
in for a live generator at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


@dataclass(frozen=True)
class DistillPair:
    z: torch.Tensor              # noise vector
    class_label: int
    teacher_image: torch.Tensor  # (3, H, W) in [-1, 1]


@dataclass(frozen=True)
class PairDataset:
    pairs: tuple[DistillPair, ...]
    num_classes: int
    z_dim: int

    def __len__(self):
        return len(self.pairs)

    def tensors(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        z = torch.stack([p.z for p in self.pairs])
        labels = torch.tensor([p.class_label for p in self.pairs], dtype=torch.long)
        images = torch.stack([p.teacher_image for p in self.pairs])
        return z, labels, images


class TeacherError(RuntimeError):
    """The black-box teacher failed to produce usable images."""


def collect_pairs(teacher, n_total: int, num_classes: int, seed: int,
                  z_dim: int = 128, batch_size: int = 64) -> PairDataset:
    """Query the teacher for n_total images, equally distributed over the
    classes, recording (noise, label, image) triples."""
    if n_total % num_classes != 0:
        raise ValueError(f"n_total {n_total} must be divisible by num_classes {num_classes}")
    gen = torch.Generator().manual_seed(seed)
    z = torch.randn(n_total, z_dim, generator=gen)
    labels = torch.arange(n_total, dtype=torch.long) % num_classes

    images = []
    for start in range(0, n_total, batch_size):
        zb = z[start:start + batch_size]
        lb = labels[start:start + batch_size]
        try:
            out = teacher(zb, lb)
        except Exception as exc:
            raise TeacherError(f"teacher failed on batch at {start}: {exc}") from exc
        out = torch.as_tensor(out, dtype=torch.float32)
        if out.shape[0] != zb.shape[0] or out.ndim != 4:
            raise TeacherError(f"teacher returned shape {tuple(out.shape)} for "
                               f"batch of {zb.shape[0]}")
        if not torch.isfinite(out).all() or out.min() < -1.0001 or out.max() > 1.0001:
            raise TeacherError("teacher images must be finite and lie in [-1, 1]")
        images.append(out.clamp(-1.0, 1.0))
    images = torch.cat(images)

    counts = torch.bincount(labels, minlength=num_classes)
    if not torch.all(counts == n_total // num_classes):
        raise TeacherError("collected pairs are not class-balanced")
    pairs = tuple(DistillPair(z[i], int(labels[i]), images[i]) for i in range(n_total))
    return PairDataset(pairs, num_classes=num_classes, z_dim=z_dim)


class DatasetTeacher:
    """Replays images from a corpus directory (images/*.png + labels.csv),
    ignoring the noise vector; pixels are mapped from [0, 1] to [-1, 1].

    Replay order within each class is fixed, so collection is deterministic.
    """

    def __init__(self, corpus_dir: str | Path):
        from quantcal import load_image_dir

        dataset = load_image_dir(corpus_dir)
        if not dataset.fully_labeled:
            raise TeacherError(f"corpus {corpus_dir} must be labeled")
        self._by_class: dict[int, list[np.ndarray]] = {}
        for img in dataset.images:
            self._by_class.setdefault(img.label, []).append(img.pixels)
        self._cursor = {label: 0 for label in self._by_class}

    def __call__(self, z: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        out = []
        for label in labels.tolist():
            stock = self._by_class.get(label)
            if not stock:
                raise TeacherError(f"no stored images for class {label}")
            pixels = stock[self._cursor[label] % len(stock)]
            self._cursor[label] += 1
            out.append(torch.from_numpy(pixels * 2.0 - 1.0))
        return torch.stack(out)
