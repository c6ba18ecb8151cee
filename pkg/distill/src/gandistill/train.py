"""Alternating generator/discriminator training with checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .losses import LossWeights, discriminator_loss, generator_loss
from .models import Discriminator, Generator
from .pairs import PairDataset


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; training aborted."""


@dataclass(frozen=True)
class TrainSchedule:
    steps: int = 200
    batch_size: int = 16
    lr_generator: float = 1e-3
    lr_discriminator: float = 4e-4
    betas: tuple[float, float] = (0.5, 0.999)
    checkpoint_every: int = 0        # 0: only the final checkpoint
    seed: int = 0


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    history: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def load_config(path: str | Path) -> tuple[LossWeights, TrainSchedule, dict]:
    """Read weights/schedule/architecture sizes from a JSON config file."""
    doc = json.loads(Path(path).read_text())
    weights = LossWeights(**doc.get("weights", {}))
    sched = doc.get("schedule", {})
    if "betas" in sched:
        sched["betas"] = tuple(sched["betas"])
    schedule = TrainSchedule(**sched)
    return weights, schedule, doc.get("architecture", {})


def _sample_real(real_dataset, batch_size: int, gen: torch.Generator):
    """Draw a labeled batch from a quantcal-style Dataset, mapped to [-1, 1]."""
    import numpy as np

    idx = torch.randint(len(real_dataset.images), (batch_size,), generator=gen)
    pixels = np.stack([real_dataset.images[i].pixels for i in idx.tolist()])
    labels = [real_dataset.images[i].label for i in idx.tolist()]
    if any(l is None for l in labels):
        raise ValueError("real dataset must be labeled")
    return (torch.from_numpy(pixels * 2.0 - 1.0).float(),
            torch.tensor(labels, dtype=torch.long))


def train(pairs: PairDataset, real=None,
          weights: LossWeights | None = None,
          schedule: TrainSchedule | None = None,
          generator: Generator | None = None,
          discriminator: Discriminator | None = None,
          out_dir: str | Path | None = None) -> TrainResult:
    """Alternate discriminator and generator steps over the stored pairs.

    Without real data the adversarial-vs-real weights must be zero (pure
    distillation).  Aborts with TrainingDiverged on any non-finite loss.
    """
    if len(pairs) == 0:
        raise ValueError("pair dataset is empty")
    weights = weights or LossWeights()
    schedule = schedule or TrainSchedule()
    if real is None and (weights.adv_real != 0 or weights.disc_real != 0):
        raise ValueError("without real data, adv_real and disc_real weights must be 0")

    torch.manual_seed(schedule.seed)
    generator = generator or Generator(pairs.num_classes, z_dim=pairs.z_dim)
    discriminator = discriminator or Discriminator(pairs.num_classes)
    opt_g = torch.optim.Adam(generator.parameters(), lr=schedule.lr_generator,
                             betas=schedule.betas)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=schedule.lr_discriminator,
                             betas=schedule.betas)
    sampler = torch.Generator().manual_seed(schedule.seed)
    z_all, labels_all, teacher_all = pairs.tensors()

    result = TrainResult(generator=generator, discriminator=discriminator)
    out_dir = Path(out_dir) if out_dir is not None else None

    for step in range(schedule.steps):
        idx = torch.randint(len(pairs), (schedule.batch_size,), generator=sampler)
        z, labels, teacher_img = z_all[idx], labels_all[idx], teacher_all[idx]

        # discriminator step
        with torch.no_grad():
            student_img = generator(z, labels)
        logit_teacher, _ = discriminator(teacher_img, labels)
        logit_student, _ = discriminator(student_img, labels)
        logit_real = logit_student_real = None
        if real is not None:
            real_img, real_labels = _sample_real(real, schedule.batch_size, sampler)
            logit_real, _ = discriminator(real_img, real_labels)
            # one trunk, one conditional logit: the student logit feeds both
            # the teacher-branch and the real-branch hinge terms
            logit_student_real = logit_student
        d_loss, d_parts = discriminator_loss(logit_teacher, logit_student,
                                             logit_real, logit_student_real, weights)
        if not torch.isfinite(d_loss):
            raise TrainingDiverged(f"discriminator loss non-finite at step {step}")
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        # generator step
        student_img = generator(z, labels)
        logit_student, feats_student = discriminator(student_img, labels)
        with torch.no_grad():
            _, feats_teacher = discriminator(teacher_img, labels)
        logit_student_real = None
        if real is not None:
            logit_student_real = logit_student  # one conditional critic, one trunk
        g_loss, g_parts = generator_loss(student_img, teacher_img,
                                         feats_student, feats_teacher,
                                         logit_student, logit_student_real, weights)
        if not torch.isfinite(g_loss):
            raise TrainingDiverged(f"generator loss non-finite at step {step}")
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        result.history.append({"step": step, "generator": g_parts,
                               "discriminator": d_parts})
        if (out_dir and schedule.checkpoint_every
                and (step + 1) % schedule.checkpoint_every == 0):
            result.checkpoints.append(
                save_checkpoint(result, out_dir / f"step{step + 1:06d}", schedule))

    if out_dir:
        result.checkpoints.append(save_checkpoint(result, out_dir / "final", schedule))
    return result


def save_checkpoint(result: TrainResult, directory: str | Path,
                    schedule: TrainSchedule) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(result.generator.state_dict(), directory / "generator.pt")
    torch.save(result.discriminator.state_dict(), directory / "discriminator.pt")
    (directory / "history.json").write_text(
        json.dumps({"schedule": asdict(schedule), "history": result.history},
                   indent=2, sort_keys=True) + "\n")
    return directory


def pixel_distillation_gap(generator: Generator, pairs: PairDataset,
                           batch_size: int = 64) -> float:
    """Mean absolute pixel error of the generator on the stored pairs."""
    z, labels, teacher = pairs.tensors()
    total = 0.0
    generator.eval()
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            student = generator(z[start:start + batch_size], labels[start:start + batch_size])
            total += float((student - teacher[start:start + batch_size]).abs().sum())
    generator.train()
    return total / teacher.numel()
