"""Loss library for teacher-student GAN distillation.

Generator objective: feature-level L1 distillation over the discriminator's
block feature maps, plus weighted pixel L1, plus two non-saturating
adversarial terms (against the teacher-trained critic and the real-data
critic).  Discriminator objective: hinge losses separating student images
from teacher images and, when real data is available, from real images.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class LossWeights:
    """Weights for the pixel, adversarial-vs-teacher, adversarial-vs-real
    generator terms and the real-branch discriminator term."""

    pixel: float = 0.1
    adv_teacher: float = 1.0
    adv_real: float = 1.0
    disc_real: float = 1.0

    def __post_init__(self):
        for name in ("pixel", "adv_teacher", "adv_real", "disc_real"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def generator_loss(student_img: torch.Tensor,
                   teacher_img: torch.Tensor,
                   disc_features_student: list[torch.Tensor],
                   disc_features_teacher: list[torch.Tensor],
                   disc_logit_student_vs_teacher: torch.Tensor,
                   disc_logit_student_vs_real: torch.Tensor | None,
                   weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    """Total generator loss and its components.

    The adversarial terms are the non-saturating -logit form; pass None for
    the real-critic logit when training without real data (its weight must
    then be zero).
    """
    if len(disc_features_student) != len(disc_features_teacher):
        raise ValueError("feature lists must have equal length")
    if not disc_features_student:
        raise ValueError("at least one feature map is required")
    if student_img.shape != teacher_img.shape:
        raise ValueError("student and teacher images must share a shape")

    pix = (student_img - teacher_img).abs().mean()
    feat = torch.stack([
        (s - t).abs().mean()
        for s, t in zip(disc_features_student, disc_features_teacher)
    ]).mean()
    adv_teacher = -disc_logit_student_vs_teacher.mean()
    if disc_logit_student_vs_real is None:
        if weights.adv_real != 0:
            raise ValueError("adv_real weight must be 0 without a real critic logit")
        adv_real = torch.zeros((), dtype=pix.dtype, device=pix.device)
    else:
        adv_real = -disc_logit_student_vs_real.mean()

    total = (feat + weights.pixel * pix + weights.adv_teacher * adv_teacher
             + weights.adv_real * adv_real)
    components = {
        "feature": feat.detach().item(),
        "pixel": pix.detach().item(),
        "adv_teacher": adv_teacher.detach().item(),
        "adv_real": adv_real.detach().item(),
        "total": total.detach().item(),
    }
    return total, components


def _hinge_pair(logit_genuine: torch.Tensor, logit_student: torch.Tensor) -> torch.Tensor:
    return (torch.relu(1.0 - logit_genuine).mean()
            + torch.relu(1.0 + logit_student).mean())


def discriminator_loss(logit_teacher: torch.Tensor,
                       logit_student_vs_teacher: torch.Tensor,
                       logit_real: torch.Tensor | None,
                       logit_student_vs_real: torch.Tensor | None,
                       weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    """Hinge discriminator loss: separate teacher (and optionally real)
    images from student images."""
    kd = _hinge_pair(logit_teacher, logit_student_vs_teacher)
    if logit_real is None or logit_student_vs_real is None:
        if weights.disc_real != 0:
            raise ValueError("disc_real weight must be 0 without real logits")
        gan = torch.zeros((), dtype=kd.dtype, device=kd.device)
    else:
        gan = _hinge_pair(logit_real, logit_student_vs_real)
    total = kd + weights.disc_real * gan
    components = {"teacher_branch": kd.detach().item(),
                  "real_branch": gan.detach().item(),
                  "total": total.detach().item()}
    return total, components
