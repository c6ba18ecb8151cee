"""gandistill: black-box GAN distillation and calibration-corpus export."""

from .export import (UnsupportedLayer, VerificationFailed, export_model,
                     export_synthetic)
from .losses import LossWeights, discriminator_loss, generator_loss
from .models import Discriminator, Generator
from .pairs import (DatasetTeacher, DistillPair, PairDataset, TeacherError,
                    collect_pairs)
from .train import (TrainingDiverged, TrainResult, TrainSchedule, load_config,
                    pixel_distillation_gap, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "DatasetTeacher", "Discriminator", "DistillPair", "Generator",
    "LossWeights", "PairDataset", "TeacherError", "TrainResult",
    "TrainSchedule", "TrainingDiverged", "UnsupportedLayer",
    "VerificationFailed", "collect_pairs", "discriminator_loss",
    "export_model", "export_synthetic", "generator_loss", "load_config",
    "pixel_distillation_gap", "save_checkpoint", "train",
]
