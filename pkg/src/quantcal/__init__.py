"""quantcal: post-training int8 quantization toolkit for small CNN classifiers."""

from .accuracy_aware import (AccuracyAwareConfig, QuantizationReport,
                             accuracy_aware_quantize)
from .data import (Dataset, FractalSystem, LabeledImage, generate_fractal_dataset,
                   load_cifar_batches, load_image_dir, sample_per_class,
                   save_image_dir)
from .errors import (DataError, GraphError, ManifestError, QuantcalError,
                     QuantizationError, ShapeError)
from .graph import Layer, ModelGraph, forward
from .metrics import (InceptionScoreResult, accuracy_drop, inception_score,
                      score_dataset, top1_accuracy)
from .model_io import load_model, save_model
from .quantize import (CalibrationStats, QuantConfig, QuantParams, QuantizedModel,
                       activation_qparams, compute_weight_qparams, default_quantize,
                       fake_quantize, fold_batchnorm, load_quantized, observe,
                       save_quantized)

__version__ = "0.1.0"

__all__ = [
    "AccuracyAwareConfig", "CalibrationStats", "DataError", "Dataset",
    "FractalSystem", "GraphError", "InceptionScoreResult", "LabeledImage",
    "Layer", "ManifestError", "ModelGraph", "QuantcalError", "QuantConfig",
    "QuantParams", "QuantizationError", "QuantizationReport", "QuantizedModel",
    "ShapeError", "accuracy_aware_quantize", "accuracy_drop",
    "activation_qparams", "compute_weight_qparams", "default_quantize",
    "fake_quantize", "fold_batchnorm", "forward", "generate_fractal_dataset",
    "inception_score", "load_cifar_batches", "load_image_dir", "load_model",
    "load_quantized", "observe", "sample_per_class", "save_image_dir",
    "save_model", "save_quantized", "score_dataset", "top1_accuracy",
]
