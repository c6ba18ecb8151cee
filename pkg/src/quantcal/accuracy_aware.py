"""Accuracy-aware quantization.

Start from the fully quantized model and greedily revert the most damaging
layers to FP32 until the accuracy drop fits the budget.  Each iteration
scores every still-quantized layer on a fixed seeded ranking subset with
only that layer reverted, then permanently reverts the best one (ties go to
the earliest layer in topological order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError
from .metrics import accuracy_drop, top1_accuracy
from .quantize import QuantConfig, QuantizedModel, WEIGHT_KEY, default_quantize

STATUS_WITHIN_BUDGET = "within_budget"
STATUS_ALL_REVERTED = "all_layers_reverted"
STATUS_REVERT_BUDGET_EXHAUSTED = "revert_budget_exhausted"


@dataclass(frozen=True)
class AccuracyAwareConfig:
    max_drop_pp: float = 1.0
    ranking_subset_size: int = 300
    max_reverts: int | None = None    # default: one revert per quantizable layer

    def __post_init__(self):
        if self.max_drop_pp < 0:
            raise DataError("max_drop_pp must be non-negative")
        if self.ranking_subset_size < 1:
            raise DataError("ranking_subset_size must be >= 1")


@dataclass
class QuantizationReport:
    fp32_accuracy: float
    quantized_accuracy: float
    drop_pp: float
    reverted_layers: list[str]
    iterations: int
    status: str
    layer_weight_ranges: dict[str, dict[str, float]] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fp32_accuracy": self.fp32_accuracy,
            "quantized_accuracy": self.quantized_accuracy,
            "drop_pp": self.drop_pp,
            "reverted_layers": list(self.reverted_layers),
            "iterations": self.iterations,
            "status": self.status,
            "layer_weight_ranges": self.layer_weight_ranges,
            "history": list(self.history),
        }


def weight_range_stats(qm: QuantizedModel) -> dict[str, dict[str, float]]:
    """Per-layer weight spread diagnostics recorded in the report.

    channel_absmax_* capture how differently channels are scaled;
    crushed_weight_fraction is the share of nonzero weights that round to
    exactly zero on this layer's int8 grid, the direct footprint of
    in-channel outliers.
    """
    stats = {}
    for name in qm.quantized_layers:
        layer = qm.base.layer(name)
        w = layer.arrays[WEIGHT_KEY[layer.kind]]
        flat = np.abs(w.reshape(w.shape[0], -1))
        per_channel = flat.max(axis=1)
        lo, hi = float(per_channel.min()), float(per_channel.max())
        nonzero = flat > 0
        crushed = nonzero & (flat < np.asarray(qm.weight_qparams[name].scale)[:, None] / 2)
        stats[name] = {
            "weight_min": float(w.min()),
            "weight_max": float(w.max()),
            "channel_absmax_min": lo,
            "channel_absmax_max": hi,
            "channel_absmax_ratio": hi / lo if lo > 0 else None,
            "crushed_weight_fraction": (float(crushed.sum() / nonzero.sum())
                                        if nonzero.any() else 0.0),
        }
    return stats


def accuracy_aware_quantize(
    model,
    labeled_calibration: Dataset,
    config: AccuracyAwareConfig | None = None,
    quant_config: QuantConfig | None = None,
    threads: int = 1,
) -> tuple[QuantizedModel, QuantizationReport]:
    config = config or AccuracyAwareConfig()
    quant_config = quant_config or QuantConfig()
    if len(labeled_calibration) == 0:
        raise DataError("calibration set is empty")
    if not labeled_calibration.fully_labeled:
        raise DataError("accuracy-aware quantization requires a labeled calibration set")

    qm = default_quantize(model, labeled_calibration, quant_config)
    base = qm.base
    ranges = weight_range_stats(qm)

    fp32_acc = top1_accuracy(base, labeled_calibration, threads=threads)
    quant_acc = top1_accuracy(base, labeled_calibration, quant=qm, threads=threads)
    drop = accuracy_drop(fp32_acc, quant_acc)

    rng = np.random.default_rng(quant_config.seed)
    subset_size = min(config.ranking_subset_size, len(labeled_calibration))
    subset = labeled_calibration.subset(
        np.sort(rng.choice(len(labeled_calibration), size=subset_size, replace=False)))

    max_reverts = config.max_reverts
    if max_reverts is None:
        max_reverts = len(qm.quantized_layers)

    reverted: list[str] = []
    history: list[dict] = [{"reverted": None, "drop_pp": drop}]
    order = {name: i for i, name in enumerate(base.quantizable_layers())}
    iterations = 0
    while drop > config.max_drop_pp and qm.quantized_layers and iterations < max_reverts:
        # Score each candidate: subset accuracy with only that layer reverted.
        best_name, best_acc = None, -1.0
        for name in sorted(qm.quantized_layers, key=order.__getitem__):
            acc = top1_accuracy(base, subset, quant=qm.without_layers([name]),
                                threads=threads)
            if acc > best_acc:
                best_name, best_acc = name, acc
        qm = qm.without_layers([best_name])
        reverted.append(best_name)
        iterations += 1
        quant_acc = top1_accuracy(base, labeled_calibration, quant=qm, threads=threads)
        drop = accuracy_drop(fp32_acc, quant_acc)
        history.append({"reverted": best_name, "drop_pp": drop})

    if drop <= config.max_drop_pp:
        status = STATUS_WITHIN_BUDGET
    elif not qm.quantized_layers:
        status = STATUS_ALL_REVERTED
    else:
        status = STATUS_REVERT_BUDGET_EXHAUSTED

    report = QuantizationReport(
        fp32_accuracy=fp32_acc,
        quantized_accuracy=quant_acc,
        drop_pp=drop,
        reverted_layers=reverted,
        iterations=iterations,
        status=status,
        layer_weight_ranges=ranges,
        history=history,
    )
    return qm, report
