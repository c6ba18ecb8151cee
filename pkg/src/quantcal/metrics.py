"""Classification and image-quality metrics over interchange-format models."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError
from .graph import ModelGraph, forward
from .quantize import QuantizedModel

EVAL_BATCH = 64


def _predict_batches(model: ModelGraph, dataset: Dataset,
                     quant: QuantizedModel | None, threads: int) -> np.ndarray:
    graph = quant.base if quant is not None else model
    batches = [pixels for pixels, _ in dataset.batches(EVAL_BATCH)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(lambda b: forward(graph, b, quant=quant), batches))
    else:
        outs = [forward(graph, b, quant=quant) for b in batches]
    return np.concatenate(outs, axis=0)


def top1_accuracy(model: ModelGraph, dataset: Dataset,
                  quant: QuantizedModel | None = None, threads: int = 1) -> float:
    """Fraction of samples whose argmax output equals the label.

    Argmax ties resolve to the lowest class index.  Pass a QuantizedModel to
    evaluate the fake-quantized path; its (possibly folded) base graph is
    used so the comparison isolates quantization error.
    """
    if len(dataset) == 0:
        raise DataError("cannot evaluate an empty dataset")
    labels = dataset.labels()
    logits = _predict_batches(model, dataset, quant, threads)
    if labels.max() >= logits.shape[1]:
        raise DataError(f"label {labels.max()} out of range for "
                        f"{logits.shape[1]}-class model")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def accuracy_drop(fp32_acc: float, quant_acc: float) -> float:
    """Accuracy drop in absolute percentage points (negative = improvement)."""
    if not (0.0 <= fp32_acc <= 1.0 and 0.0 <= quant_acc <= 1.0):
        raise DataError("accuracies must be fractions in [0, 1]")
    return (fp32_acc - quant_acc) * 100.0


# ---------------------------------------------------------------------------
# Inception Score
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InceptionScoreResult:
    mean: float
    std: float
    splits: int


def _check_probability_matrix(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 1:
        raise DataError(f"probability matrix must be (N, K), got {probs.shape}")
    if np.any(probs < 0) or np.any(probs > 1):
        raise DataError("probabilities must lie in [0, 1]")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("every row must sum to 1 within 1e-6")
    return probs


def inception_score(probs: np.ndarray, splits: int = 1) -> InceptionScoreResult:
    """exp(mean KL(p(y|x) || p_bar(y))) per contiguous split, then mean/std.

    Natural log; 0 * ln 0 := 0.  The marginal of a split is the mean of its
    rows, so a zero marginal entry with a nonzero conditional cannot occur.
    """
    probs = _check_probability_matrix(probs)
    n = probs.shape[0]
    if not 1 <= splits <= n:
        raise DataError(f"splits must be in [1, {n}], got {splits}")
    scores = []
    for k in range(splits):
        part = probs[k * n // splits:(k + 1) * n // splits]
        marginal = part.mean(axis=0)
        support = part > 0
        # The marginal is a mean that includes every row, so it is positive
        # wherever any conditional is (assert, not a reachable error).
        assert np.all(marginal[np.any(support, axis=0)] > 0)
        log_part = np.log(np.where(support, part, 1.0))
        log_marginal = np.log(np.where(marginal > 0, marginal, 1.0))
        kl = np.where(support, part * (log_part - log_marginal[None, :]), 0.0)
        scores.append(float(np.exp(kl.sum(axis=1).mean())))
    return InceptionScoreResult(mean=float(np.mean(scores)), std=float(np.std(scores)),
                                splits=splits)


def score_dataset(classifier: ModelGraph, dataset: Dataset, splits: int = 1,
                  threads: int = 1) -> InceptionScoreResult:
    """Forward all images through the classifier and score the class
    conditionals; softmax is appended when the model emits raw logits."""
    if len(dataset) == 0:
        raise DataError("cannot score an empty dataset")
    outputs = _predict_batches(classifier, dataset, None, threads)
    if classifier.output_layer.kind != "softmax":
        from .kernels import softmax
        outputs = softmax(outputs, axis=-1)
    return inception_score(outputs, splits=splits)
