"""Uniform 8-bit affine quantization and the default calibration flow.

Scheme: weights per-channel symmetric int8 in [-127, 127] on the output
channel axis; activations per-tensor asymmetric uint8 in [0, 255].  Rounding
is ties-away-from-zero everywhere.  Scales are kept as Python floats (f64):
casting them to f32 shifts quotients like 0.5 / (1/255) off the exact 127.5
tie and changes pinned rounding results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, GraphError, QuantizationError
from .graph import QUANTIZABLE_KINDS, Layer, ModelGraph, forward

SYMMETRIC_MAX = 127   # int8 without -128, so the grid is symmetric
ASYM_QMAX = 255


def round_half_away(x: np.ndarray | float) -> np.ndarray | float:
    """Round to nearest with ties away from zero (np.round would go to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class QuantParams:
    """Affine map between real values and the 8-bit integer grid."""

    scale: float | np.ndarray          # scalar (per-tensor) or f64 vector (per-channel)
    zero_point: int
    scheme: str                        # per_tensor_asymmetric | per_channel_symmetric
    channel_axis: int | None = None
    bits: int = 8

    def __post_init__(self):
        if self.scheme == "per_tensor_asymmetric":
            if not np.isscalar(self.scale) or self.scale <= 0:
                raise QuantizationError("per-tensor scale must be a positive scalar")
            if not 0 <= self.zero_point <= ASYM_QMAX:
                raise QuantizationError(f"zero_point {self.zero_point} out of [0, 255]")
        elif self.scheme == "per_channel_symmetric":
            if self.zero_point != 0:
                raise QuantizationError("symmetric scheme requires zero_point 0")
            if np.any(np.asarray(self.scale) <= 0):
                raise QuantizationError("every channel scale must be positive")
            if self.channel_axis is None:
                raise QuantizationError("per-channel scheme requires channel_axis")
        else:
            raise QuantizationError(f"unknown scheme {self.scheme!r}")

    @property
    def qrange(self) -> tuple[int, int]:
        if self.scheme == "per_channel_symmetric":
            return (-SYMMETRIC_MAX, SYMMETRIC_MAX)
        return (0, ASYM_QMAX)


def fake_quantize(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """quantize -> dequantize in float: clamp(round(x/s) + zp, qmin, qmax) mapped back."""
    x = np.asarray(x)
    scale = qp.scale
    if qp.scheme == "per_channel_symmetric":
        shape = [1] * x.ndim
        shape[qp.channel_axis] = -1
        scale = np.asarray(qp.scale, dtype=np.float64).reshape(shape)
    qmin, qmax = qp.qrange
    q = np.clip(round_half_away(x.astype(np.float64) / scale) + qp.zero_point, qmin, qmax)
    return ((q - qp.zero_point) * scale).astype(np.float32)


def compute_weight_qparams(weights: np.ndarray, channel_axis: int = 0) -> QuantParams:
    """Per-channel symmetric params: scale[c] = max|w[c]| / 127 (1.0 if all-zero)."""
    if weights.size == 0:
        raise QuantizationError("cannot quantize an empty weight tensor")
    moved = np.moveaxis(weights, channel_axis, 0).reshape(weights.shape[channel_axis], -1)
    absmax = np.abs(moved).max(axis=1).astype(np.float64)
    scale = np.where(absmax > 0, absmax / SYMMETRIC_MAX, 1.0)
    return QuantParams(scale=scale, zero_point=0, scheme="per_channel_symmetric",
                       channel_axis=channel_axis)


def activation_qparams_from_range(mn: float, mx: float) -> QuantParams:
    """Per-tensor asymmetric params for an observed range, nudged to include 0."""
    if mn > mx:
        raise QuantizationError(f"invalid range [{mn}, {mx}]")
    if mn == mx:
        # Degenerate range: identity-ish mapping instead of a zero division.
        return QuantParams(scale=1.0, zero_point=0, scheme="per_tensor_asymmetric")
    mn, mx = min(float(mn), 0.0), max(float(mx), 0.0)
    scale = (mx - mn) / ASYM_QMAX
    zp = int(np.clip(round_half_away(-mn / scale), 0, ASYM_QMAX))
    return QuantParams(scale=scale, zero_point=zp, scheme="per_tensor_asymmetric")


# ---------------------------------------------------------------------------
# Calibration observer
# ---------------------------------------------------------------------------

@dataclass
class CalibrationStats:
    """Per insertion point: running sum of per-sample extrema (order-insensitive)."""

    sum_min: dict[str, float] = field(default_factory=dict)
    sum_max: dict[str, float] = field(default_factory=dict)
    sample_count: int = 0

    def record(self, point: str, sample_min: float, sample_max: float) -> None:
        self.sum_min[point] = self.sum_min.get(point, 0.0) + float(sample_min)
        self.sum_max[point] = self.sum_max.get(point, 0.0) + float(sample_max)

    def merge(self, other: "CalibrationStats") -> "CalibrationStats":
        if self.sample_count and other.sample_count and set(self.sum_min) != set(other.sum_min):
            raise QuantizationError("cannot merge stats over different insertion points")
        out = CalibrationStats(dict(self.sum_min), dict(self.sum_max),
                               self.sample_count + other.sample_count)
        for point in other.sum_min:
            out.sum_min[point] = self.sum_min.get(point, 0.0) + other.sum_min[point]
            out.sum_max[point] = self.sum_max.get(point, 0.0) + other.sum_max[point]
        return out

    def range(self, point: str) -> tuple[float, float]:
        if self.sample_count == 0:
            raise QuantizationError("no calibration samples observed")
        return (self.sum_min[point] / self.sample_count,
                self.sum_max[point] / self.sample_count)

    def points(self) -> tuple[str, ...]:
        return tuple(self.sum_min)


def observe(model: ModelGraph, calibration_batches: Iterable[np.ndarray],
            points: Sequence[str] | None = None) -> CalibrationStats:
    """Accumulate per-sample output extrema at every quantizable layer.

    Batches may have any N; extrema are taken per sample, so the result does
    not depend on how samples are grouped into batches.
    """
    if points is None:
        points = model.quantizable_layers()
    stats = CalibrationStats()
    for batch in calibration_batches:
        batch = np.asarray(batch, dtype=np.float32)
        captured: dict[str, np.ndarray] = {}
        forward(model, batch, capture=points, captured=captured)
        for point in points:
            out = captured[point].reshape(batch.shape[0], -1)
            mins = out.min(axis=1)
            maxs = out.max(axis=1)
            for i in range(batch.shape[0]):
                stats.record(point, mins[i], maxs[i])
        stats.sample_count += batch.shape[0]
    if stats.sample_count == 0:
        raise DataError("calibration set is empty")
    return stats


def activation_qparams(stats: CalibrationStats) -> dict[str, QuantParams]:
    return {point: activation_qparams_from_range(*stats.range(point))
            for point in stats.points()}


# ---------------------------------------------------------------------------
# Quantized model
# ---------------------------------------------------------------------------

WEIGHT_KEY = {"conv2d": "kernel", "linear": "weight"}


@dataclass(frozen=True)
class QuantizedModel:
    """A model plus per-layer quantization annotations (immutable).

    Implements the forward() quantization protocol: fake-quantized weights
    are computed once per layer and cached; activation fake-quantize is
    applied at each annotated layer's output.
    """

    base: ModelGraph
    weight_qparams: dict[str, QuantParams]
    activation_qparams: dict[str, QuantParams]
    quantized_layers: tuple[str, ...]
    folded_bn: bool = True
    _weight_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        names = {l.name: l for l in self.base.layers}
        for name in self.quantized_layers:
            if name not in names:
                raise GraphError(f"annotation references unknown layer {name!r}")
            if names[name].kind not in QUANTIZABLE_KINDS:
                raise QuantizationError(f"layer {name!r} ({names[name].kind}) is not quantizable")
        qset = set(self.quantized_layers)
        if set(self.weight_qparams) != qset or set(self.activation_qparams) != qset:
            raise QuantizationError("annotations must cover exactly the quantized layer set")

    # forward() protocol ---------------------------------------------------
    def weight_arrays(self, name: str):
        if name not in self.weight_qparams:
            return None
        cached = self._weight_cache.get(name)
        if cached is None:
            layer = self.base.layer(name)
            key = WEIGHT_KEY[layer.kind]
            cached = {key: fake_quantize(layer.arrays[key], self.weight_qparams[name])}
            self._weight_cache[name] = cached
        return cached

    def transform_output(self, name: str, out: np.ndarray) -> np.ndarray:
        qp = self.activation_qparams.get(name)
        return out if qp is None else fake_quantize(out, qp)

    # manipulation ----------------------------------------------------------
    def without_layers(self, names: Iterable[str]) -> "QuantizedModel":
        """Copy with the given layers reverted to FP32."""
        drop = set(names)
        keep = tuple(n for n in self.quantized_layers if n not in drop)
        return QuantizedModel(
            base=self.base,
            weight_qparams={n: self.weight_qparams[n] for n in keep},
            activation_qparams={n: self.activation_qparams[n] for n in keep},
            quantized_layers=keep,
            folded_bn=self.folded_bn,
            _weight_cache={n: v for n, v in self._weight_cache.items() if n not in drop},
        )


# ---------------------------------------------------------------------------
# Batchnorm folding
# ---------------------------------------------------------------------------

def fold_batchnorm(graph: ModelGraph) -> ModelGraph:
    """Absorb inference-mode batchnorm into the preceding conv2d.

    A batchnorm folds when its single producer is a conv2d consumed by that
    batchnorm alone.  Consumers of the batchnorm are rewired to the conv.
    """
    consumers: dict[str, list[str]] = {}
    for lyr in graph.layers:
        for edge in lyr.inputs:
            consumers.setdefault(edge, []).append(lyr.name)
    by_name = {l.name: l for l in graph.layers}

    folded: dict[str, str] = {}   # bn name -> conv name
    new_layers: list[Layer] = []
    for lyr in graph.layers:
        inputs = tuple(folded.get(e, e) for e in lyr.inputs)
        if lyr.kind == "batchnorm":
            src = by_name.get(inputs[0])
            if src is not None and src.kind == "conv2d" and consumers.get(src.name) == [lyr.name]:
                conv = next(l for l in new_layers if l.name == src.name)
                g = lyr.arrays["gamma"].astype(np.float64)
                b = lyr.arrays["beta"].astype(np.float64)
                mu = lyr.arrays["running_mean"].astype(np.float64)
                var = lyr.arrays["running_var"].astype(np.float64)
                mult = g / np.sqrt(var + float(lyr.attrs["epsilon"]))
                kernel = (conv.arrays["kernel"].astype(np.float64)
                          * mult[:, None, None, None]).astype(np.float32)
                bias = ((conv.arrays["bias"].astype(np.float64) - mu) * mult + b).astype(np.float32)
                new_layers = [l if l.name != conv.name else
                              Layer(conv.name, "conv2d", conv.inputs,
                                    {"kernel": kernel, "bias": bias}, dict(conv.attrs))
                              for l in new_layers]
                folded[lyr.name] = conv.name
                continue
        new_layers.append(Layer(lyr.name, lyr.kind, inputs, lyr.arrays, lyr.attrs))
    if not folded:
        return graph
    return replace(graph, layers=tuple(new_layers))


# ---------------------------------------------------------------------------
# Default Quantization flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantConfig:
    fold_bn: bool = True
    calibration_samples: int = 5000   # 500 per class x 10 classes
    seed: int = 0


def _calibration_tensors(calibration, sample_rank: int, limit: int, seed: int) -> list[np.ndarray]:
    """Normalize a Dataset or a sequence of arrays into per-sample batches."""
    if hasattr(calibration, "images"):
        tensors = [img.pixels for img in calibration.images]
    else:
        tensors = [np.asarray(t, dtype=np.float32) for t in calibration]
    if not tensors:
        raise DataError("calibration set is empty")
    if any(t.ndim not in (sample_rank, sample_rank + 1) for t in tensors):
        raise DataError(f"calibration entries must be rank {sample_rank} samples "
                        f"or rank {sample_rank + 1} batches")
    if limit and len(tensors) > limit:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(tensors), size=limit, replace=False))
        tensors = [tensors[i] for i in keep]
    return [t[None, ...] if t.ndim == sample_rank else t for t in tensors]


def default_quantize(model: ModelGraph, calibration, config: QuantConfig | None = None) -> QuantizedModel:
    """POT-style default flow: fold batchnorm, derive weight and activation
    params from the calibration data, annotate every conv/linear layer."""
    config = config or QuantConfig()
    graph = fold_batchnorm(model) if config.fold_bn else model
    quantizable = graph.quantizable_layers()
    if not quantizable:
        raise QuantizationError("model has no quantizable (conv2d/linear) layers")
    batches = _calibration_tensors(calibration, len(graph.input_shape),
                                   config.calibration_samples, config.seed)
    stats = observe(graph, batches, points=quantizable)
    act_qp = activation_qparams(stats)
    weight_qp = {
        name: compute_weight_qparams(graph.layer(name).arrays[WEIGHT_KEY[graph.layer(name).kind]])
        for name in quantizable
    }
    return QuantizedModel(base=graph, weight_qparams=weight_qp,
                          activation_qparams=act_qp, quantized_layers=quantizable,
                          folded_bn=config.fold_bn)


# ---------------------------------------------------------------------------
# Sidecar persistence  (<name>.quant.json next to the model manifest)
# ---------------------------------------------------------------------------

def save_quantized(qm: QuantizedModel, path) -> None:
    """Write per-layer quantization params as a JSON sidecar."""
    layers = {}
    for name in qm.quantized_layers:
        wq = qm.weight_qparams[name]
        aq = qm.activation_qparams[name]
        layers[name] = {
            "weight": {"scheme": wq.scheme, "channel_axis": wq.channel_axis,
                       "scales": [float(s) for s in np.atleast_1d(wq.scale)],
                       "zero_point": wq.zero_point},
            "activation": {"scheme": aq.scheme, "scale": float(aq.scale),
                           "zero_point": aq.zero_point},
        }
    doc = {
        "format_version": 1,
        "fold_bn": qm.folded_bn,
        "quantized_layers": list(qm.quantized_layers),
        "layers": layers,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_quantized(model: ModelGraph, path) -> QuantizedModel:
    """Rebuild a QuantizedModel from a model graph plus its sidecar."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != 1:
        raise QuantizationError(f"unsupported quant sidecar version in {path}")
    graph = fold_batchnorm(model) if doc.get("fold_bn", True) else model
    weight_qp, act_qp = {}, {}
    for name in doc["quantized_layers"]:
        rec = doc["layers"][name]
        w, a = rec["weight"], rec["activation"]
        weight_qp[name] = QuantParams(
            scale=np.asarray(w["scales"], dtype=np.float64),
            zero_point=w["zero_point"], scheme=w["scheme"], channel_axis=w["channel_axis"])
        act_qp[name] = QuantParams(scale=a["scale"], zero_point=a["zero_point"],
                                   scheme=a["scheme"])
    return QuantizedModel(base=graph, weight_qparams=weight_qp, activation_qparams=act_qp,
                          quantized_layers=tuple(doc["quantized_layers"]),
                          folded_bn=doc.get("fold_bn", True))
