"""Model graph: ordered layer DAG with a single input and a single output.

Layers are stored in topological order; every edge references either an
earlier layer's name or the reserved graph input ``"input"``.  The graph is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import numpy as np

from . import kernels
from .errors import GraphError, ShapeError

INPUT = "input"

LAYER_KINDS = frozenset({
    "conv2d", "batchnorm", "relu", "leaky_relu", "maxpool2d", "avgpool2d",
    "global_avg_pool", "linear", "add", "flatten", "softmax",
})

# Weight tensors each kind carries, in blob serialization order.
ARRAY_PARAMS = {
    "conv2d": ("kernel", "bias"),
    "linear": ("weight", "bias"),
    "batchnorm": ("gamma", "beta", "running_mean", "running_var"),
}

SCALAR_PARAMS = {
    "conv2d": ("stride", "padding"),
    "maxpool2d": ("kernel_size", "stride", "padding"),
    "avgpool2d": ("kernel_size", "stride", "padding"),
    "batchnorm": ("epsilon",),
    "leaky_relu": ("negative_slope",),
}

QUANTIZABLE_KINDS = frozenset({"conv2d", "linear"})


@dataclass(frozen=True)
class Layer:
    name: str
    kind: str
    inputs: tuple[str, ...]
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    attrs: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise GraphError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if not self.name or self.name == INPUT:
            raise GraphError(f"invalid layer name {self.name!r}")
        want_inputs = 2 if self.kind == "add" else 1
        if len(self.inputs) != want_inputs:
            raise GraphError(
                f"layer {self.name!r} ({self.kind}) takes {want_inputs} input(s), "
                f"got {len(self.inputs)}"
            )
        for key in ARRAY_PARAMS.get(self.kind, ()):
            arr = self.arrays.get(key)
            if arr is None:
                raise GraphError(f"layer {self.name!r} missing array {key!r}")
            if arr.dtype != np.float32:
                raise GraphError(f"layer {self.name!r} array {key!r} must be float32")
        for key in SCALAR_PARAMS.get(self.kind, ()):
            if key not in self.attrs:
                raise GraphError(f"layer {self.name!r} missing attribute {key!r}")
        if self.kind == "conv2d" and self.arrays["kernel"].ndim != 4:
            raise GraphError(f"layer {self.name!r}: conv2d kernel must be rank 4")
        if self.kind == "linear" and self.arrays["weight"].ndim != 2:
            raise GraphError(f"layer {self.name!r}: linear weight must be rank 2")
        if self.kind == "batchnorm":
            lengths = {self.arrays[k].shape for k in ARRAY_PARAMS["batchnorm"]}
            if len(lengths) != 1 or len(next(iter(lengths))) != 1:
                raise GraphError(f"layer {self.name!r}: batchnorm params must be equal-length vectors")
            if np.any(self.arrays["running_var"] < 0):
                raise GraphError(f"layer {self.name!r}: running_var must be non-negative")


@dataclass(frozen=True)
class ModelGraph:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, ...]
    class_names: tuple[str, ...] | None = None
    input_mean: np.ndarray | None = None  # optional per-channel preprocessing
    input_std: np.ndarray | None = None

    def __post_init__(self):
        self.validate()

    @property
    def output_layer(self) -> Layer:
        return self.layers[-1]

    def layer(self, name: str) -> Layer:
        for lyr in self.layers:
            if lyr.name == name:
                return lyr
        raise GraphError(f"no layer named {name!r}")

    def quantizable_layers(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.layers if l.kind in QUANTIZABLE_KINDS)

    def validate(self) -> None:
        if not self.layers:
            raise GraphError("graph has no layers")
        if any(d <= 0 for d in self.input_shape) or len(self.input_shape) not in (1, 3):
            raise GraphError(f"input_shape must be (features,) or (C,H,W), got {self.input_shape}")
        if (self.input_mean is None) != (self.input_std is None):
            raise GraphError("input mean/std must be given together")
        if self.input_mean is not None:
            if len(self.input_shape) != 3:
                raise GraphError("input preprocessing requires a (C,H,W) input")
            c = self.input_shape[0]
            if self.input_mean.shape != (c,) or self.input_std.shape != (c,):
                raise GraphError("input mean/std must have one entry per channel")
            if np.any(self.input_std <= 0):
                raise GraphError("input std must be positive")
        seen: set[str] = set()
        for lyr in self.layers:
            lyr.validate()
            if lyr.name in seen:
                raise GraphError(f"duplicate layer name {lyr.name!r}")
            for edge in lyr.inputs:
                if edge != INPUT and edge not in seen:
                    raise GraphError(f"layer {lyr.name!r} references unknown input {edge!r}")
            seen.add(lyr.name)
        shapes = self.infer_shapes()
        out = shapes[self.layers[-1].name]
        if len(out) != 1:
            raise GraphError(f"final layer must produce (batch, num_classes), got per-sample shape {out}")
        if self.class_names is not None and len(self.class_names) != out[0]:
            raise GraphError("class_names length does not match model output width")

    def infer_shapes(self) -> dict[str, tuple[int, ...]]:
        """Per-sample output shape of every layer (batch dim omitted)."""
        shapes: dict[str, tuple[int, ...]] = {INPUT: tuple(self.input_shape)}
        for lyr in self.layers:
            ins = [shapes[e] for e in lyr.inputs]
            try:
                shapes[lyr.name] = _infer(lyr, ins)
            except ShapeError as exc:
                raise GraphError(f"layer {lyr.name!r}: {exc}") from exc
        return shapes

    @property
    def num_classes(self) -> int:
        return self.infer_shapes()[self.layers[-1].name][0]

    def replace_layer(self, name: str, new_layer: Layer) -> "ModelGraph":
        layers = tuple(new_layer if l.name == name else l for l in self.layers)
        return replace(self, layers=layers)


def _infer(lyr: Layer, ins: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind = lyr.kind
    s = ins[0]
    if kind == "conv2d":
        if len(s) != 3:
            raise ShapeError(f"conv2d needs (C,H,W) input, got {s}")
        cout, cin, kh, kw = lyr.arrays["kernel"].shape
        if s[0] != cin:
            raise ShapeError(f"channel mismatch: input {s[0]}, kernel {cin}")
        stride, pad = lyr.attrs["stride"], lyr.attrs["padding"]
        return (cout, kernels._out_dim(s[1], kh, stride, pad), kernels._out_dim(s[2], kw, stride, pad))
    if kind in ("maxpool2d", "avgpool2d"):
        if len(s) != 3:
            raise ShapeError(f"{kind} needs (C,H,W) input, got {s}")
        k, stride, pad = lyr.attrs["kernel_size"], lyr.attrs["stride"], lyr.attrs["padding"]
        return (s[0], kernels._out_dim(s[1], k, stride, pad), kernels._out_dim(s[2], k, stride, pad))
    if kind == "global_avg_pool":
        if len(s) != 3:
            raise ShapeError(f"global_avg_pool needs (C,H,W) input, got {s}")
        return (s[0],)
    if kind == "linear":
        if len(s) != 1:
            raise ShapeError(f"linear needs flat (features,) input, got {s}")
        o, i = lyr.arrays["weight"].shape
        if s[0] != i:
            raise ShapeError(f"feature mismatch: input {s[0]}, weight expects {i}")
        return (o,)
    if kind == "batchnorm":
        if lyr.arrays["gamma"].shape[0] != s[0]:
            raise ShapeError(f"channel mismatch: input {s[0]}, batchnorm {lyr.arrays['gamma'].shape[0]}")
        return s
    if kind == "add":
        if ins[0] != ins[1]:
            raise ShapeError(f"add operands differ: {ins[0]} vs {ins[1]}")
        return s
    if kind == "flatten":
        return (int(np.prod(s)),)
    # relu / leaky_relu / softmax preserve shape
    return s


def _apply(lyr: Layer, ins: list[np.ndarray]) -> np.ndarray:
    kind = lyr.kind
    x = ins[0]
    if kind == "conv2d":
        return kernels.conv2d(x, lyr.arrays["kernel"], lyr.arrays["bias"],
                              lyr.attrs["stride"], lyr.attrs["padding"])
    if kind == "linear":
        return kernels.linear(x, lyr.arrays["weight"], lyr.arrays["bias"])
    if kind == "batchnorm":
        return kernels.batchnorm_apply(x, lyr.arrays["gamma"], lyr.arrays["beta"],
                                       lyr.arrays["running_mean"], lyr.arrays["running_var"],
                                       lyr.attrs["epsilon"])
    if kind == "maxpool2d":
        return kernels.maxpool2d(x, lyr.attrs["kernel_size"], lyr.attrs["stride"], lyr.attrs["padding"])
    if kind == "avgpool2d":
        return kernels.avgpool2d(x, lyr.attrs["kernel_size"], lyr.attrs["stride"], lyr.attrs["padding"])
    if kind == "global_avg_pool":
        return kernels.global_avg_pool(x)
    if kind == "relu":
        return kernels.relu(x)
    if kind == "leaky_relu":
        return kernels.leaky_relu(x, lyr.attrs["negative_slope"])
    if kind == "softmax":
        return kernels.softmax(x, axis=-1)
    if kind == "add":
        return kernels.add(ins[0], ins[1])
    if kind == "flatten":
        return kernels.flatten(x)
    raise GraphError(f"unhandled kind {kind!r}")


def forward(graph: ModelGraph, batch: np.ndarray, quant=None,
            capture: Iterable[str] | None = None,
            captured: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Run the graph on a batch; returns (N, num_classes) float32.

    quant, when given, must provide ``weight_arrays(name) -> Mapping | None``
    (fake-quantized replacements for a layer's weight tensors) and
    ``transform_output(name, out) -> out`` (activation fake-quantize at that
    layer's insertion point).  ``capture`` collects named layer outputs into
    ``captured`` for the calibration observer.
    """
    batch = np.asarray(batch, dtype=np.float32)
    expect = (batch.shape[0],) + tuple(graph.input_shape)
    if batch.shape != expect:
        raise ShapeError(f"batch shape {batch.shape} does not match model input {expect}")
    x = batch
    if graph.input_mean is not None:
        shape = (1, -1) + (1,) * (len(graph.input_shape) - 1)
        x = ((x - graph.input_mean.reshape(shape)) / graph.input_std.reshape(shape)).astype(np.float32)
    capture = set(capture or ())
    values: dict[str, np.ndarray] = {INPUT: x}
    for lyr in graph.layers:
        arrays = lyr.arrays
        if quant is not None:
            override = quant.weight_arrays(lyr.name)
            if override is not None:
                arrays = {**arrays, **override}
                lyr = Layer(lyr.name, lyr.kind, lyr.inputs, arrays, lyr.attrs)
        out = _apply(lyr, [values[e] for e in lyr.inputs])
        if quant is not None:
            out = quant.transform_output(lyr.name, out)
        if not np.isfinite(out).all():
            raise ShapeError(f"non-finite values produced by layer {lyr.name!r}")
        if lyr.name in capture and captured is not None:
            captured[lyr.name] = out
        values[lyr.name] = out
    return values[graph.layers[-1].name]
