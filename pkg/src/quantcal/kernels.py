"""FP32 layer kernels for small CNN classifiers.

All kernels take and return float32 numpy arrays with an explicit batch
dimension.  Convolution is cross-correlation (no kernel flip).  Average
pooling never counts padded cells (count_include_pad = false).  These
conventions are load-bearing: quantized/FP32 parity tests and the model
interchange format both assume them.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

F32 = np.float32


def _out_dim(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"window {k} with stride {stride} and padding {padding} does not "
            f"tile input extent {size}"
        )
    out = span // stride + 1
    if out <= 0:
        raise ShapeError("non-positive output dimension")
    return out


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, padding: int, fill: float):
    """Return (n, c, oh, ow, kh, kw) sliding windows of a padded NCHW array."""
    n, c, h, w = x.shape
    oh = _out_dim(h, kh, stride, padding)
    ow = _out_dim(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=fill)
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride], oh, ow


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate (N,Cin,H,W) with (Cout,Cin,kh,kw) + bias."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects rank-4 input/kernel, got {x.shape}/{kernel.shape}")
    cout, cin, kh, kw = kernel.shape
    if x.shape[1] != cin:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]}, kernel {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({cout},)")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d requires stride >= 1 and padding >= 0")
    patches, oh, ow = _windows(x, kh, kw, stride, padding, 0.0)
    out = np.einsum("nchwij,ocij->nohw", patches, kernel, dtype=F32)
    out += bias[None, :, None, None]
    return np.ascontiguousarray(out, dtype=F32)


def maxpool2d(x: np.ndarray, kernel_size: int, stride: int, padding: int = 0) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError("maxpool2d expects rank-4 input")
    if padding * 2 > kernel_size:
        raise ShapeError("maxpool2d padding must be <= kernel_size / 2")
    patches, _, _ = _windows(x, kernel_size, kernel_size, stride, padding, -np.inf)
    return np.ascontiguousarray(patches.max(axis=(-2, -1)), dtype=F32)


def avgpool2d(x: np.ndarray, kernel_size: int, stride: int, padding: int = 0) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError("avgpool2d expects rank-4 input")
    if padding * 2 > kernel_size:
        raise ShapeError("avgpool2d padding must be <= kernel_size / 2")
    patches, oh, ow = _windows(x, kernel_size, kernel_size, stride, padding, 0.0)
    sums = patches.sum(axis=(-2, -1), dtype=F32)
    # Divide by the number of non-padded cells under each window.
    ones = np.ones((1, 1) + x.shape[2:], dtype=F32)
    counts, _, _ = _windows(ones, kernel_size, kernel_size, stride, padding, 0.0)
    counts = counts.sum(axis=(-2, -1), dtype=F32)
    return np.ascontiguousarray(sums / counts, dtype=F32)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N,C,H,W) -> (N,C) spatial mean."""
    if x.ndim != 4:
        raise ShapeError("global_avg_pool expects rank-4 input")
    return np.ascontiguousarray(x.mean(axis=(2, 3), dtype=F32))


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(N,F) @ (O,F).T + (O,)."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"linear expects rank-2 input/weight, got {x.shape}/{weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear feature mismatch: input {x.shape[1]}, weight {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
    return np.ascontiguousarray(x @ weight.T + bias, dtype=F32)


def batchnorm_apply(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                    mean: np.ndarray, var: np.ndarray, epsilon: float) -> np.ndarray:
    """Inference-mode per-channel normalization along axis 1."""
    c = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        if arr.shape != (c,):
            raise ShapeError(f"batchnorm {name} shape {arr.shape} != ({c},)")
    if np.any(var < 0):
        raise ShapeError("batchnorm variance must be non-negative")
    # Fold into y = x * scale + shift; the affine is computed in f64 so the
    # only f32 rounding is the final elementwise apply.
    scale64 = gamma.astype(np.float64) / np.sqrt(var.astype(np.float64) + float(epsilon))
    shift64 = beta.astype(np.float64) - mean.astype(np.float64) * scale64
    shape = (1, c) + (1,) * (x.ndim - 2)
    scale = scale64.astype(F32).reshape(shape)
    shift = shift64.astype(F32).reshape(shape)
    return np.ascontiguousarray(x * scale + shift, dtype=F32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, F32(0.0))


def leaky_relu(x: np.ndarray, negative_slope: float) -> np.ndarray:
    return np.where(x >= 0, x, F32(negative_slope) * x).astype(F32, copy=False)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x, dtype=F32)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Row-stable softmax (max subtraction before exp)."""
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted, dtype=F32)
    return np.ascontiguousarray(e / e.sum(axis=axis, keepdims=True, dtype=F32))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return np.ascontiguousarray(a + b, dtype=F32)


def flatten(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.reshape(x.shape[0], -1))
