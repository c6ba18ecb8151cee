"""Hand-built models and datasets shared between the unit and acceptance tests."""

import numpy as np

from quantcal.data import Dataset, LabeledImage
from quantcal.graph import Layer, ModelGraph

F32 = np.float32


def conv_layer(name, inputs, kernel, bias, stride=1, padding=0):
    return Layer(name, "conv2d", tuple(inputs),
                 {"kernel": np.asarray(kernel, dtype=F32),
                  "bias": np.asarray(bias, dtype=F32)},
                 {"stride": stride, "padding": padding})


def linear_layer(name, inputs, weight, bias):
    return Layer(name, "linear", tuple(inputs),
                 {"weight": np.asarray(weight, dtype=F32),
                  "bias": np.asarray(bias, dtype=F32)})


def bn_layer(name, inputs, gamma, beta, mean, var, epsilon=1e-5):
    return Layer(name, "batchnorm", tuple(inputs),
                 {"gamma": np.asarray(gamma, dtype=F32),
                  "beta": np.asarray(beta, dtype=F32),
                  "running_mean": np.asarray(mean, dtype=F32),
                  "running_var": np.asarray(var, dtype=F32)},
                 {"epsilon": epsilon})


def simple_layer(name, kind, inputs, **attrs):
    return Layer(name, kind, tuple(inputs), {}, attrs)


def identity_linear_graph(n=2):
    return ModelGraph((linear_layer("fc", ["input"], np.eye(n), np.zeros(n)),),
                      input_shape=(n,))


# ---------------------------------------------------------------------------
# Grid-aligned model: weights and calibration activations sit exactly on the
# int8 grids, so fake-quantized and FP32 forwards must agree to ~1e-6.
# ---------------------------------------------------------------------------

def grid_aligned_model():
    conv = conv_layer("conv", ["input"], [[[[1.27]]]], [0.0])
    flat = simple_layer("flat", "flatten", ["conv"])
    # Second output row all zero: degenerate channel, still exactly representable.
    fc = linear_layer("fc", ["flat"], [[1.27, 0.0, 0.0, 0.0],
                                       [0.0, 0.0, 0.0, 0.0]], [0.0, 0.0])
    graph = ModelGraph((conv, flat, fc), input_shape=(1, 2, 2))
    sample = np.asarray([[[2.55, 0.0], [1.00, 2.00]]], dtype=F32)
    return graph, sample


# ---------------------------------------------------------------------------
# Outlier fixture: three quantizable layers where conv2 carries a huge
# in-channel weight outlier pointing at a dead feature channel.  Per-channel
# scales blow up, the useful unit weights round to zero, and only reverting
# conv2 recovers accuracy.
#
# The model classifies solid-color images by "max darkness per channel"
# (darkest pixel of channel c decides against class c).  Solid-color images
# are bright in exactly one channel, so the fixture is trivially separable;
# fractal renders always contain fully dark pixels, so every fractal image
# produces exactly tied logits and a constant prediction.  That makes the
# accuracy-aware loop blind to quantization damage under fractal calibration,
# the behaviour the fractal rows of the experiment grid are meant to show.
# ---------------------------------------------------------------------------

OUTLIER_CLASSES = 3


def outlier_fixture_model(outlier=300.0):
    # darkness detectors: out_c = 1 - x_c, plus one dead channel
    k1 = np.zeros((4, 3, 1, 1), dtype=F32)
    b1 = np.zeros(4, dtype=F32)
    for c in range(3):
        k1[c, c, 0, 0] = -1.0
        b1[c] = 1.0
    conv1 = conv_layer("conv1", ["input"], k1, b1)
    relu1 = simple_layer("relu1", "relu", ["conv1"])

    # identity passthrough with an outlier weight on the dead channel;
    # per-channel scale becomes outlier/127 and the unit weights round to 0
    k2 = np.zeros((3, 4, 1, 1), dtype=F32)
    for i in range(3):
        k2[i, i, 0, 0] = 1.0
        k2[i, 3, 0, 0] = outlier
    conv2 = conv_layer("conv2", ["relu1"], k2, np.zeros(3))

    darkest = simple_layer("darkest", "maxpool2d", ["conv2"],
                           kernel_size=8, stride=8, padding=0)
    flat = simple_layer("flat", "flatten", ["darkest"])
    fc = linear_layer("fc", ["flat"], -np.eye(3), np.zeros(3))
    return ModelGraph((conv1, relu1, conv2, darkest, flat, fc), input_shape=(3, 8, 8))


def outlier_fixture_dataset(n_per_class=60, seed=7):
    """Solid-color 8x8 images: the class channel is uniformly bright, the
    other channels stay near zero."""
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n_per_class * OUTLIER_CLASSES):
        label = i % OUTLIER_CLASSES
        pixels = rng.uniform(0.0, 0.06, size=(3, 8, 8)).astype(F32)
        pixels[label] = 0.9 + rng.uniform(-0.02, 0.02, size=(8, 8)).astype(F32)
        images.append(LabeledImage(np.clip(pixels, 0.0, 1.0), label, f"blob-{i:04d}"))
    return Dataset(tuple(images), num_classes=OUTLIER_CLASSES, provenance="directory")
