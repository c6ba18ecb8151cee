"""Exports that cross into the primary toolkit's file formats.

export_synthetic writes a generator's samples as a corpus directory
(images/*.png + labels.csv).  export_model converts a torch classifier made
of supported layer types into the interchange manifest + blob and verifies
that the primary engine reproduces the torch forward pass.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .models import Generator

SUPPORTED = (nn.Conv2d, nn.BatchNorm2d, nn.ReLU, nn.LeakyReLU, nn.MaxPool2d,
             nn.AvgPool2d, nn.AdaptiveAvgPool2d, nn.Flatten, nn.Linear,
             nn.Softmax)


class UnsupportedLayer(ValueError):
    """The network uses a layer kind the interchange format cannot express."""


class VerificationFailed(RuntimeError):
    """Exported model disagreed with the source network."""


def export_synthetic(generator: Generator, n_per_class: int, seed: int,
                     out_dir: str | Path, batch_size: int = 64) -> Path:
    """Sample the generator class-by-class and write a corpus directory.

    Pixels map from [-1, 1] to 8-bit; identical seeds give byte-identical
    output files.
    """
    from PIL import Image

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    num_classes = generator.num_classes
    gen = torch.Generator().manual_seed(seed)
    z = torch.randn(n_per_class * num_classes, generator.z_dim, generator=gen)
    labels = torch.arange(n_per_class * num_classes, dtype=torch.long) % num_classes

    rows = []
    generator.eval()
    with torch.no_grad():
        for start in range(0, len(z), batch_size):
            images = generator(z[start:start + batch_size], labels[start:start + batch_size])
            u8 = ((images.clamp(-1, 1) + 1.0) * 127.5).round().clamp(0, 255)
            u8 = u8.to(torch.uint8).numpy()
            for j in range(u8.shape[0]):
                name = f"{start + j:06d}.png"
                Image.fromarray(u8[j].transpose(1, 2, 0), mode="RGB").save(
                    out / "images" / name)
                rows.append((name, int(labels[start + j])))
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)
    return out


def _layers_of(network: nn.Module) -> list[nn.Module]:
    if isinstance(network, nn.Sequential):
        modules = list(network)
    else:
        modules = [m for m in network.children()]
    if not modules:
        raise UnsupportedLayer("network has no exportable child modules")
    flat: list[nn.Module] = []
    for m in modules:
        if isinstance(m, nn.Sequential):
            flat.extend(_layers_of(m))
        else:
            flat.append(m)
    return flat


def _pair(value) -> int:
    if isinstance(value, (tuple, list)):
        if value[0] != value[1]:
            raise UnsupportedLayer(f"non-square parameter {value}")
        return int(value[0])
    return int(value)


def export_model(network: nn.Module, input_shape: tuple[int, ...],
                 manifest_path: str | Path,
                 class_names=None, input_mean=None, input_std=None,
                 verify: bool = True) -> Path:
    """Write the network as interchange manifest + blob.

    The network must be a flat pipeline of supported layer types (no grouped
    convolutions, no residual wiring).  When verify is set, the exported
    model is loaded with the primary engine and compared against the torch
    forward on 16 random inputs; disagreement beyond 1e-4 fails the export.
    """
    from quantcal.graph import Layer, ModelGraph
    from quantcal.graph import forward as engine_forward
    from quantcal.model_io import save_model

    def arr(t):
        return t.detach().cpu().numpy().astype(np.float32)

    layers: list[Layer] = []
    prev = "input"
    counts: dict[str, int] = {}

    def name_for(kind: str) -> str:
        counts[kind] = counts.get(kind, 0) + 1
        return f"{kind}{counts[kind]}"

    for module in _layers_of(network):
        if not isinstance(module, SUPPORTED):
            raise UnsupportedLayer(f"unsupported layer kind {type(module).__name__}")
        if isinstance(module, nn.Conv2d):
            if module.groups != 1:
                raise UnsupportedLayer("grouped convolution is not supported")
            if module.dilation != (1, 1):
                raise UnsupportedLayer("dilated convolution is not supported")
            bias = arr(module.bias) if module.bias is not None else np.zeros(
                module.out_channels, dtype=np.float32)
            name = name_for("conv")
            layers.append(Layer(name, "conv2d", (prev,),
                                {"kernel": arr(module.weight), "bias": bias},
                                {"stride": _pair(module.stride),
                                 "padding": _pair(module.padding)}))
        elif isinstance(module, nn.BatchNorm2d):
            name = name_for("bn")
            layers.append(Layer(name, "batchnorm", (prev,),
                                {"gamma": arr(module.weight), "beta": arr(module.bias),
                                 "running_mean": arr(module.running_mean),
                                 "running_var": arr(module.running_var)},
                                {"epsilon": module.eps}))
        elif isinstance(module, nn.ReLU):
            name = name_for("relu")
            layers.append(Layer(name, "relu", (prev,)))
        elif isinstance(module, nn.LeakyReLU):
            name = name_for("lrelu")
            layers.append(Layer(name, "leaky_relu", (prev,), {},
                                {"negative_slope": module.negative_slope}))
        elif isinstance(module, nn.MaxPool2d):
            name = name_for("pool")
            layers.append(Layer(name, "maxpool2d", (prev,), {},
                                {"kernel_size": _pair(module.kernel_size),
                                 "stride": _pair(module.stride or module.kernel_size),
                                 "padding": _pair(module.padding)}))
        elif isinstance(module, nn.AvgPool2d):
            if _pair(module.padding) and module.count_include_pad:
                raise UnsupportedLayer("avgpool with count_include_pad is not supported")
            name = name_for("pool")
            layers.append(Layer(name, "avgpool2d", (prev,), {},
                                {"kernel_size": _pair(module.kernel_size),
                                 "stride": _pair(module.stride or module.kernel_size),
                                 "padding": _pair(module.padding)}))
        elif isinstance(module, nn.AdaptiveAvgPool2d):
            if _pair(module.output_size) != 1:
                raise UnsupportedLayer("adaptive pooling only supported to 1x1")
            name = name_for("gap")
            layers.append(Layer(name, "global_avg_pool", (prev,)))
        elif isinstance(module, nn.Flatten):
            name = name_for("flat")
            layers.append(Layer(name, "flatten", (prev,)))
        elif isinstance(module, nn.Linear):
            bias = arr(module.bias) if module.bias is not None else np.zeros(
                module.out_features, dtype=np.float32)
            name = name_for("fc")
            layers.append(Layer(name, "linear", (prev,),
                                {"weight": arr(module.weight), "bias": bias}))
        elif isinstance(module, nn.Softmax):
            name = name_for("softmax")
            layers.append(Layer(name, "softmax", (prev,)))
        prev = name

    mean = np.asarray(input_mean, dtype=np.float32) if input_mean is not None else None
    std = np.asarray(input_std, dtype=np.float32) if input_std is not None else None
    graph = ModelGraph(tuple(layers), tuple(input_shape),
                       class_names=tuple(class_names) if class_names else None,
                       input_mean=mean, input_std=std)
    path = save_model(graph, manifest_path)

    if verify:
        rng = np.random.default_rng(0)
        raw = rng.uniform(0, 1, size=(16, *input_shape)).astype(np.float32)
        feed = raw
        if mean is not None:
            shape = (1, -1) + (1,) * (len(input_shape) - 1)
            feed = (raw - mean.reshape(shape)) / std.reshape(shape)
        training = network.training
        network.eval()
        with torch.no_grad():
            want = network(torch.from_numpy(feed)).numpy()
        network.train(training)
        got = engine_forward(graph, raw)
        err = float(np.max(np.abs(want - got)))
        if err > 1e-4:
            raise VerificationFailed(f"engine/torch forward differ by {err:.2e}")
    return path
