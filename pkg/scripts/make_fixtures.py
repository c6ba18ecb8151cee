#!/usr/bin/env python3
"""Regenerate the committed test fixtures (model + corpora) under fixtures/.

Trains a small CNN on a synthetic "colored patch" distribution (10 classes =
5 patch positions x 2 palettes), exports it to the interchange format, checks
engine/torch forward parity, and writes the calibration and evaluation
corpora.  Requires torch; the test suite itself only reads the committed
outputs and never imports this script.

Usage: python scripts/make_fixtures.py [--out fixtures]
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from quantcal.data import Dataset, LabeledImage, generate_fractal_dataset, save_image_dir
from quantcal.graph import Layer, ModelGraph, forward
from quantcal.metrics import score_dataset, top1_accuracy
from quantcal.model_io import save_model
from quantcal.quantize import QuantConfig, default_quantize

PATCH_CENTERS = [(8, 8), (8, 24), (24, 8), (24, 24), (16, 16)]
PALETTE = [(1.00, 0.25, 0.20), (0.20, 0.45, 1.00)]
NUM_CLASSES = len(PATCH_CENTERS) * len(PALETTE)
SIZE = 32
MEAN = STD = 0.5


def render_patch_image(rng, label):
    pos = PATCH_CENTERS[label // 2]
    color = np.asarray(PALETTE[label % 2], dtype=np.float32)
    img = 0.12 + rng.uniform(0.0, 0.15, size=(3, SIZE, SIZE)).astype(np.float32)
    cy = pos[0] + int(rng.integers(-3, 4))
    cx = pos[1] + int(rng.integers(-3, 4))
    half = 6
    y0, y1 = max(cy - half, 0), min(cy + half, SIZE)
    x0, x1 = max(cx - half, 0), min(cx + half, SIZE)
    intensity = rng.uniform(0.75, 1.0)
    patch = color[:, None, None] * intensity
    img[:, y0:y1, x0:x1] = patch + rng.uniform(-0.05, 0.05, size=(3, y1 - y0, x1 - x0))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_distractor(rng):
    """Structureless dark noise; trained with random labels so the model
    learns low confidence away from the patch distribution."""
    amp = rng.uniform(0.1, 0.4)
    return (rng.uniform(0.0, amp, size=(3, SIZE, SIZE))).astype(np.float32)


def make_split(rng, n_per_class, distractor_fraction=0.0):
    images, labels = [], []
    n = n_per_class * NUM_CLASSES
    for i in range(n):
        label = i % NUM_CLASSES
        images.append(render_patch_image(rng, label))
        labels.append(label)
    for _ in range(int(n * distractor_fraction)):
        images.append(render_distractor(rng))
        labels.append(int(rng.integers(0, NUM_CLASSES)))
    return np.stack(images), np.asarray(labels, dtype=np.int64)


class PatchNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(8)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(16)
        self.conv3 = nn.Conv2d(16, 16, 3, padding=1)
        self.fc = nn.Linear(16 * 4 * 4, NUM_CLASSES)
        self.pool = nn.MaxPool2d(2, 2)

    def forward(self, x):
        x = self.pool(torch.relu(self.bn1(self.conv1(x))))
        x = self.pool(torch.relu(self.bn2(self.conv2(x))))
        x = self.pool(torch.relu(self.conv3(x)))
        return self.fc(torch.flatten(x, 1))


def train(seed=0):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x, y = make_split(rng, n_per_class=200, distractor_fraction=0.08)
    x = (x - MEAN) / STD
    net = PatchNet()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    loss_fn = nn.CrossEntropyLoss()
    xb, yb = torch.from_numpy(x), torch.from_numpy(y)
    net.train()
    for epoch in range(30):
        perm = torch.randperm(len(xb))
        total = 0.0
        for start in range(0, len(xb), 64):
            idx = perm[start:start + 64]
            opt.zero_grad()
            loss = loss_fn(net(xb[idx]), yb[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        if epoch % 5 == 0 or epoch == 29:
            print(f"epoch {epoch:2d}  loss {total / len(xb):.4f}")
    net.eval()
    return net


def export(net: PatchNet, path: Path) -> ModelGraph:
    def arr(t):
        return t.detach().numpy().astype(np.float32)

    def conv(name, inputs, m):
        return Layer(name, "conv2d", (inputs,),
                     {"kernel": arr(m.weight), "bias": arr(m.bias)},
                     {"stride": 1, "padding": 1})

    def bn(name, inputs, m):
        return Layer(name, "batchnorm", (inputs,),
                     {"gamma": arr(m.weight), "beta": arr(m.bias),
                      "running_mean": arr(m.running_mean),
                      "running_var": arr(m.running_var)},
                     {"epsilon": m.eps})

    def mp(name, inputs):
        return Layer(name, "maxpool2d", (inputs,), {},
                     {"kernel_size": 2, "stride": 2, "padding": 0})

    layers = (
        conv("conv1", "input", net.conv1), bn("bn1", "conv1", net.bn1),
        Layer("relu1", "relu", ("bn1",)), mp("pool1", "relu1"),
        conv("conv2", "pool1", net.conv2), bn("bn2", "conv2", net.bn2),
        Layer("relu2", "relu", ("bn2",)), mp("pool2", "relu2"),
        conv("conv3", "pool2", net.conv3),
        Layer("relu3", "relu", ("conv3",)), mp("pool3", "relu3"),
        Layer("flat", "flatten", ("pool3",)),
        Layer("fc", "linear", ("flat",),
              {"weight": arr(net.fc.weight), "bias": arr(net.fc.bias)}),
    )
    graph = ModelGraph(layers, input_shape=(3, SIZE, SIZE),
                       class_names=tuple(f"patch{p}_{c}" for p in range(5) for c in range(2)),
                       input_mean=np.full(3, MEAN, dtype=np.float32),
                       input_std=np.full(3, STD, dtype=np.float32))
    save_model(graph, path)

    # parity: engine vs torch on raw [0,1] inputs
    rng = np.random.default_rng(99)
    raw = rng.uniform(0, 1, size=(16, 3, SIZE, SIZE)).astype(np.float32)
    with torch.no_grad():
        want = net(torch.from_numpy((raw - MEAN) / STD)).numpy()
    got = forward(graph, raw)
    err = np.max(np.abs(want - got))
    print(f"engine/torch parity max abs err: {err:.2e}")
    assert err < 1e-4, "exported model does not match the source network"
    return graph


def corpus(rng, n_per_class, out_dir):
    images = []
    count = n_per_class * NUM_CLASSES
    for i in range(count):
        label = i % NUM_CLASSES
        images.append(LabeledImage(render_patch_image(rng, label), label, f"p{i:05d}"))
    dataset = Dataset(tuple(images), num_classes=NUM_CLASSES)
    save_image_dir(dataset, out_dir)
    return dataset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "fixtures")
    args = ap.parse_args()

    net = train(seed=0)
    model_dir = args.out / "model"
    model_dir.mkdir(parents=True, exist_ok=True)
    graph = export(net, model_dir / "patch_cnn.json")

    rng = np.random.default_rng(2024)
    calib = corpus(rng, 50, args.out / "calib")     # 500 images
    evald = corpus(rng, 30, args.out / "eval")      # 300 images

    fp32 = top1_accuracy(graph, evald)
    qm = default_quantize(graph, calib, QuantConfig())
    quant = top1_accuracy(qm.base, evald, quant=qm)
    print(f"fp32 eval accuracy:  {fp32:.4f}")
    print(f"int8 eval accuracy:  {quant:.4f}")
    print(f"drop: {(fp32 - quant) * 100:.3f} pp")

    in_dist = score_dataset(graph, evald, splits=1)
    fractal = score_dataset(graph, generate_fractal_dataset(200, 10, SIZE, seed=77), splits=1)
    print(f"IS in-distribution: {in_dist.mean:.3f}")
    print(f"IS fractal:         {fractal.mean:.3f}")
    assert (fp32 - quant) * 100 <= 2.0
    assert in_dist.mean > fractal.mean


if __name__ == "__main__":
    main()
