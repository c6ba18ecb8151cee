"""Bridge exports: synthetic corpora and interchange-format classifiers."""

import numpy as np
import pytest
import torch
import torch.nn as nn

from gandistill.export import (UnsupportedLayer, VerificationFailed,
                               export_model, export_synthetic)
from gandistill.models import Generator


def test_export_synthetic_layout_and_balance(tmp_path):
    g = Generator(num_classes=4, z_dim=32)
    out = export_synthetic(g, n_per_class=3, seed=1, out_dir=tmp_path / "c")
    files = sorted((out / "images").iterdir())
    assert len(files) == 12
    lines = (out / "labels.csv").read_text().splitlines()
    assert lines[0] == "filename,label"
    labels = [int(line.split(",")[1]) for line in lines[1:]]
    assert sorted(labels) == sorted(list(range(4)) * 3)


def test_export_synthetic_deterministic(tmp_path):
    g = Generator(num_classes=3, z_dim=32)
    a = export_synthetic(g, 2, seed=9, out_dir=tmp_path / "a")
    b = export_synthetic(g, 2, seed=9, out_dir=tmp_path / "b")
    assert (a / "labels.csv").read_bytes() == (b / "labels.csv").read_bytes()
    for name in sorted(p.name for p in (a / "images").iterdir()):
        assert (a / "images" / name).read_bytes() == (b / "images" / name).read_bytes()


def test_export_synthetic_round_trips_through_primary_loader(tmp_path):
    from quantcal import load_image_dir

    torch.manual_seed(2)
    g = Generator(num_classes=2, z_dim=16)
    out = export_synthetic(g, 4, seed=3, out_dir=tmp_path / "c")
    loaded = load_image_dir(out)
    assert len(loaded) == 8
    assert loaded.fully_labeled

    gen = torch.Generator().manual_seed(3)
    z = torch.randn(8, 16, generator=gen)
    labels = torch.arange(8) % 2
    g.eval()
    with torch.no_grad():
        float_imgs = (g(z, labels).clamp(-1, 1) + 1.0) / 2.0
    for img, want in zip(loaded.images, float_imgs.numpy()):
        assert np.max(np.abs(img.pixels - want)) <= 1.0 / 255 + 1e-7


# ---------------------------------------------------------------------------
# model bridge
# ---------------------------------------------------------------------------

def small_classifier():
    torch.manual_seed(7)
    return nn.Sequential(
        nn.Conv2d(3, 8, 3, padding=1),
        nn.BatchNorm2d(8),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(8, 8, 3, padding=1),
        nn.LeakyReLU(0.2),
        nn.AvgPool2d(2, 2),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(8, 4),
    ).eval()


def test_export_single_linear(tmp_path):
    torch.manual_seed(0)
    net = nn.Sequential(nn.Linear(6, 3)).eval()
    path = export_model(net, (6,), tmp_path / "lin.json")
    assert path.is_file()
    assert (tmp_path / "lin.bin").is_file()


def test_export_classifier_parity_via_primary_engine(tmp_path):
    from quantcal import forward, load_model

    net = small_classifier()
    path = export_model(net, (3, 16, 16), tmp_path / "cls.json",
                        class_names=["a", "b", "c", "d"],
                        input_mean=[0.5, 0.5, 0.5], input_std=[0.5, 0.5, 0.5])
    graph = load_model(path)
    rng = np.random.default_rng(5)
    raw = rng.uniform(0, 1, size=(16, 3, 16, 16)).astype(np.float32)
    with torch.no_grad():
        want = net(torch.from_numpy((raw - 0.5) / 0.5)).numpy()
    got = forward(graph, raw)
    assert np.max(np.abs(want - got)) < 1e-4


def test_export_rejects_grouped_convolution(tmp_path):
    net = nn.Sequential(nn.Conv2d(4, 4, 3, padding=1, groups=2),
                        nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(4, 2))
    with pytest.raises(UnsupportedLayer, match="grouped"):
        export_model(net.eval(), (4, 8, 8), tmp_path / "g.json")


def test_export_rejects_unknown_module(tmp_path):
    net = nn.Sequential(nn.Conv2d(3, 4, 3, padding=1), nn.Dropout(0.5),
                        nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(4, 2))
    with pytest.raises(UnsupportedLayer, match="Dropout"):
        export_model(net.eval(), (3, 8, 8), tmp_path / "d.json")


def test_export_verification_catches_divergent_forward(tmp_path):
    # children look exportable, but forward() sneaks in an extra offset the
    # manifest cannot represent: the parity check must fail the export
    class Offset(nn.Sequential):
        def forward(self, x):
            return super().forward(x) + 1.0

    net = Offset(nn.Flatten(), nn.Linear(4, 2)).eval()
    with pytest.raises(VerificationFailed):
        export_model(net, (4,), tmp_path / "bad.json")
