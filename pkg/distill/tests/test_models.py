"""Architecture invariants for the student generator and discriminator."""

import torch

from gandistill.models import Discriminator, Generator


def test_generator_output_shape_and_range():
    torch.manual_seed(0)
    g = Generator(num_classes=10)
    z = torch.randn(8, g.z_dim) * 3.0
    labels = torch.randint(0, 10, (8,))
    with torch.no_grad():
        out = g(z, labels)
    assert out.shape == (8, 3, 32, 32)
    assert float(out.min()) >= -1.0 and float(out.max()) <= 1.0


def test_generator_parameter_budget():
    g = Generator(num_classes=10)
    assert g.parameter_count() <= 2_500_000


def test_generator_configurable_z_dim():
    g = Generator(num_classes=5, z_dim=64)
    out = g(torch.randn(2, 64), torch.tensor([0, 4]))
    assert out.shape == (2, 3, 32, 32)


def test_generator_conditioning_matters():
    torch.manual_seed(3)
    g = Generator(num_classes=4)
    g.eval()
    z = torch.randn(1, g.z_dim)
    a = g(z, torch.tensor([0]))
    b = g(z, torch.tensor([3]))
    assert not torch.allclose(a, b)


def test_discriminator_feature_map_sizes():
    d = Discriminator(num_classes=10)
    logit, feats = d(torch.randn(4, 3, 32, 32), torch.randint(0, 10, (4,)))
    assert logit.shape == (4,)
    assert [f.shape[-1] for f in feats] == [16, 8, 4, 2]
    assert [f.shape[-2] for f in feats] == [16, 8, 4, 2]
    assert len(feats) == 4


def test_spectral_norm_bounds_singular_values():
    torch.manual_seed(5)
    d = Discriminator(num_classes=10)
    # converge the power iteration with a handful of forward passes
    x = torch.randn(2, 3, 32, 32)
    labels = torch.zeros(2, dtype=torch.long)
    with torch.no_grad():
        for _ in range(30):
            d(x, labels)
    for block in d.blocks:
        w = block.conv.weight.detach()   # the normalized weight
        sigma = torch.linalg.svdvals(w.reshape(w.shape[0], -1))[0]
        assert 0.95 <= float(sigma) <= 1.05
