"""Student generator and conditional discriminator.

Generator: project the noise vector to 128 dims, concatenate the class
embedding, expand to a 4x4 base feature map, then three upsampling blocks
(nearest x2, 3x3 padded conv, batchnorm, GLU) and a final 3x3 conv + tanh.
4 * 2^3 = 32, so the output is a (3, 32, 32) image in [-1, 1].

Discriminator: four downsampling blocks (4x4 strided conv with spectral
normalization, LeakyReLU), halving 32 -> 16 -> 8 -> 4 -> 2 and exposing the
four block outputs as feature maps; the last map is flattened, projected to
128 dims, concatenated with the class embedding, and reduced to one logit.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

EMBED_DIM = 128
PROJ_DIM = 128
BASE_SIZE = 4


class UpBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        # conv to 2*out_ch, GLU gates half the channels away
        self.conv = nn.Conv2d(in_ch, 2 * out_ch, 3, padding=1)
        self.bn = nn.BatchNorm2d(2 * out_ch)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.glu(self.bn(self.conv(x)), dim=1)


class Generator(nn.Module):
    def __init__(self, num_classes: int, z_dim: int = 128, base_channels: int = 128):
        super().__init__()
        self.z_dim = z_dim
        self.num_classes = num_classes
        self.project = nn.Linear(z_dim, PROJ_DIM)
        self.embed = nn.Embedding(num_classes, EMBED_DIM)
        self.expand = nn.Linear(PROJ_DIM + EMBED_DIM,
                                base_channels * BASE_SIZE * BASE_SIZE)
        self.base_channels = base_channels
        self.up1 = UpBlock(base_channels, base_channels // 2)       # 4 -> 8
        self.up2 = UpBlock(base_channels // 2, base_channels // 4)  # 8 -> 16
        self.up3 = UpBlock(base_channels // 4, base_channels // 8)  # 16 -> 32
        self.to_rgb = nn.Conv2d(base_channels // 8, 3, 3, padding=1)

    def forward(self, z: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        h = torch.cat([self.project(z), self.embed(labels)], dim=1)
        h = self.expand(h).reshape(-1, self.base_channels, BASE_SIZE, BASE_SIZE)
        h = self.up3(self.up2(self.up1(h)))
        return torch.tanh(self.to_rgb(h))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class DownBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.utils.parametrizations.spectral_norm(
            nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))

    def forward(self, x):
        return F.leaky_relu(self.conv(x), 0.2)


class Discriminator(nn.Module):
    def __init__(self, num_classes: int, base_channels: int = 64):
        super().__init__()
        chans = [base_channels, base_channels * 2, base_channels * 4, base_channels * 8]
        self.blocks = nn.ModuleList([
            DownBlock(3, chans[0]),
            DownBlock(chans[0], chans[1]),
            DownBlock(chans[1], chans[2]),
            DownBlock(chans[2], chans[3]),
        ])
        self.project = nn.Linear(chans[3] * 2 * 2, PROJ_DIM)
        self.embed = nn.Embedding(num_classes, EMBED_DIM)
        self.judge = nn.Linear(PROJ_DIM + EMBED_DIM, 1)

    def forward(self, images: torch.Tensor, labels: torch.Tensor
                ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns (logit per sample, the 4 block feature maps)."""
        features = []
        h = images
        for block in self.blocks:
            h = block(h)
            features.append(h)
        h = self.project(torch.flatten(h, 1))
        h = torch.cat([h, self.embed(labels)], dim=1)
        return self.judge(h).squeeze(1), features
