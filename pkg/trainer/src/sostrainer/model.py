"""Fully convolutional dense-block encoder-decoder for sound-speed regression.

Three input branches (one per steering angle, two planes each) pass through
individual dense blocks, are concatenated and collapsed with a 1x1
convolution, then run through a pooled encoder, a bottleneck, and four
decoder dense blocks with index-preserving unpooling.  Long skip
connections link each encoder level to its decoder mirror.  Every dense
block is three convolutions (5x5, 5x5, 1x1, stride 1) with intra-block
dense skips; activations are PReLU and normalization is per-sample
instance normalization, so inference is batch-size independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn


@dataclass
class ModelSpec:
    in_planes: int = 6          # 3 angles x (re, im)
    growth: int = 16            # channels added by each dense-block conv
    channels: tuple = (16, 32, 48, 64)  # encoder level widths; len = pooling levels
    bottleneck: int = 64

    def __post_init__(self):
        if self.in_planes % 2:
            raise ValueError("input planes come in re/im pairs")
        if len(self.channels) < 1:
            raise ValueError("need at least one encoder level")

    @property
    def n_levels(self) -> int:
        return len(self.channels)

    def to_dict(self) -> dict:
        return {"in_planes": self.in_planes, "growth": self.growth,
                "channels": list(self.channels), "bottleneck": self.bottleneck}

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(in_planes=d["in_planes"], growth=d["growth"],
                         channels=tuple(d["channels"]), bottleneck=d["bottleneck"])


def _unit(in_ch, out_ch, kernel):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=1, padding=kernel // 2),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.PReLU(out_ch),
    )


class DenseBlock(nn.Module):
    """5x5, 5x5, 1x1 convolutions with dense intra-block skips."""

    def __init__(self, in_ch: int, growth: int, out_ch: int):
        super().__init__()
        self.c1 = _unit(in_ch, growth, 5)
        self.c2 = _unit(in_ch + growth, growth, 5)
        self.c3 = _unit(in_ch + 2 * growth, out_ch, 1)

    def forward(self, x):
        y1 = self.c1(x)
        y2 = self.c2(torch.cat([x, y1], dim=1))
        return self.c3(torch.cat([x, y1, y2], dim=1))


class SpeedRegressor(nn.Module):
    def __init__(self, spec: ModelSpec | None = None):
        super().__init__()
        spec = spec or ModelSpec()
        self.spec = spec
        n_branches = spec.in_planes // 2
        ch = spec.channels
        self.branches = nn.ModuleList(
            [DenseBlock(2, spec.growth, ch[0]) for _ in range(n_branches)])
        self.merge = _unit(n_branches * ch[0], ch[0], 1)

        enc = []
        for lvl in range(1, spec.n_levels):
            enc.append(DenseBlock(ch[lvl - 1], spec.growth, ch[lvl]))
        self.encoder = nn.ModuleList(enc)
        self.pool = nn.MaxPool2d(2, stride=2, return_indices=True)
        self.bottleneck = DenseBlock(ch[-1], spec.growth, spec.bottleneck)

        dec = []
        ups = []
        up_ch = spec.bottleneck
        for lvl in reversed(range(spec.n_levels)):
            # project to the pooled width so the unpooling indices line up
            ups.append(nn.Conv2d(up_ch, ch[lvl], 1))
            dec.append(DenseBlock(2 * ch[lvl], spec.growth, ch[lvl]))
            up_ch = ch[lvl]
        self.up_proj = nn.ModuleList(ups)
        self.decoder = nn.ModuleList(dec)
        self.unpool = nn.MaxUnpool2d(2, stride=2)
        self.head = nn.Conv2d(ch[0], 1, 1)

    def forward(self, x):
        n, c, h, w = x.shape
        if c != self.spec.in_planes:
            raise ValueError(f"expected {self.spec.in_planes} input planes, got {c}")
        div = 2 ** self.spec.n_levels
        if h % div or w % div:
            raise ValueError(f"spatial dims must be divisible by {div}")
        feats = [branch(x[:, 2 * i: 2 * i + 2]) for i, branch in enumerate(self.branches)]
        y = self.merge(torch.cat(feats, dim=1))

        skips = []
        indices = []
        sizes = []
        for lvl in range(self.spec.n_levels):
            skips.append(y)
            sizes.append(y.shape)
            y, idx = self.pool(y)
            indices.append(idx)
            if lvl < self.spec.n_levels - 1:
                y = self.encoder[lvl](y)
        y = self.bottleneck(y)

        for lvl, block in enumerate(self.decoder):
            k = self.spec.n_levels - 1 - lvl
            y = self.up_proj[lvl](y)
            y = self.unpool(y, indices[k], output_size=sizes[k])
            y = block(torch.cat([y, skips[k]], dim=1))
        return self.head(y)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(spec: ModelSpec | None = None) -> SpeedRegressor:
    return SpeedRegressor(spec)
