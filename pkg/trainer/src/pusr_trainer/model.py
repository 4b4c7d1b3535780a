"""Torch mirror of the engine's training-form architecture.

The forward arithmetic matches the inference engine stage for stage: the
expand conv runs on the zero-padded grid, the spatial stage keeps its
identity branch explicit (the engine pre-merges it into the kernel; same
math), attention uses the same softpool / stride-2 / bilinear chain, and the
backbone runs the split/concat schedule.  Parity between this model and the
engine on an exported checkpoint is float-rounding-level, not bit-level.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

VARIANTS = {
    "U": (16, 8),
    "T": (32, 16),
    "S": (32, 16, 8),
    "M": (48, 32, 16),
    "B": (64, 48, 32),
    "L": (80, 64, 48),
}


def softpool2d(x: torch.Tensor, k: int = 2, stride: int = 2) -> torch.Tensor:
    """Exponentially weighted pooling with per-window max stabilization,
    matching the engine's convention (odd trailing rows/cols are dropped)."""
    if k != stride:
        raise NotImplementedError("trainer softpool supports k == stride")
    n, c, h, w = x.shape
    hc, wc = (h // k) * k, (w // k) * k
    win = x[:, :, :hc, :wc].reshape(n, c, hc // k, k, wc // k, k)
    win = win.permute(0, 1, 2, 4, 3, 5)
    m = win.amax(dim=(-2, -1), keepdim=True)
    e = torch.exp(win - m)
    return (win * e).sum(dim=(-2, -1)) / e.sum(dim=(-2, -1))


class RepMBConv(nn.Module):
    """Training-form block: expand, scale, spatial conv + explicit identity
    branch, learned channel gate, squeeze, residual."""

    def __init__(self, channels: int, expansion: int = 2, kernel: int = 3,
                 se_reduction: int = 4):
        super().__init__()
        cm = expansion * channels
        hidden = max(1, cm // se_reduction)
        self.kernel = kernel
        self.k1 = nn.Conv2d(channels, cm, 1)
        self.k2 = nn.Conv2d(cm, cm, kernel, padding=0)
        self.k3 = nn.Conv2d(cm, channels, 1)
        self.s = nn.Parameter(torch.ones(cm))
        self.v = nn.Parameter(torch.zeros(cm))
        self.se_w1 = nn.Parameter(torch.empty(hidden, cm))
        self.se_w2 = nn.Parameter(torch.empty(cm, hidden))
        bound1 = 1.0 / math.sqrt(cm)
        nn.init.uniform_(self.se_w1, -bound1, bound1)
        nn.init.uniform_(self.se_w2, -1.0 / math.sqrt(hidden), 1.0 / math.sqrt(hidden))
        # Open near the identity: tiny spatial kernel, zero biases.
        with torch.no_grad():
            self.k2.weight.mul_(0.01)
            for conv in (self.k1, self.k2, self.k3):
                conv.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pad = self.kernel // 2
        xp = F.pad(x, (pad, pad, pad, pad))
        y = self.k1(xp) * self.s.view(1, -1, 1, 1)
        u = self.k2(y) + y[:, :, pad:-pad, pad:-pad]    # conv + identity branch
        se = torch.sigmoid(self.se_w2 @ torch.relu(self.se_w1 @ self.v))
        u = u * se.view(1, -1, 1, 1)
        return self.k3(u) + x


class LIA(nn.Module):
    """Local importance attention: downscaled importance map times a
    first-channel gate."""

    def __init__(self, channels: int, squeeze: int = 4, kernel: int = 3):
        super().__init__()
        squeezed = max(1, channels // squeeze)
        self.conv_a = nn.Conv2d(channels, squeezed, kernel, stride=2,
                                padding=kernel // 2)
        self.conv_b = nn.Conv2d(squeezed, 1, kernel, padding=kernel // 2)
        with torch.no_grad():
            self.conv_a.bias.zero_()
            self.conv_b.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        imp = self.conv_b(self.conv_a(softpool2d(x)))
        imp = F.interpolate(torch.sigmoid(imp), size=x.shape[-2:],
                            mode="bilinear", align_corners=False)
        return torch.sigmoid(x[:, :1]) * imp * x


class HBlock(nn.Module):
    def __init__(self, channels: int, expansion: int = 2, kernel: int = 3,
                 use_attention: bool = True):
        super().__init__()
        self.rep1 = RepMBConv(channels, expansion, kernel)
        self.rep2 = RepMBConv(channels, expansion, kernel)
        self.lia = LIA(channels, kernel=kernel) if use_attention else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.gelu(self.rep1(x))
        x = F.gelu(self.rep2(x))
        return self.lia(x) if self.lia is not None else x


class PlainSRNet(nn.Module):
    """Head, H-blocks over the channel-wise U schedule (split/concat
    bookkeeping, as in training), tail, pixel shuffle."""

    def __init__(self, stage_channels=(16, 8), scale: int = 2,
                 kernel: int = 3, in_channels: int = 3,
                 use_attention: bool = True):
        super().__init__()
        if any(a < b for a, b in zip(stage_channels, stage_channels[1:])):
            raise ValueError("stage channels must be non-increasing")
        self.stage_channels = tuple(stage_channels)
        self.scale = scale
        self.kernel = kernel
        self.in_channels = in_channels
        self.use_attention = use_attention
        widths = self.stage_channels + self.stage_channels[-2::-1]
        self.block_widths = widths
        self.head = nn.Conv2d(in_channels, stage_channels[0], kernel,
                              padding=kernel // 2)
        self.blocks = nn.ModuleList(
            HBlock(w, kernel=kernel, use_attention=use_attention) for w in widths)
        self.tail = nn.Conv2d(stage_channels[0], in_channels * scale ** 2,
                              kernel, padding=kernel // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.head(x)
        stages = len(self.stage_channels)
        held = []
        for i, block in enumerate(self.blocks):
            if i < stages:
                out = block(feats)
                if i < stages - 1:
                    keep = self.block_widths[i + 1]
                    feats, rest = out[:, :keep], out[:, keep:]
                    held.append(rest)
                else:
                    feats = out
            else:
                feats = block(torch.cat([feats, held.pop()], dim=1))
        return F.pixel_shuffle(self.tail(feats), self.scale)

    @staticmethod
    def for_variant(variant: str, scale: int, **kw) -> "PlainSRNet":
        return PlainSRNet(VARIANTS[variant], scale, **kw)
