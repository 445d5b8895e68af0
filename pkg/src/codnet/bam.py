"""Boundary aware module: low/high-level fusion gated by spatial attention."""

from typing import NamedTuple

import torch
import torch.nn as nn
from torch import Tensor

from codnet.layers import ConvBNReLU, check_channels, resize_to

CHANNELS = 64


class BamOutput(NamedTuple):
    edge_feature: Tensor  # [B, 64, H, W], flows on to fusion and heads
    edge_logit: Tensor  # [B, 1, H, W], supervised by the edge loss


class SpatialGate(nn.Module):
    """sigmoid(conv3x3(max over channels)) -> [B, 1, H, W] gate in (0, 1)."""

    def __init__(self, kernel_size=3):
        super().__init__()
        self.conv = nn.Conv2d(1, 1, kernel_size, padding=kernel_size // 2, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        pooled = x.amax(dim=1, keepdim=True)
        return torch.sigmoid(self.conv(pooled))


class BAM(nn.Module):
    """Fuses two low-level features with one high-level feature into an edge feature.

    ``low_b`` and ``high`` are bilinearly resized onto ``low_a``'s grid, so the
    output always has ``low_a``'s resolution.
    """

    def __init__(self, channels: int = CHANNELS):
        super().__init__()
        self.channels = channels
        self.conv_a = ConvBNReLU(channels, channels, 3)
        self.conv_b = ConvBNReLU(channels, channels, 3)
        self.gate = SpatialGate(3)
        self.edge_head = nn.Conv2d(channels, 1, 1)

    def fuse_inputs(self, low_a: Tensor, low_b: Tensor, high: Tensor) -> Tensor:
        """Location-weighted low-level sum: ``high * (low_a + low_b)``."""
        for name, x in (("low_a", low_a), ("low_b", low_b), ("high", high)):
            check_channels(f"BAM {name}", x, self.channels)
        size = low_a.shape[-2:]
        return resize_to(high, size) * (low_a + resize_to(low_b, size))

    def forward(self, low_a: Tensor, low_b: Tensor, high: Tensor) -> BamOutput:
        fused = self.fuse_inputs(low_a, low_b, high)
        refined = self.conv_b(self.conv_a(fused) + fused)
        edge_feature = refined * self.gate(refined) + refined
        return BamOutput(edge_feature, self.edge_head(edge_feature))
