"""Cross-scale boundary fusion: edge-gated level features cascaded top-down."""

from __future__ import annotations

import torch
import torch.nn as nn
from torch import Tensor

from codnet.layers import ConvBNReLU, check_channels, resize_to

CHANNELS = 64


class CBFM(nn.Module):
    """One level of the top-down cascade.

    With ``use_edge=True`` the level feature is multiplied by the edge feature,
    convolved and scaled by a learnable scalar ``alpha`` (initialised to 1).
    With ``use_edge=False`` the edge path is removed and the level feature is
    only convolved. Either way the result is concatenated with the 2x-upsampled
    coarser output and refined back to 64 channels.
    """

    def __init__(self, channels: int = CHANNELS, use_edge: bool = True):
        super().__init__()
        self.channels = channels
        self.use_edge = use_edge
        self.fuse = ConvBNReLU(channels, channels, 3)
        if use_edge:
            self.alpha = nn.Parameter(torch.ones(()))
        else:
            self.register_parameter("alpha", None)
        self.pre_up = ConvBNReLU(channels, channels, 3)
        self.refine = ConvBNReLU(2 * channels, channels, 3)

    def initial_fusion(self, level: Tensor, edge: Tensor | None = None) -> Tensor:
        if not self.use_edge:
            return self.fuse(level)
        if edge is None:
            raise ValueError("CBFM with use_edge=True requires an edge feature")
        check_channels("CBFM edge", edge, self.channels)
        return self.alpha * self.fuse(level * resize_to(edge, level.shape[-2:]))

    def forward(self, level: Tensor, edge: Tensor | None, coarser: Tensor) -> Tensor:
        check_channels("CBFM level", level, self.channels)
        check_channels("CBFM coarser", coarser, self.channels)
        h, w = level.shape[-2:]
        if h % 2 or w % 2 or tuple(coarser.shape[-2:]) != (h // 2, w // 2):
            raise ValueError(
                f"CBFM coarser input must be exactly half of {(h, w)}, got {tuple(coarser.shape[-2:])}"
            )
        up = resize_to(self.pre_up(coarser), (h, w))
        return self.refine(torch.cat([up, self.initial_fusion(level, edge)], dim=1))
