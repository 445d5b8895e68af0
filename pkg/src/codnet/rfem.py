"""Residual feature enhancement: four recursively chained receptive-field branches."""

import torch
import torch.nn as nn
from torch import Tensor

from codnet.layers import ConvBNReLU, check_channels

OUT_CHANNELS = 64
NUM_BRANCHES = 4


def _branch(ch):
    # 1x1 reduction then an asymmetric 1x3 / 3x1 pair
    return nn.Sequential(
        ConvBNReLU(ch, ch, 1),
        ConvBNReLU(ch, ch, (1, 3)),
        ConvBNReLU(ch, ch, (3, 1)),
    )


class RFEM(nn.Module):
    """Maps one backbone level with ``in_channels`` channels to 64 channels.

    The input is first reduced to 64 channels by a shared 1x1 block so that it
    can be added to the previous branch output. Branch ``k`` sees
    ``reduced + out_{k-1}`` (branch 1 sees ``reduced`` alone). The four branch
    outputs are concatenated, fused by a 1x1 block and added to a 1x1 shortcut
    of the raw input.
    """

    def __init__(self, in_channels: int, out_channels: int = OUT_CHANNELS):
        super().__init__()
        self.in_channels = in_channels
        self.reduce = ConvBNReLU(in_channels, out_channels, 1)
        self.branches = nn.ModuleList([_branch(out_channels) for _ in range(NUM_BRANCHES)])
        self.fuse = ConvBNReLU(NUM_BRANCHES * out_channels, out_channels, 1)
        self.shortcut = ConvBNReLU(in_channels, out_channels, 1)

    def branch_outputs(self, x: Tensor) -> list[Tensor]:
        """Outputs of the four chained branches (exposed for inspection)."""
        check_channels("RFEM input", x, self.in_channels)
        r = self.reduce(x)
        outs = []
        prev = None
        for branch in self.branches:
            prev = branch(r if prev is None else r + prev)
            outs.append(prev)
        return outs

    def forward(self, x: Tensor) -> Tensor:
        outs = self.branch_outputs(x)
        return self.shortcut(x) + self.fuse(torch.cat(outs, dim=1))
