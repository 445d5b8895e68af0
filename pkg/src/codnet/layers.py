import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor


class ConvBNReLU(nn.Sequential):
    """Convolution -> BatchNorm -> ReLU.

    The convolution carries no bias: BatchNorm's shift makes it redundant and
    in training mode its gradient would be identically zero.
    """

    def __init__(self, in_ch, out_ch, kernel_size=3, stride=1, padding=None):
        if padding is None:
            if isinstance(kernel_size, tuple):
                padding = (kernel_size[0] // 2, kernel_size[1] // 2)
            else:
                padding = kernel_size // 2
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=padding, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )


def resize_to(x: Tensor, size) -> Tensor:
    """Bilinear resize to ``size`` (H, W); no-op when already there."""
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


def check_channels(name: str, x: Tensor, expected: int) -> None:
    if x.dim() != 4:
        raise ValueError(f"{name}: expected a 4-D [B, C, H, W] tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != expected:
        raise ValueError(f"{name}: expected {expected} channels, got {x.shape[1]}")
