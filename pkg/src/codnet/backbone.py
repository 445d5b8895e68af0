"""Four-level hierarchical encoders producing a stride 4/8/16/32 feature pyramid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import torch
import torch.nn as nn
from torch import Tensor

from codnet.layers import ConvBNReLU

STRIDES = (4, 8, 16, 32)

# Full-scale default matches the PVTv2-B2 stage widths.
FULL_SCHEDULE = (64, 128, 320, 512)
TOY_SCHEDULE = (16, 32, 48, 64)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class PyramidFeatures(NamedTuple):
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor


@dataclass
class BackboneConfig:
    """Encoder settings.

    ``variant="toy"`` builds the small trainable convolutional encoder;
    ``variant="external"`` expects a module to be handed to
    :func:`build_backbone` (for example a pretrained transformer wrapped to
    return four levels). ``mean``/``std`` are the per-channel standardization
    constants applied to images in [0, 1] at ingestion.
    """

    channel_schedule: tuple[int, ...] = TOY_SCHEDULE
    variant: str = "toy"
    mean: tuple[float, ...] = IMAGENET_MEAN
    std: tuple[float, ...] = IMAGENET_STD

    def __post_init__(self):
        self.channel_schedule = tuple(int(c) for c in self.channel_schedule)
        self.mean = tuple(float(m) for m in self.mean)
        self.std = tuple(float(s) for s in self.std)
        if len(self.channel_schedule) != 4:
            raise ValueError(f"channel_schedule must have exactly 4 entries, got {len(self.channel_schedule)}")
        if any(c <= 0 for c in self.channel_schedule):
            raise ValueError("channel_schedule entries must be positive")
        if any(b < a for a, b in zip(self.channel_schedule, self.channel_schedule[1:])):
            raise ValueError("channel_schedule must be nondecreasing")
        if self.variant not in ("toy", "external"):
            raise ValueError(f"unknown backbone variant {self.variant!r}")


def check_input_size(h: int, w: int) -> None:
    if h % 32 or w % 32:
        raise ValueError(f"input height and width must be divisible by 32, got {h}x{w}")


def normalize_image(image: Tensor, cfg: BackboneConfig) -> Tensor:
    """Standardize a [B, 3, H, W] image in [0, 1] with the configured constants."""
    mean = torch.tensor(cfg.mean, dtype=image.dtype, device=image.device).view(1, -1, 1, 1)
    std = torch.tensor(cfg.std, dtype=image.dtype, device=image.device).view(1, -1, 1, 1)
    return (image - mean) / std


class _Stage(nn.Sequential):
    def __init__(self, in_ch, out_ch, stride):
        super().__init__(
            ConvBNReLU(in_ch, out_ch, 3, stride=stride),
            ConvBNReLU(out_ch, out_ch, 3),
        )


class ToyEncoder(nn.Module):
    """Small convolutional stand-in for a hierarchical transformer encoder.

    A stride-2 stem followed by four stages of two 3x3 conv blocks; every
    stage downsamples by 2, so the stage outputs sit at strides 4, 8, 16, 32.
    """

    def __init__(self, channel_schedule=TOY_SCHEDULE, in_ch=3):
        super().__init__()
        c1, c2, c3, c4 = channel_schedule
        stem_ch = max(c1 // 2, 8)
        self.stem = ConvBNReLU(in_ch, stem_ch, 3, stride=2)
        self.stage1 = _Stage(stem_ch, c1, 2)
        self.stage2 = _Stage(c1, c2, 2)
        self.stage3 = _Stage(c2, c3, 2)
        self.stage4 = _Stage(c3, c4, 2)
        self.channels = tuple(channel_schedule)

    def forward(self, x: Tensor) -> PyramidFeatures:
        x = self.stem(x)
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return PyramidFeatures(f1, f2, f3, f4)


class Backbone(nn.Module):
    """Wraps an encoder and enforces the pyramid contract on its outputs."""

    def __init__(self, encoder: nn.Module, config: BackboneConfig):
        super().__init__()
        self.encoder = encoder
        self.config = config

    @property
    def channels(self):
        return self.config.channel_schedule

    def forward(self, image: Tensor) -> PyramidFeatures:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected image of shape [B, 3, H, W], got {tuple(image.shape)}")
        h, w = image.shape[-2:]
        check_input_size(h, w)
        feats = PyramidFeatures(*self.encoder(image))
        for i, (f, c, s) in enumerate(zip(feats, self.channels, STRIDES), start=1):
            if tuple(f.shape[1:]) != (c, h // s, w // s):
                raise ValueError(
                    f"encoder level {i} has shape {tuple(f.shape[1:])}, expected {(c, h // s, w // s)}"
                )
        return feats


def build_backbone(config: BackboneConfig | None = None, encoder: nn.Module | None = None) -> Backbone:
    config = config or BackboneConfig()
    if config.variant == "toy":
        if encoder is not None:
            raise ValueError("toy backbone builds its own encoder; use variant='external' to plug one in")
        encoder = ToyEncoder(config.channel_schedule)
    elif encoder is None:
        raise ValueError("external backbone variant requires an encoder module")
    return Backbone(encoder, config)
