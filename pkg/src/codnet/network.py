"""Full network assembly and the five ablation variants.

=======  ===========================================================
variant  graph
=======  ===========================================================
M1       backbone -> RFEM x4 -> per-level heads
M2       M1 + first BAM; heads see [f'_i, edge feature]
M3       M1 + CBFM cascade without the edge path; heads see p_i
M4       M3 + first BAM feeding the cascade; heads see [p_i, edge feature]
M5       M4 + second BAM on the cascade outputs; heads see [p_i, refined edge]
=======  ===========================================================
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import torch
import torch.nn as nn
from torch import Tensor

from codnet.backbone import BackboneConfig, build_backbone, check_input_size
from codnet.bam import BAM
from codnet.cbfm import CBFM
from codnet.layers import ConvBNReLU, resize_to
from codnet.rfem import OUT_CHANNELS, RFEM

VARIANTS = ("M1", "M2", "M3", "M4", "M5")
BAM2_INPUTS = ("p123", "p12f4")


class NetworkOutput(NamedTuple):
    masks: tuple[Tensor, ...]  # (M1, M2, M3) logits at input resolution
    edges: tuple[Tensor, ...]  # (e1, e2) logits at input resolution; fewer for reduced variants


@dataclass
class NetworkConfig:
    variant: str = "M5"
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    bam2_inputs: str = "p123"

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            self.backbone = BackboneConfig(**self.backbone)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.bam2_inputs not in BAM2_INPUTS:
            raise ValueError(f"bam2_inputs must be one of {BAM2_INPUTS}")

    def to_dict(self):
        return asdict(self)


class Head(nn.Sequential):
    def __init__(self, in_ch, mid_ch=OUT_CHANNELS):
        super().__init__(ConvBNReLU(in_ch, mid_ch, 3), nn.Conv2d(mid_ch, 1, 1))


class CODNet(nn.Module):
    def __init__(self, config: NetworkConfig | None = None, encoder: nn.Module | None = None):
        super().__init__()
        self.config = config = config or NetworkConfig()
        v = config.variant
        self.backbone = build_backbone(config.backbone, encoder)
        c = OUT_CHANNELS
        self.rfem = nn.ModuleList([RFEM(ch, c) for ch in config.backbone.channel_schedule])

        self.has_bam1 = v in ("M2", "M4", "M5")
        self.has_cascade = v in ("M3", "M4", "M5")
        self.has_bam2 = v == "M5"

        self.bam1 = BAM(c) if self.has_bam1 else None
        if self.has_cascade:
            # index 0..2 -> levels 1..3
            self.cbfm = nn.ModuleList([CBFM(c, use_edge=self.has_bam1) for _ in range(3)])
        else:
            self.cbfm = None
        self.bam2 = BAM(c) if self.has_bam2 else None

        head_in = 2 * c if self.has_bam1 else c
        self.heads = nn.ModuleList([Head(head_in, c) for _ in range(3)])

    @property
    def variant(self) -> str:
        return self.config.variant

    def forward(self, image: Tensor) -> NetworkOutput:
        h, w = image.shape[-2:]
        check_input_size(h, w)
        feats = self.backbone(image)
        f = [m(x) for m, x in zip(self.rfem, feats)]

        edge_feat = None
        edges = []
        if self.bam1 is not None:
            edge_feat, e1 = self.bam1(f[0], f[1], f[3])
            edges.append(e1)

        if self.cbfm is not None:
            p = [None, None, None, f[3]]
            for i in (2, 1, 0):
                p[i] = self.cbfm[i](f[i], edge_feat, p[i + 1])
            levels = p[:3]
        else:
            levels = f[:3]

        if self.bam2 is not None:
            high = levels[2] if self.config.bam2_inputs == "p123" else f[3]
            edge_feat, e2 = self.bam2(levels[0], levels[1], high)
            edges.append(e2)

        masks = []
        for head, x in zip(self.heads, levels):
            if edge_feat is not None:
                x = torch.cat([x, resize_to(edge_feat, x.shape[-2:])], dim=1)
            masks.append(head(x))

        size = (h, w)
        return NetworkOutput(
            masks=tuple(resize_to(m, size) for m in masks),
            edges=tuple(resize_to(e, size) for e in edges),
        )


def build_variant(variant: str = "M5", backbone: BackboneConfig | None = None, **kwargs) -> CODNet:
    """Build the network for one ablation variant name (``"M1"`` .. ``"M5"``)."""
    return CODNet(NetworkConfig(variant=variant, backbone=backbone or BackboneConfig(), **kwargs))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
