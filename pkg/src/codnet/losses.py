"""Structure-aware mask losses, edge Dice loss and the deep-supervision total."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import Tensor

from codnet.network import NetworkOutput

WEIGHT_WINDOW = 31
WEIGHT_GAIN = 5.0


def _check_pair(logits: Tensor, target: Tensor, name: str) -> None:
    if logits.shape != target.shape:
        raise ValueError(f"{name}: shape mismatch {tuple(logits.shape)} vs {tuple(target.shape)}")
    if logits.dim() != 4 or logits.shape[1] != 1:
        raise ValueError(f"{name}: expected [B, 1, H, W] maps, got {tuple(logits.shape)}")


def boundary_weights(target: Tensor, window: int = WEIGHT_WINDOW, gain: float = WEIGHT_GAIN) -> Tensor:
    """Pixel weights ``1 + gain * |local_mean(G) - G|``.

    The local mean excludes padding, so a constant mask yields weight 1 everywhere.
    Computed as two 1-D passes, which is exact for a padding-excluded box mean.
    """
    pad = window // 2
    pooled = F.avg_pool2d(target, (window, 1), stride=1, padding=(pad, 0), count_include_pad=False)
    pooled = F.avg_pool2d(pooled, (1, window), stride=1, padding=(0, pad), count_include_pad=False)
    return 1 + gain * torch.abs(pooled - target)


def weighted_bce(logits: Tensor, target: Tensor, window: int = WEIGHT_WINDOW, weights: Tensor | None = None) -> Tensor:
    _check_pair(logits, target, "weighted_bce")
    w = boundary_weights(target, window) if weights is None else weights
    bce = F.binary_cross_entropy_with_logits(logits, target, reduction="none")
    per_image = (w * bce).sum(dim=(2, 3)) / w.sum(dim=(2, 3))
    return per_image.mean()


def weighted_iou(
    logits: Tensor, target: Tensor, window: int = WEIGHT_WINDOW, eps: float = 1.0, weights: Tensor | None = None
) -> Tensor:
    _check_pair(logits, target, "weighted_iou")
    w = boundary_weights(target, window) if weights is None else weights
    p = torch.sigmoid(logits)
    inter = (w * p * target).sum(dim=(2, 3))
    union = (w * (p + target - p * target)).sum(dim=(2, 3))
    return (1 - (inter + eps) / (union + eps)).mean()


def dice_loss(logits: Tensor, target: Tensor, eps: float = 1.0) -> Tensor:
    _check_pair(logits, target, "dice_loss")
    e = torch.sigmoid(logits)
    inter = (e * target).sum(dim=(2, 3))
    denom = e.sum(dim=(2, 3)) + target.sum(dim=(2, 3))
    return (1 - (2 * inter + eps) / (denom + eps)).mean()


@dataclass
class LossBreakdown:
    terms: dict[str, Tensor] = field(default_factory=dict)
    total: Tensor | None = None

    def as_floats(self) -> dict[str, float]:
        out = {k: float(v.detach()) for k, v in self.terms.items()}
        out["total"] = float(self.total.detach())
        return out


def total_loss(output: NetworkOutput, mask: Tensor, edge: Tensor, window: int = WEIGHT_WINDOW) -> LossBreakdown:
    """Sum of wBCE + wIoU over every mask output and Dice over every edge output.

    Terms for outputs a variant does not produce are simply absent.
    """
    terms = {}
    w = boundary_weights(mask, window)
    for i, m in enumerate(output.masks, start=1):
        terms[f"wbce_{i}"] = weighted_bce(m, mask, weights=w)
        terms[f"wiou_{i}"] = weighted_iou(m, mask, weights=w)
    for j, e in enumerate(output.edges, start=1):
        terms[f"dice_{j}"] = dice_loss(e, edge)
    total = torch.stack(list(terms.values())).sum()
    return LossBreakdown(terms, total)
