"""Boundary-guided camouflaged object detection: network, losses, metrics and tooling."""

from codnet.backbone import BackboneConfig, PyramidFeatures, ToyEncoder, build_backbone
from codnet.bam import BAM, BamOutput
from codnet.cbfm import CBFM
from codnet.losses import LossBreakdown, dice_loss, total_loss, weighted_bce, weighted_iou
from codnet.metrics import MetricsReport, e_measure, evaluate_folder, mae, s_measure, score_all, weighted_f
from codnet.network import VARIANTS, CODNet, NetworkConfig, NetworkOutput, build_variant
from codnet.rfem import RFEM

__version__ = "0.1.0"

__all__ = [
    "BAM",
    "BackboneConfig",
    "BamOutput",
    "CBFM",
    "CODNet",
    "LossBreakdown",
    "MetricsReport",
    "NetworkConfig",
    "NetworkOutput",
    "PyramidFeatures",
    "RFEM",
    "ToyEncoder",
    "VARIANTS",
    "build_backbone",
    "build_variant",
    "dice_loss",
    "e_measure",
    "evaluate_folder",
    "mae",
    "s_measure",
    "score_all",
    "total_loss",
    "weighted_bce",
    "weighted_f",
    "weighted_iou",
]
