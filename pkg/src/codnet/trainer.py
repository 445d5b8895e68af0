"""Training loop, checkpoints, evaluation and the ablation driver."""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
import yaml
from torch.utils.data import DataLoader

from codnet.backbone import BackboneConfig, normalize_image
from codnet.data import (
    DatasetManifest,
    Sample,
    SampleDataset,
    is_validation,
    load_manifest,
    load_sample,
    synth_samples,
    to_tensors,
)
from codnet.losses import total_loss
from codnet.metrics import METRIC_KEYS, MetricsReport, score_all
from codnet.network import VARIANTS, CODNet, NetworkConfig

logger = logging.getLogger(__name__)

# Published ablation values (S_alpha, E_phi, weighted F, MAE) per test set, kept for the CSV footer.
REFERENCE_DATASETS = ("COD10K-Test", "CAMO-Test", "NC4K-Test")
REFERENCE_ABLATION = {
    "M1": ((0.805, 0.872, 0.711, 0.040), (0.802, 0.866, 0.745, 0.072), (0.812, 0.872, 0.766, 0.053)),
    "M2": ((0.839, 0.902, 0.752, 0.030), (0.831, 0.899, 0.773, 0.061), (0.839, 0.896, 0.795, 0.044)),
    "M3": ((0.841, 0.905, 0.751, 0.028), (0.838, 0.906, 0.779, 0.059), (0.848, 0.913, 0.801, 0.041)),
    "M4": ((0.857, 0.927, 0.766, 0.025), (0.853, 0.931, 0.798, 0.052), (0.871, 0.932, 0.822, 0.035)),
    "M5": ((0.862, 0.934, 0.772, 0.023), (0.866, 0.935, 0.808, 0.048), (0.882, 0.945, 0.829, 0.033)),
}


class NonFiniteLossError(RuntimeError):
    def __init__(self, batch_id: str, value: float):
        super().__init__(f"non-finite loss {value} at batch {batch_id}")
        self.batch_id = batch_id
        self.value = value


@dataclass
class DataSpec:
    """Where training data comes from.

    ``kind="synthetic"`` generates ``count`` scenes of ``size`` pixels;
    ``kind="folder"`` reads an ``Imgs/`` + ``GT/`` tree under ``root``.
    """

    kind: str = "synthetic"
    root: str | None = None
    count: int = 64
    size: int = 128
    difficulty: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic", "folder"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "folder" and not self.root:
            raise ValueError("folder dataset requires a root")


@dataclass
class TrainConfig:
    lr: float = 8e-5
    weight_decay: float = 0.1
    batch_size: int = 16
    epochs: int = 100
    input_size: int = 352
    variant: str = "M5"
    seed: int = 0
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    bam2_inputs: str = "p123"
    dataset: DataSpec = field(default_factory=DataSpec)
    val_fraction: float = 0.1
    augment: bool = True
    out_dir: str = "runs/default"
    log_name: str = "train_log.jsonl"

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            self.backbone = BackboneConfig(**self.backbone)
        if isinstance(self.dataset, dict):
            self.dataset = DataSpec(**self.dataset)
        if self.input_size % 32:
            raise ValueError(f"input_size must be divisible by 32, got {self.input_size}")
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("lr, batch_size and epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(variant=self.variant, backbone=self.backbone, bam2_inputs=self.bam2_inputs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"]["channel_schedule"] = list(self.backbone.channel_schedule)
        d["backbone"]["mean"] = list(self.backbone.mean)
        d["backbone"]["std"] = list(self.backbone.std)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **overrides) -> "TrainConfig":
        d = self.to_dict()
        for k, v in overrides.items():
            if k == "dataset" and isinstance(v, dict):
                d["dataset"].update(v)
            elif k == "backbone" and isinstance(v, dict):
                d["backbone"].update(v)
            else:
                d[k] = v
        return TrainConfig.from_dict(d)


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_dict(yaml.safe_load(fh) or {})


def save_config(config: TrainConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(path, model: CODNet, config: TrainConfig, optimizer=None, epoch: int = 0, extra=None):
    state = {
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "config": config.to_dict(),
        "variant": model.variant,
        "epoch": epoch,
        "rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(state, tmp)
    tmp.replace(path)


def load_checkpoint(path, map_location="cpu") -> tuple[CODNet, dict]:
    state = torch.load(path, map_location=map_location, weights_only=False)
    config = TrainConfig.from_dict(state["config"])
    model = CODNet(config.network_config())
    model.load_state_dict(state["model"])
    model.eval()
    return model, state


# --- data resolution -------------------------------------------------------


def resolve_dataset(spec: DataSpec, split: str = "train"):
    if spec.kind == "synthetic":
        return synth_samples(spec.count, spec.size, spec.difficulty, seed=spec.seed)
    return load_manifest(spec.root, split)


def split_train_val(source, fraction: float):
    if fraction <= 0:
        return source, []
    if isinstance(source, DatasetManifest):
        ids = source.ids()
        train_items = [it for it, i in zip(source.items, ids) if not is_validation(i, fraction)]
        val_items = [it for it, i in zip(source.items, ids) if is_validation(i, fraction)]
        train = DatasetManifest(source.root, source.split, train_items)
        return train, [load_sample(*it) for it in val_items]
    train = [s for s in source if not is_validation(s.id, fraction)]
    val = [s for s in source if is_validation(s.id, fraction)]
    return train, val


# --- training --------------------------------------------------------------


@dataclass
class TrainResult:
    model: CODNet
    log: list[dict]
    checkpoint: Path | None
    best_checkpoint: Path | None


def _mean_rows(rows: list[dict]) -> dict:
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def train(config: TrainConfig, train_data=None, val_data=None, save: bool = True,
          max_steps: int | None = None) -> TrainResult:
    """Optimise ``total_loss`` with Adam at a constant learning rate.

    ``train_data``/``val_data`` (lists of :class:`Sample` or a manifest) override
    the configured dataset. Each epoch appends one JSON line to the log and,
    when ``save`` is set, rewrites ``last.pt`` and (on a new best validation
    MAE) ``best.pt`` in ``config.out_dir``.
    """
    seed_everything(config.seed)
    if train_data is None:
        source = resolve_dataset(config.dataset, "train")
        train_data, split_val = split_train_val(source, config.val_fraction)
        if val_data is None:
            val_data = split_val
    val_data = val_data or []

    model = CODNet(config.network_config())
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    dataset = SampleDataset(train_data, config.input_size, augment=config.augment, seed=config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    loader = DataLoader(dataset, batch_size=config.batch_size, shuffle=True, generator=gen, num_workers=0)

    out_dir = Path(config.out_dir)
    log_path = out_dir / config.log_name
    if save:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_config(config, out_dir / "config.yaml")
        log_path.write_text("")

    log = []
    best_mae = math.inf
    last_ckpt = best_ckpt = None
    step = 0
    for epoch in range(1, config.epochs + 1):
        dataset.set_epoch(epoch)
        model.train()
        rows = []
        t0 = time.time()
        for b, (image, mask, edge, idx) in enumerate(loader):
            out = model(normalize_image(image, config.backbone))
            breakdown = total_loss(out, mask, edge)
            value = float(breakdown.total.detach())
            if not math.isfinite(value):
                batch_id = f"epoch{epoch}/batch{b}"
                if save:
                    with open(log_path, "a") as fh:
                        fh.write(json.dumps({"epoch": epoch, "error": "non-finite loss", "batch": batch_id,
                                             "indices": idx.tolist()}) + "\n")
                raise NonFiniteLossError(batch_id, value)
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            rows.append(breakdown.as_floats())
            step += 1
            if max_steps is not None and step >= max_steps:
                break

        entry = {"epoch": epoch, "steps": len(rows), "seconds": round(time.time() - t0, 3), **_mean_rows(rows)}
        if val_data:
            entry["val_mae"] = evaluate(model, val_data, config.input_size, config.backbone).aggregate["mae"]
        log.append(entry)
        logger.info("epoch %d: %s", epoch, entry)

        if save:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(entry) + "\n")
            last_ckpt = out_dir / "last.pt"
            save_checkpoint(last_ckpt, model, config, optimizer, epoch)
            if val_data and entry["val_mae"] < best_mae:
                best_mae = entry["val_mae"]
                best_ckpt = out_dir / "best.pt"
                save_checkpoint(best_ckpt, model, config, optimizer, epoch, {"val_mae": best_mae})
        if max_steps is not None and step >= max_steps:
            break

    model.eval()
    return TrainResult(model, log, last_ckpt, best_ckpt)


# --- inference & evaluation ------------------------------------------------


@torch.no_grad()
def predict(model: CODNet, image: np.ndarray, input_size: int, backbone: BackboneConfig | None = None,
            with_edges: bool = False):
    """Probability map sigmoid(M1) for a [3, H, W] image in [0, 1], at the image's native size.

    With ``with_edges`` also returns sigmoid of the last edge output (or None).
    """
    model.eval()
    backbone = backbone or model.config.backbone
    h, w = image.shape[-2:]
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
    x = F.interpolate(x, size=(input_size, input_size), mode="bilinear", align_corners=False)
    out = model(normalize_image(x, backbone))
    prob = torch.sigmoid(F.interpolate(out.masks[0], size=(h, w), mode="bilinear", align_corners=False))
    prob = prob[0, 0].numpy().astype(np.float64)
    if not with_edges:
        return prob
    edge = None
    if out.edges:
        edge = torch.sigmoid(F.interpolate(out.edges[-1], size=(h, w), mode="bilinear", align_corners=False))
        edge = edge[0, 0].numpy().astype(np.float64)
    return prob, edge


def _iter_samples(data):
    if isinstance(data, DatasetManifest):
        for img, msk in data.items:
            yield load_sample(img, msk)
    else:
        yield from data


def evaluate(model, data, input_size: int | None = None, backbone: BackboneConfig | None = None,
             dataset_name: str = "", predictor: Callable[[Sample], np.ndarray] | None = None) -> MetricsReport:
    """Score sigmoid(M1) against every sample's mask at native resolution.

    ``model`` may be a network or a checkpoint path. ``predictor`` replaces the
    network entirely (it receives a Sample and returns a [H, W] map in [0, 1]).
    """
    if isinstance(model, (str, Path)):
        model, state = load_checkpoint(model)
        input_size = input_size or state["config"]["input_size"]
    if predictor is None:
        if input_size is None:
            raise ValueError("input_size is required when evaluating a network")
        was_training = model.training
        predictor = lambda s: predict(model, s.image, input_size, backbone)  # noqa: E731
    else:
        was_training = False
    report = MetricsReport(dataset=dataset_name)
    for sample in _iter_samples(data):
        gt = sample.mask > 0.5
        report.add(sample.id, score_all(predictor(sample), gt), gt_empty=not gt.any())
    if was_training:
        model.train()
    return report


# --- ablation --------------------------------------------------------------


@dataclass
class AblationResult:
    reports: dict[str, MetricsReport | None]
    failures: dict[str, str] = field(default_factory=dict)
    csv_path: Path | None = None

    def mae(self, variant: str) -> float:
        return self.reports[variant].aggregate["mae"]


def write_ablation_csv(path, reports: dict, dataset_name: str, failures: dict | None = None) -> None:
    failures = failures or {}
    cols = ("S_alpha", "E_phi", "F_beta_w", "MAE")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Method"] + [f"{dataset_name}/{c}" for c in cols] + ["status"])
        for variant, report in reports.items():
            if report is None:
                writer.writerow([variant, "", "", "", "", f"failed: {failures.get(variant, '')}"])
            else:
                agg = report.aggregate
                writer.writerow([variant] + [f"{agg[k]:.4f}" for k in METRIC_KEYS] + ["ok"])
        writer.writerow([])
        writer.writerow(["# published reference values (not a reproduction target)"])
        writer.writerow(["# Method"] + [f"{d}/{c}" for d in REFERENCE_DATASETS for c in cols])
        for variant, per_ds in REFERENCE_ABLATION.items():
            writer.writerow([f"# {variant}"] + [f"{v:.3f}" for vals in per_ds for v in vals])


def run_ablation(base_config: TrainConfig, variants: Sequence[str] = VARIANTS, train_data=None,
                 test_data=None, out_csv=None, dataset_name: str = "synthetic-test",
                 save: bool = False) -> AblationResult:
    """Train one model per variant with a shared dataset and seed, then score each on ``test_data``.

    A variant that raises is recorded as failed; the others still run.
    """
    if train_data is None:
        train_data, _ = split_train_val(resolve_dataset(base_config.dataset, "train"), 0.0)
    if test_data is None:
        raise ValueError("run_ablation needs held-out test data")
    reports: dict[str, MetricsReport | None] = {}
    failures = {}
    for variant in variants:
        cfg = base_config.replace(variant=variant, out_dir=str(Path(base_config.out_dir) / variant))
        try:
            result = train(cfg, train_data=train_data, val_data=[], save=save)
            reports[variant] = evaluate(result.model, test_data, cfg.input_size, cfg.backbone, dataset_name)
        except Exception as exc:  # isolate per-variant failures
            logger.exception("variant %s failed", variant)
            reports[variant] = None
            failures[variant] = f"{type(exc).__name__}: {exc}"
    csv_path = None
    if out_csv is not None:
        csv_path = Path(out_csv)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        write_ablation_csv(csv_path, reports, dataset_name, failures)
    return AblationResult(reports, failures, csv_path)
