"""Foreground-map evaluation: S-measure, E-measure, weighted F-measure and MAE.

All kernels take a prediction ``P`` (float map, rescaled to [0, 1] when it
falls outside that range) and a ground truth ``G`` (binarized at 0.5), both
2-D and of equal shape, and return a Python float.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

METRIC_KEYS = ("s_alpha", "e_phi", "wf_beta", "mae")
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _prepare(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim != 2:
        raise ValueError(f"expected 2-D maps, got shape {pred.shape}")
    lo, hi = pred.min(), pred.max()
    if lo < 0 or hi > 1:
        pred = (pred - lo) / (hi - lo) if hi > lo else np.zeros_like(pred)
    return pred, gt > 0.5


def mae(pred, gt) -> float:
    pred, gt = _prepare(pred, gt)
    return float(np.abs(pred - gt).mean())


# --- S-measure -------------------------------------------------------------


def _object_score(x: np.ndarray) -> float:
    mu = x.mean()
    sigma = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mu / (mu * mu + 1.0 + sigma)


def _s_object(pred, gt) -> float:
    n_fg = int(gt.sum())
    n_bg = gt.size - n_fg
    return (n_fg * _object_score(pred[gt]) + n_bg * _object_score(1.0 - pred[~gt])) / gt.size


def centroid(gt) -> tuple[int, int]:
    """Split point (x, y) of the region term: rounded foreground centroid, one-based."""
    h, w = gt.shape
    if not gt.any():
        return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
    y, x = np.argwhere(gt).mean(axis=0).round()
    return int(x) + 1, int(y) + 1


def _ssim(pred, gt) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    gt = gt.astype(np.float64)
    x = pred.mean()
    y = gt.mean()
    dof = max(n - 1, 1)
    dx = pred - x
    dy = gt - y
    sigma_x = (dx * dx).sum() / dof
    sigma_y = (dy * dy).sum() / dof
    sigma_xy = (dx * dy).sum() / dof
    alpha = 4 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0:
        return float(alpha / beta)
    return 1.0 if beta == 0 else 0.0


def _s_region(pred, gt) -> float:
    h, w = gt.shape
    x, y = centroid(gt)
    total = 0.0
    for rows, cols in ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
                       (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))):
        block = pred[rows, cols]
        total += block.size * _ssim(block, gt[rows, cols])
    return total / gt.size


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    pred, gt = _prepare(pred, gt)
    ratio = gt.mean()
    if ratio == 0:
        return float(1.0 - pred.mean())
    if ratio == 1:
        return float(pred.mean())
    score = alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)
    return float(max(score, 0.0))


# --- E-measure -------------------------------------------------------------


def _enhanced_alignment(binary, gt) -> float:
    if not gt.any():
        enhanced = 1.0 - binary
    elif gt.all():
        enhanced = binary.astype(np.float64)
    else:
        g = gt - gt.mean()
        b = binary - binary.mean()
        align = 2.0 * g * b / (g * g + b * b)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(np.mean(enhanced))


def _binarize(pred, threshold):
    # zero-valued pixels never count as foreground, so an all-zero map stays empty
    return ((pred >= threshold) & (pred > 0)).astype(np.float64)


def e_measure(pred, gt, mode: str = "adaptive", n_thresholds: int = 256) -> float:
    """Enhanced-alignment measure.

    ``mode="adaptive"`` binarizes at ``min(2 * mean(P), 1)``; ``mode="mean"``
    averages the score over ``n_thresholds`` uniform thresholds in [0, 1].
    """
    pred, gt = _prepare(pred, gt)
    gt = gt.astype(np.float64)
    if mode == "adaptive":
        return _enhanced_alignment(_binarize(pred, min(2.0 * pred.mean(), 1.0)), gt)
    if mode == "mean":
        scores = [_enhanced_alignment(_binarize(pred, t), gt) for t in np.linspace(0, 1, n_thresholds)]
        return float(np.mean(scores))
    raise ValueError(f"unknown E-measure mode {mode!r}")


# --- weighted F-measure ----------------------------------------------------


def gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    k[k < np.finfo(k.dtype).eps * k.max()] = 0
    return k / k.sum()


def nearest_foreground(gt) -> tuple[np.ndarray, np.ndarray]:
    """For every pixel: Euclidean distance to, and flat index of, the nearest foreground pixel.

    Ties go to the foreground pixel that comes first in row-major order.
    """
    fg = np.argwhere(gt)
    flat_fg = np.flatnonzero(gt)
    pts = np.argwhere(np.ones_like(gt, dtype=bool))
    tree = cKDTree(fg)
    n = len(fg)
    dist = np.empty(len(pts))
    index = np.empty(len(pts), dtype=np.int64)
    todo = np.arange(len(pts))
    k = min(8, n)
    while len(todo):
        d, idx = tree.query(pts[todo], k=k)
        d = d.reshape(len(todo), -1)
        idx = idx.reshape(len(todo), -1)
        tied = d == d[:, :1]
        # if every returned neighbour ties, a further tie may be hidden beyond k
        unresolved = tied.all(axis=1) & (k < n)
        done = ~unresolved
        best = np.where(tied, idx, n).min(axis=1)
        dist[todo[done]] = d[done, 0]
        index[todo[done]] = flat_fg[best[done]]
        todo = todo[unresolved]
        k = min(2 * k, n)
    return dist.reshape(gt.shape), index.reshape(gt.shape)


def weighted_f(pred, gt, beta2: float = 1.0, kernel_size: int = 7, sigma: float = 5.0,
               decay_base: float = 0.5, decay_scale: float = 5.0) -> float:
    pred, gt = _prepare(pred, gt)
    if not gt.any():
        return 0.0
    err = np.abs(pred - gt)
    dist, idx = nearest_foreground(gt)
    err_t = err.ravel()[idx]  # background pixels inherit the error of their nearest foreground pixel
    err_t[gt] = err[gt]
    ea = ndimage.convolve(err_t, gaussian_kernel(kernel_size, sigma), mode="constant", cval=0.0)
    min_e = np.where(gt & (ea < err), ea, err)
    weight = np.where(gt, 1.0, 2.0 - np.exp(math.log(decay_base) / decay_scale * dist))
    ew = min_e * weight
    tp = gt.sum() - ew[gt].sum()
    fp = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    denom = recall + beta2 * precision
    return float((1 + beta2) * recall * precision / denom) if denom > 0 else 0.0


def score_all(pred, gt, e_mode: str = "adaptive") -> dict[str, float]:
    return {
        "s_alpha": s_measure(pred, gt),
        "e_phi": e_measure(pred, gt, mode=e_mode),
        "wf_beta": weighted_f(pred, gt),
        "mae": mae(pred, gt),
    }


# --- folder evaluation -----------------------------------------------------


@dataclass
class MetricsReport:
    dataset: str = ""
    rows: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.rows)

    @property
    def aggregate(self) -> dict[str, float]:
        if not self.rows:
            return {k: float("nan") for k in METRIC_KEYS}
        return {k: float(np.mean([r[k] for r in self.rows])) for k in METRIC_KEYS}

    def add(self, image_id: str, scores: dict[str, float], gt_empty: bool = False):
        self.rows.append({"id": image_id, **{k: scores[k] for k in METRIC_KEYS}})
        if gt_empty:
            self.degenerate.append(image_id)

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "count": self.count,
            "aggregate": self.aggregate if self.rows else None,
            "errors": self.errors,
            "degenerate_wf": self.degenerate,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("id",) + METRIC_KEYS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def save(self, out):
        """Write ``<out>.csv`` (per image) and ``<out>.json`` (aggregate)."""
        out = str(out)
        base = out[:-5] if out.endswith(".json") else out[:-4] if out.endswith(".csv") else out
        self.write_csv(base + ".csv")
        self.write_json(base + ".json")
        return base + ".csv", base + ".json"


def load_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def resize_prediction(pred_u8: np.ndarray, shape) -> np.ndarray:
    """Bilinear resize of an 8-bit map to ``shape`` (H, W); returns floats in [0, 1]."""
    if pred_u8.shape != tuple(shape):
        pred_u8 = np.asarray(Image.fromarray(pred_u8).resize((shape[1], shape[0]), Image.BILINEAR))
    return pred_u8.astype(np.float64) / 255.0


def _index_images(folder) -> dict[str, Path]:
    out = {}
    for p in sorted(Path(folder).iterdir(), key=lambda q: os.fsencode(q.name)):
        if p.is_file() and p.suffix.lower() in IMAGE_EXTS:
            out.setdefault(p.stem, p)
    return out


def evaluate_folder(pred_dir, gt_dir, dataset: str | None = None, e_mode: str = "adaptive") -> MetricsReport:
    """Score every same-named prediction/GT pair; unmatched files go to ``errors``."""
    preds = _index_images(pred_dir)
    gts = _index_images(gt_dir)
    report = MetricsReport(dataset=dataset if dataset is not None else Path(gt_dir).name)
    for stem in sorted(set(preds) | set(gts), key=os.fsencode):
        if stem not in gts:
            report.errors.append({"id": stem, "error": "missing ground truth"})
            continue
        if stem not in preds:
            report.errors.append({"id": stem, "error": "missing prediction"})
            continue
        gt = load_gray(gts[stem]) >= 128
        pred = resize_prediction(load_gray(preds[stem]), gt.shape)
        report.add(stem, score_all(pred, gt, e_mode), gt_empty=not gt.any())
    return report
