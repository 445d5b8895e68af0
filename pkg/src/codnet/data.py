"""Datasets: COD-style folder ingestion, edge ground truth and synthetic camouflage scenes."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from scipy import ndimage
from torch.utils.data import Dataset

logger = logging.getLogger(__name__)

IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp")
MASK_THRESHOLD = 128


@dataclass
class Sample:
    id: str
    image: np.ndarray  # float32 [3, H, W] in [0, 1]
    mask: np.ndarray  # float32 [H, W] in {0, 1}
    edge: np.ndarray  # float32 [H, W] in {0, 1}


def derive_edge_gt(mask, kernel_size: int = 3) -> np.ndarray:
    """Morphological gradient (dilation minus erosion) of a binary mask.

    Borders use edge-replication padding, so a full mask has no edge.
    """
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("derive_edge_gt expects a binary {0, 1} mask")
    m = mask.astype(np.uint8)
    size = (kernel_size, kernel_size)
    dil = ndimage.grey_dilation(m, size=size, mode="nearest")
    ero = ndimage.grey_erosion(m, size=size, mode="nearest")
    return (dil - ero).astype(mask.dtype if mask.dtype != bool else np.uint8)


# --- folder datasets -------------------------------------------------------


@dataclass
class DatasetManifest:
    root: Path
    split: str
    items: list[tuple[Path, Path]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def ids(self) -> list[str]:
        return [img.stem for img, _ in self.items]


def _stems(folder: Path, exts) -> dict[str, Path]:
    out = {}
    if not folder.is_dir():
        return out
    for p in sorted(folder.iterdir(), key=lambda q: os.fsencode(q.name)):
        if p.is_file() and p.suffix.lower() in exts:
            out.setdefault(p.stem, p)
    return out


def load_manifest(root, split: str = "train") -> DatasetManifest:
    """Pair ``root/Imgs/<stem>.*`` with ``root/GT/<stem>.png``.

    ``split`` is recorded on the manifest; if ``root/<split>/Imgs`` exists it is
    used instead of ``root/Imgs``. Unpaired stems are skipped and listed.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    root = Path(root)
    base = root / split if (root / split / "Imgs").is_dir() else root
    images = _stems(base / "Imgs", IMAGE_EXTS)
    masks = _stems(base / "GT", IMAGE_EXTS)
    manifest = DatasetManifest(root=root, split=split)
    for stem in sorted(set(images) | set(masks), key=os.fsencode):
        if stem in images and stem in masks:
            manifest.items.append((images[stem], masks[stem]))
        else:
            manifest.skipped.append(stem)
    if manifest.skipped:
        logger.warning("%s: skipped %d unpaired stems", base, len(manifest.skipped))
    return manifest


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32).transpose(2, 0, 1) / 255.0


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) >= MASK_THRESHOLD).astype(np.float32)


def load_sample(image_path, mask_path) -> Sample:
    mask = read_mask(mask_path)
    return Sample(Path(image_path).stem, read_image(image_path), mask, derive_edge_gt(mask))


# --- synthetic camouflage --------------------------------------------------


def band_limited_noise(rng: np.random.Generator, size: int, cutoff: float) -> np.ndarray:
    """White noise low-passed in the Fourier domain, rescaled to [-1, 1]."""
    noise = rng.standard_normal((size, size))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    spectrum = np.fft.fft2(noise) * np.exp(-((radius / cutoff) ** 2))
    tex = np.real(np.fft.ifft2(spectrum))
    tex -= tex.mean()
    peak = np.abs(tex).max()
    return tex / peak if peak > 0 else tex


def _texture(rng, size, cutoff, channel_means, amplitude):
    base = band_limited_noise(rng, size, cutoff)
    tint = rng.uniform(0.6, 1.0, size=3)
    return np.stack([m + amplitude * t * base for m, t in zip(channel_means, tint)])


def blob_mask(rng: np.random.Generator, size: int, area_range=(0.12, 0.38), harmonics: int = 4) -> np.ndarray:
    """Fourier-perturbed ellipse covering a random fraction of the image."""
    target = rng.uniform(*area_range)
    amps = rng.uniform(0.0, 0.18, size=harmonics) / np.arange(1, harmonics + 1)
    phases = rng.uniform(0, 2 * np.pi, size=harmonics)
    aspect = rng.uniform(0.7, 1.0 / 0.7)
    angle = rng.uniform(0, np.pi)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    cy, cx = rng.uniform(0.4, 0.6, size=2) * size
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(angle), np.sin(angle)
    u = (c * dx + s * dy) / np.sqrt(aspect)
    v = (-s * dx + c * dy) * np.sqrt(aspect)
    rho = np.hypot(u, v)
    theta = np.arctan2(v, u)
    shape = 1.0 + sum(a * np.cos((k + 1) * theta + p) for k, (a, p) in enumerate(zip(amps, phases)))

    # bisection on the base radius to hit the target area on the pixel grid
    lo, hi = 0.0, float(size)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if (rho <= mid * shape).mean() < target:
            lo = mid
        else:
            hi = mid
    return (rho <= hi * shape).astype(np.float32)


def synth_sample(seed: int, size: int = 128, difficulty: float = 0.5, contrast: float = 0.3) -> Sample:
    """Procedural camouflage scene: textured blob on a texture of the same family.

    Inside the blob, the per-channel mean is offset from the background by
    ``contrast * (1 - difficulty)``. The texture frequencies also move closer
    together as ``difficulty`` approaches 1.
    """
    if size % 32:
        raise ValueError(f"size must be divisible by 32, got {size}")
    if not 0.0 <= difficulty <= 1.0:
        raise ValueError(f"difficulty must lie in [0, 1], got {difficulty}")
    rng = np.random.default_rng(seed)
    mask = blob_mask(rng, size)
    inside = mask > 0

    bg_cutoff = rng.uniform(0.04, 0.12)
    fg_cutoff = bg_cutoff * (1.0 + (1.0 - difficulty) * rng.uniform(0.8, 1.5))
    bg_means = rng.uniform(0.45, 0.55, size=3)
    background = _texture(rng, size, bg_cutoff, bg_means, 0.15)
    foreground = _texture(rng, size, fg_cutoff, bg_means, 0.15)

    # pin the per-channel mean offset exactly, pushing away from the nearer bound
    sign = -1.0 if bg_means.mean() > 0.5 else 1.0
    shift = sign * contrast * (1.0 - difficulty)
    for ch in range(3):
        foreground[ch] += background[ch][~inside].mean() - foreground[ch][inside].mean() + shift

    image = np.where(inside[None], foreground, background)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return Sample(f"synth_{seed:06d}", image, mask, derive_edge_gt(mask).astype(np.float32))


def synth_samples(n: int, size: int, difficulty: float, seed: int = 0) -> list[Sample]:
    ss = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(n)]
    return [synth_sample(s, size, difficulty) for s in seeds]


def save_sample(sample: Sample, root, with_edge: bool = True) -> None:
    root = Path(root)
    for sub in ("Imgs", "GT") + (("Edge",) if with_edge else ()):
        (root / sub).mkdir(parents=True, exist_ok=True)
    img = np.round(sample.image.transpose(1, 2, 0) * 255).astype(np.uint8)
    Image.fromarray(img).save(root / "Imgs" / f"{sample.id}.png")
    Image.fromarray((sample.mask * 255).astype(np.uint8)).save(root / "GT" / f"{sample.id}.png")
    if with_edge:
        Image.fromarray((sample.edge * 255).astype(np.uint8)).save(root / "Edge" / f"{sample.id}.png")


def is_validation(sample_id: str, fraction: float = 0.1) -> bool:
    """Deterministic hash split: roughly ``fraction`` of ids land in validation."""
    h = int.from_bytes(hashlib.md5(sample_id.encode()).digest()[:8], "big")
    return (h % 10_000) < fraction * 10_000


# --- torch side ------------------------------------------------------------


def hflip(sample: Sample) -> Sample:
    return Sample(
        sample.id,
        np.ascontiguousarray(sample.image[:, :, ::-1]),
        np.ascontiguousarray(sample.mask[:, ::-1]),
        np.ascontiguousarray(sample.edge[:, ::-1]),
    )


def to_tensors(sample: Sample, input_size: int | None = None):
    """Image resized bilinearly to ``input_size``; mask/edge resized and re-binarized."""
    image = torch.from_numpy(np.ascontiguousarray(sample.image, dtype=np.float32))
    mask = torch.from_numpy(np.ascontiguousarray(sample.mask, dtype=np.float32))[None]
    edge = torch.from_numpy(np.ascontiguousarray(sample.edge, dtype=np.float32))[None]
    if input_size is not None and tuple(image.shape[-2:]) != (input_size, input_size):
        size = (input_size, input_size)
        image = F.interpolate(image[None], size=size, mode="bilinear", align_corners=False)[0]
        mask = (F.interpolate(mask[None], size=size, mode="bilinear", align_corners=False)[0] >= 0.5).float()
        edge = (F.interpolate(edge[None], size=size, mode="bilinear", align_corners=False)[0] >= 0.5).float()
    return image, mask, edge


class SampleDataset(Dataset):
    """Wraps an in-memory list of samples or a manifest.

    With ``augment=True`` each item is horizontally flipped with probability
    0.5, decided by a hash of ``(seed, epoch, index)`` so that runs repeat.
    """

    def __init__(self, source, input_size: int | None = None, augment: bool = False, seed: int = 0):
        self.source = source
        self.input_size = input_size
        self.augment = augment
        self.seed = seed
        self.epoch = 0

    def __len__(self):
        return len(self.source)

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def get_sample(self, index) -> Sample:
        if isinstance(self.source, DatasetManifest):
            return load_sample(*self.source.items[index])
        return self.source[index]

    def __getitem__(self, index):
        sample = self.get_sample(index)
        if self.augment:
            rng = np.random.default_rng((self.seed, self.epoch, index))
            if rng.random() < 0.5:
                sample = hflip(sample)
        image, mask, edge = to_tensors(sample, self.input_size)
        return image, mask, edge, index
