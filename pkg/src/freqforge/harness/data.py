"""Synthetic forgery dataset: textured scenes with band-limited DCT artifacts.

"Real" images are smoothed random textures with a few geometric shapes.
"Fake" images come from the same generator plus extra coefficient energy
injected into a configurable set of frequency bands inside one random
block-aligned region.  Everything is keyed by (seed, index) so generation
is order-independent and byte-reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image as PILImage
from scipy import ndimage

from ..freq import BLOCK, N_BANDS, block_dct, block_idct

LABEL_REAL = 0
LABEL_FAKE = 1
SPLITS = ("train", "val", "test")

DEFAULT_ARTIFACT_BANDS = (3, 10, 11, 17, 18, 19, 24, 25)


@dataclass(frozen=True)
class ArtifactSpec:
    """Where and how strongly the fake class gets its frequency artifact."""

    bands: Tuple[int, ...] = DEFAULT_ARTIFACT_BANDS
    amplitude: float = 0.3
    min_extent: int = 24
    max_extent: int = 40
    fixed_region: Optional[Tuple[int, int, int, int]] = None  # (top, left, h, w) px

    def __post_init__(self):
        bands = tuple(int(b) for b in self.bands)
        for b in bands:
            if not 0 <= b < N_BANDS:
                raise ValueError(f"artifact band {b} outside [0, {N_BANDS - 1}]")
        if len(set(bands)) != len(bands):
            raise ValueError("duplicate artifact bands")
        if self.amplitude < 0:
            raise ValueError("artifact amplitude must be non-negative")
        if self.min_extent > self.max_extent or self.min_extent < BLOCK:
            raise ValueError("artifact extent range invalid")
        object.__setattr__(self, "bands", bands)

    def to_dict(self) -> Dict:
        return {
            "bands": list(self.bands),
            "amplitude": self.amplitude,
            "min_extent": self.min_extent,
            "max_extent": self.max_extent,
            "fixed_region": list(self.fixed_region) if self.fixed_region else None,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "ArtifactSpec":
        fixed = d.get("fixed_region")
        return cls(
            bands=tuple(d["bands"]),
            amplitude=d["amplitude"],
            min_extent=d["min_extent"],
            max_extent=d["max_extent"],
            fixed_region=tuple(fixed) if fixed else None,
        )


@dataclass(frozen=True)
class Record:
    path: str
    label: int
    split: str


@dataclass
class DatasetManifest:
    """Image records plus the generation seed; persisted as a TSV."""

    records: List[Record]
    seed: int
    root: Path = field(default_factory=Path)

    def save(self, path: Path) -> None:
        path = Path(path)
        lines = [f"{r.path}\t{r.label}\t{r.split}" for r in self.records]
        lines.append(f"# seed={self.seed}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.tsv"
        records: List[Record] = []
        seed = 0
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "seed=" in line:
                    seed = int(line.split("seed=", 1)[1])
                continue
            rel, label, split = line.split("\t")
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r} in manifest")
            records.append(Record(rel, int(label), split))
        manifest = cls(records=records, seed=seed, root=path.parent)
        for r in manifest.records:
            if not (manifest.root / r.path).exists():
                raise FileNotFoundError(f"manifest references missing file {r.path}")
        return manifest

    def split_records(self, split: str) -> List[Record]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]


def save_image_png(path: Path, image: np.ndarray) -> None:
    """Write a (3, h, w) or (h, w) float image in [0, 1] as 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = np.moveaxis(arr, 0, -1)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(path, format="PNG")


def load_image(path: Path) -> np.ndarray:
    """Read an image file as a (3, h, w) float32 array in [0, 1]."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.moveaxis(arr, -1, 0)


def _soft_shape_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    kind = rng.choice(["rect", "ellipse"])
    top = rng.integers(0, max(1, h - h // 4))
    left = rng.integers(0, max(1, w - w // 4))
    sh = int(rng.integers(h // 8, h // 2))
    sw = int(rng.integers(w // 8, w // 2))
    mask = np.zeros((h, w), dtype=np.float64)
    if kind == "rect":
        mask[top : min(h, top + sh), left : min(w, left + sw)] = 1.0
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        cy, cx = top + sh / 2.0, left + sw / 2.0
        mask[((yy - cy) / max(sh, 1) * 2) ** 2 + ((xx - cx) / max(sw, 1) * 2) ** 2 <= 1.0] = 1.0
    return ndimage.gaussian_filter(mask, sigma=1.0)


def make_base_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """One textured scene: smooth noise background plus a few soft shapes."""
    h = w = size
    base_color = rng.uniform(0.3, 0.7, size=(3, 1, 1))
    noise = rng.normal(size=(3, h, w))
    sigma = rng.uniform(3.0, 7.0)
    smooth = ndimage.gaussian_filter(noise, sigma=(0, sigma, sigma))
    smooth /= max(np.abs(smooth).max(), 1e-9)
    img = base_color + 0.18 * smooth
    for _ in range(int(rng.integers(2, 5))):
        mask = _soft_shape_mask(rng, h, w)
        color = rng.uniform(0.1, 0.9, size=(3, 1, 1))
        alpha = rng.uniform(0.3, 0.8)
        img = img * (1.0 - alpha * mask) + color * (alpha * mask)
    texture = rng.normal(size=(3, h, w))
    img += 0.02 * ndimage.gaussian_filter(texture, sigma=(0, 0.8, 0.8))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _pick_region(
    rng: np.random.Generator, size: int, spec: ArtifactSpec
) -> Tuple[int, int, int, int]:
    if spec.fixed_region is not None:
        return spec.fixed_region
    lo = max(1, min(spec.min_extent // BLOCK, size // BLOCK))
    hi = max(lo, min(size // BLOCK, spec.max_extent // BLOCK))
    bh = int(rng.integers(lo, hi + 1))
    bw = int(rng.integers(lo, hi + 1))
    btop = int(rng.integers(0, size // BLOCK - bh + 1))
    bleft = int(rng.integers(0, size // BLOCK - bw + 1))
    return btop * BLOCK, bleft * BLOCK, bh * BLOCK, bw * BLOCK


def inject_artifact(
    image: np.ndarray, rng: np.random.Generator, spec: ArtifactSpec
) -> Tuple[np.ndarray, Optional[Tuple[int, int, int, int]]]:
    """Add band-limited coefficient noise inside one region.

    Returns the modified image and the (top, left, h, w) pixel bounding
    box, or None when the spec carries no bands.
    """
    if not spec.bands:
        return image, None
    size = image.shape[-1]
    top, left, rh, rw = _pick_region(rng, size, spec)
    coeffs = block_dct(torch.from_numpy(np.asarray(image, dtype=np.float64)))
    b0, b1 = top // BLOCK, (top + rh) // BLOCK
    c0, c1 = left // BLOCK, (left + rw) // BLOCK
    noise = rng.normal(size=(len(spec.bands), b1 - b0, c1 - c0)) * spec.amplitude
    bands = torch.tensor(spec.bands, dtype=torch.long)
    patch = coeffs[:, bands, b0:b1, c0:c1]
    patch = patch + torch.from_numpy(noise)  # shared across color channels
    coeffs[:, bands, b0:b1, c0:c1] = patch
    out = block_idct(coeffs).clamp(0.0, 1.0).numpy().astype(np.float32)
    return out, (top, left, rh, rw)


def make_image(
    seed: int, label: int, index: int, size: int, spec: ArtifactSpec
) -> Tuple[np.ndarray, Optional[Tuple[int, int, int, int]]]:
    """Deterministically build sample `index` of class `label`."""
    rng = np.random.default_rng([seed, label, index])
    img = make_base_image(rng, size)
    if label == LABEL_FAKE:
        return inject_artifact(img, rng, spec)
    return img, None


def split_counts(n_per_class: int) -> Dict[str, int]:
    n_train = int(round(n_per_class * 0.7))
    n_val = int(round(n_per_class * 0.15))
    n_test = n_per_class - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"n_per_class={n_per_class} too small to fill all splits")
    return {"train": n_train, "val": n_val, "test": n_test}


def generate_synthetic_dataset(
    seed: int,
    n_per_class: int,
    spec: ArtifactSpec,
    out_dir: Path,
    image_size: int = 64,
) -> DatasetManifest:
    """Write images, manifest.tsv and meta.json under out_dir."""
    if n_per_class < 10:
        raise ValueError("n_per_class must be at least 10")
    if image_size % BLOCK:
        raise ValueError(f"image_size must be a multiple of {BLOCK}")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    counts = split_counts(n_per_class)
    boundaries = (counts["train"], counts["train"] + counts["val"])
    records: List[Record] = []
    meta_images: List[Dict] = []
    for label in (LABEL_REAL, LABEL_FAKE):
        for index in range(n_per_class):
            split = (
                "train" if index < boundaries[0]
                else "val" if index < boundaries[1]
                else "test"
            )
            img, bbox = make_image(seed, label, index, image_size, spec)
            name = f"{split}_{'fake' if label else 'real'}_{index:05d}.png"
            save_image_png(img_dir / name, img)
            rel = f"images/{name}"
            records.append(Record(rel, label, split))
            meta_images.append({"path": rel, "label": label, "split": split, "bbox": bbox})

    manifest = DatasetManifest(records=records, seed=seed, root=out_dir)
    manifest.save(out_dir / "manifest.tsv")
    meta = {
        "seed": seed,
        "n_per_class": n_per_class,
        "image_size": image_size,
        "artifact": spec.to_dict(),
        "images": meta_images,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return manifest


def load_split_arrays(
    manifest: DatasetManifest, split: str
) -> Tuple[np.ndarray, np.ndarray]:
    """All images and labels of one split as stacked float32/int64 arrays."""
    recs = manifest.split_records(split)
    if not recs:
        raise ValueError(f"split {split!r} is empty")
    images = np.stack([load_image(manifest.root / r.path) for r in recs])
    labels = np.asarray([r.label for r in recs], dtype=np.int64)
    return images, labels
