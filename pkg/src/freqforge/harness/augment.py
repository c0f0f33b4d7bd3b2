"""Training-time augmentations and the fixed-severity test degradations.

All ops consume and return (c, h, w) float arrays in [0, 1] and draw every
random number from the generator they are handed, so a fixed rng state
reproduces the output bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np
import torch
from scipy import ndimage

from ..freq import ZIGZAG_RANK, block_dct, block_idct

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def _resize(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).unsqueeze(0)
    out = torch.nn.functional.interpolate(
        t, size=size, mode="bilinear", align_corners=False
    )
    return out.squeeze(0).numpy()


def random_crop_resize(image: np.ndarray, rng: np.random.Generator,
                       scale: Tuple[float, float]) -> np.ndarray:
    c, h, w = image.shape
    s = rng.uniform(*scale)
    ch, cw = max(8, int(round(h * s))), max(8, int(round(w * s)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    crop = image[:, top : top + ch, left : left + cw]
    return _resize(crop, (h, w))


def contrast_jitter(image: np.ndarray, rng: np.random.Generator,
                    factor_range: Tuple[float, float]) -> np.ndarray:
    f = rng.uniform(*factor_range)
    m = image.mean()
    return np.clip((image - m) * f + m, 0.0, 1.0).astype(np.float32)


def gaussian_blur(image: np.ndarray, rng: np.random.Generator,
                  sigma_range: Tuple[float, float]) -> np.ndarray:
    sigma = rng.uniform(*sigma_range)
    return ndimage.gaussian_filter(image, sigma=(0, sigma, sigma)).astype(np.float32)


def rotate(image: np.ndarray, rng: np.random.Generator, max_degrees: float) -> np.ndarray:
    angle = rng.uniform(-max_degrees, max_degrees)
    out = ndimage.rotate(image, angle, axes=(-2, -1), reshape=False,
                         order=1, mode="reflect")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def grayscale(image: np.ndarray) -> np.ndarray:
    if image.shape[0] != 3:
        return image
    y = np.tensordot(GRAY_WEIGHTS, image, axes=(0, 0))
    return np.repeat(y[None], 3, axis=0).astype(np.float32)


def dct_quantize(image: np.ndarray, quality: float) -> np.ndarray:
    """JPEG-like degradation: quantize block-DCT coefficients.

    quality in (0, 1]; step sizes grow with the band's zigzag rank so high
    frequencies coarsen first.  Codec-free and bit-reproducible.
    """
    if not 0.0 < quality <= 1.0:
        raise ValueError(f"quality must lie in (0, 1], got {quality}")
    ranks = np.asarray(ZIGZAG_RANK, dtype=np.float64)
    steps = (1.0 - quality) * 0.5 * (1.0 + ranks / 16.0) + 1e-4
    coeffs = block_dct(torch.from_numpy(np.asarray(image, dtype=np.float64)))
    steps_t = torch.from_numpy(steps).reshape(1, -1, 1, 1)
    quantized = torch.round(coeffs / steps_t) * steps_t
    out = block_idct(quantized).clamp(0.0, 1.0)
    return out.numpy().astype(np.float32)


def gaussian_noise(image: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    noisy = image + sigma * rng.normal(size=image.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


def iso_noise(image: np.ndarray, rng: np.random.Generator,
              shot: float, read: float) -> np.ndarray:
    """Poisson-Gaussian sensor noise: variance shot * signal + read^2."""
    signal_sd = np.sqrt(np.clip(image, 0.0, 1.0) * shot)
    noisy = image + signal_sd * rng.normal(size=image.shape) \
        + read * rng.normal(size=image.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


@dataclass(frozen=True)
class AugmentPolicy:
    """Per-op application probabilities and strength ranges."""

    p_crop: float = 0.0
    crop_scale: Tuple[float, float] = (0.8, 1.0)
    p_contrast: float = 0.0
    contrast_range: Tuple[float, float] = (0.7, 1.3)
    p_blur: float = 0.0
    blur_sigma: Tuple[float, float] = (0.3, 1.0)
    p_rotate: float = 0.0
    max_degrees: float = 15.0
    p_gray: float = 0.0
    p_compress: float = 0.0
    compress_quality: Tuple[float, float] = (0.6, 0.95)
    p_gauss_noise: float = 0.0
    gauss_sigma: Tuple[float, float] = (0.01, 0.04)
    p_iso_noise: float = 0.0
    iso_shot: Tuple[float, float] = (0.002, 0.008)
    iso_read: Tuple[float, float] = (0.005, 0.02)

    @classmethod
    def none(cls) -> "AugmentPolicy":
        return cls()

    @classmethod
    def standard(cls) -> "AugmentPolicy":
        return cls(p_crop=0.5, p_contrast=0.5, p_blur=0.3, p_rotate=0.3, p_gray=0.1)

    @classmethod
    def robust(cls) -> "AugmentPolicy":
        return replace(cls.standard(), p_compress=0.35, p_gauss_noise=0.35, p_iso_noise=0.35)

    @classmethod
    def named(cls, name: str) -> "AugmentPolicy":
        try:
            return {"none": cls.none, "standard": cls.standard, "robust": cls.robust}[name]()
        except KeyError:
            raise ValueError(f"unknown augment policy {name!r}") from None


def augment(image: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply the sampled subset of ops in a fixed order."""
    out = np.asarray(image, dtype=np.float32)
    if rng.uniform() < policy.p_crop:
        out = random_crop_resize(out, rng, policy.crop_scale)
    if rng.uniform() < policy.p_contrast:
        out = contrast_jitter(out, rng, policy.contrast_range)
    if rng.uniform() < policy.p_blur:
        out = gaussian_blur(out, rng, policy.blur_sigma)
    if rng.uniform() < policy.p_rotate:
        out = rotate(out, rng, policy.max_degrees)
    if rng.uniform() < policy.p_gray:
        out = grayscale(out)
    if rng.uniform() < policy.p_compress:
        out = dct_quantize(out, rng.uniform(*policy.compress_quality))
    if rng.uniform() < policy.p_gauss_noise:
        out = gaussian_noise(out, rng, rng.uniform(*policy.gauss_sigma))
    if rng.uniform() < policy.p_iso_noise:
        out = iso_noise(out, rng, rng.uniform(*policy.iso_shot), rng.uniform(*policy.iso_read))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


#: Fixed severities for the robustness evaluation rows.
DEGRADATIONS: Dict[str, Dict[str, float]] = {
    "compression": {"quality": 0.8},
    "gauss_noise": {"sigma": 0.025},
    "iso_noise": {"shot": 0.004, "read": 0.012},
}

DEGRADATION_KINDS = ("none",) + tuple(DEGRADATIONS)


def apply_degradation(image: np.ndarray, kind: str, rng: np.random.Generator) -> np.ndarray:
    """One fixed-severity degradation; `none` passes through untouched."""
    if kind == "none":
        return np.asarray(image, dtype=np.float32)
    if kind == "compression":
        return dct_quantize(image, DEGRADATIONS[kind]["quality"])
    if kind == "gauss_noise":
        return gaussian_noise(image, rng, DEGRADATIONS[kind]["sigma"])
    if kind == "iso_noise":
        p = DEGRADATIONS[kind]
        return iso_noise(image, rng, p["shot"], p["read"])
    raise ValueError(f"unknown degradation {kind!r}")
