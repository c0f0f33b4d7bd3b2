"""Exact 8x8 block DCT engine and channel-masked reconstruction.

The transform is the orthonormal (unitary) type-II DCT applied independently
to non-overlapping 8x8 blocks, so it is exactly invertible and satisfies
Parseval's identity.  Images are real tensors shaped (..., c, h, w); the
frequency representation is shaped (..., c, 64, h/8, w/8) where band
b = 8*u + v holds the (u, v) coefficient of every block.

All functions here are pure and dtype-preserving; they accept any float
dtype and arbitrary leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple

import torch

BLOCK = 8
N_BANDS = BLOCK * BLOCK


@lru_cache(maxsize=None)
def _dct_matrix_f64() -> torch.Tensor:
    """Orthonormal DCT-II matrix D with D[u, i] = a(u) cos(pi (2i+1) u / 16)."""
    u = torch.arange(BLOCK, dtype=torch.float64).unsqueeze(1)
    i = torch.arange(BLOCK, dtype=torch.float64).unsqueeze(0)
    mat = torch.cos(math.pi * (2.0 * i + 1.0) * u / (2.0 * BLOCK))
    mat[0, :] *= math.sqrt(1.0 / BLOCK)
    mat[1:, :] *= math.sqrt(2.0 / BLOCK)
    return mat


def dct_matrix(dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """The 8x8 orthonormal DCT-II matrix in the requested dtype."""
    return _dct_matrix_f64().to(dtype)


def band_to_uv(band: int) -> Tuple[int, int]:
    """Map flat band index b in [0, 63] to its 2-D frequency (u, v)."""
    if not 0 <= band < N_BANDS:
        raise ValueError(f"band index {band} outside [0, {N_BANDS - 1}]")
    return band // BLOCK, band % BLOCK


def uv_to_band(u: int, v: int) -> int:
    """Map 2-D frequency (u, v) to the flat band index 8*u + v."""
    if not (0 <= u < BLOCK and 0 <= v < BLOCK):
        raise ValueError(f"frequency ({u}, {v}) outside the 8x8 grid")
    return BLOCK * u + v


def _zigzag_bands() -> Tuple[int, ...]:
    # Standard JPEG traversal: walk anti-diagonals u+v = s, alternating
    # direction (even s: u descending, odd s: u ascending).
    order = []
    for s in range(2 * BLOCK - 1):
        lo, hi = max(0, s - BLOCK + 1), min(s, BLOCK - 1)
        us = range(hi, lo - 1, -1) if s % 2 == 0 else range(lo, hi + 1)
        order.extend(uv_to_band(u, s - u) for u in us)
    return tuple(order)


#: Band indices in zigzag (low-to-high perceptual frequency) order.
ZIGZAG_ORDER: Tuple[int, ...] = _zigzag_bands()

#: zigzag_rank[b] = position of band b in the zigzag traversal.
ZIGZAG_RANK: Tuple[int, ...] = tuple(
    r for r, _ in sorted(enumerate(ZIGZAG_ORDER), key=lambda t: t[1])
)


@dataclass(frozen=True)
class ChannelSet:
    """An ordered set of distinct frequency band indices.

    Indices are stored in canonical zigzag order regardless of the order
    they were supplied in.
    """

    indices: Tuple[int, ...] = field(default=())

    def __init__(self, indices: Iterable[int]):
        idx = [int(i) for i in indices]
        for i in idx:
            if not 0 <= i < N_BANDS:
                raise ValueError(f"band index {i} outside [0, {N_BANDS - 1}]")
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate band indices in channel set")
        object.__setattr__(
            self, "indices", tuple(sorted(idx, key=lambda b: ZIGZAG_RANK[b]))
        )

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, band: int) -> bool:
        return band in self.indices

    def union(self, other: "ChannelSet") -> "ChannelSet":
        return ChannelSet(set(self.indices) | set(other.indices))

    def isdisjoint(self, other: "ChannelSet") -> bool:
        return set(self.indices).isdisjoint(other.indices)

    @classmethod
    def all_bands(cls) -> "ChannelSet":
        return cls(range(N_BANDS))


def _check_spatial(image: torch.Tensor) -> None:
    if image.ndim < 2:
        raise ValueError("image must have at least 2 dimensions (h, w)")
    h, w = image.shape[-2], image.shape[-1]
    if h % BLOCK or w % BLOCK:
        raise ValueError(
            f"spatial dims ({h}, {w}) not divisible by {BLOCK}; pad first "
            "(see pad_to_blocks)"
        )


def pad_to_blocks(image: torch.Tensor) -> Tuple[torch.Tensor, Tuple[int, int]]:
    """Reflect-pad spatial dims up to the next multiple of 8.

    Returns the padded image and the original (h, w) so callers can crop
    reconstructions back with ``crop_to``.
    """
    h, w = image.shape[-2], image.shape[-1]
    ph = (-h) % BLOCK
    pw = (-w) % BLOCK
    if ph == 0 and pw == 0:
        return image, (h, w)
    flat = image.reshape(-1, 1, h, w)
    padded = torch.nn.functional.pad(flat, (0, pw, 0, ph), mode="reflect")
    return padded.reshape(*image.shape[:-2], h + ph, w + pw), (h, w)


def crop_to(image: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Crop spatial dims back to an original (h, w)."""
    h, w = size
    return image[..., :h, :w]


def block_dct(image: torch.Tensor) -> torch.Tensor:
    """Orthonormal 8x8 block DCT.

    Input (..., h, w) with h, w divisible by 8; output (..., 64, h/8, w/8)
    where band 8*u + v of block (i, j) is the (u, v) DCT coefficient of
    that block.
    """
    _check_spatial(image)
    h, w = image.shape[-2], image.shape[-1]
    nb_h, nb_w = h // BLOCK, w // BLOCK
    lead = image.shape[:-2]
    mat = dct_matrix(image.dtype).to(image.device)
    blocks = image.reshape(*lead, nb_h, BLOCK, nb_w, BLOCK)
    coeffs = torch.einsum("ui,...aibj,vj->...uvab", mat, blocks, mat)
    return coeffs.reshape(*lead, N_BANDS, nb_h, nb_w)


def block_idct(freq: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`block_dct`.

    Input (..., 64, h/8, w/8); output (..., h, w).  No value clamping is
    applied here; callers clamp only when handing an image to an encoder.
    """
    if freq.ndim < 3 or freq.shape[-3] != N_BANDS:
        raise ValueError(
            f"frequency tensor must have {N_BANDS} bands on axis -3, "
            f"got shape {tuple(freq.shape)}"
        )
    nb_h, nb_w = freq.shape[-2], freq.shape[-1]
    lead = freq.shape[:-3]
    mat = dct_matrix(freq.dtype).to(freq.device)
    coeffs = freq.reshape(*lead, BLOCK, BLOCK, nb_h, nb_w)
    blocks = torch.einsum("ui,...uvab,vj->...aibj", mat, coeffs, mat)
    return blocks.reshape(*lead, nb_h * BLOCK, nb_w * BLOCK)


def band_mask(
    channels: ChannelSet,
    weights: Optional[torch.Tensor] = None,
    dtype: torch.dtype = torch.float64,
    device: Optional[torch.device] = None,
) -> torch.Tensor:
    """A 64-vector that is `weights` on the kept bands and zero elsewhere."""
    if len(channels) == 0:
        raise ValueError("empty channel set: a reconstruction must keep at least one band")
    mask = torch.zeros(N_BANDS, dtype=dtype, device=device)
    idx = torch.tensor(channels.indices, dtype=torch.long, device=device)
    if weights is None:
        mask[idx] = 1.0
    else:
        weights = torch.as_tensor(weights, dtype=dtype, device=device)
        if weights.shape != (N_BANDS,):
            raise ValueError(f"weights must be a 64-vector, got {tuple(weights.shape)}")
        mask[idx] = weights[idx]
    return mask


def reconstruct_from_channels(
    freq: torch.Tensor,
    channels: ChannelSet,
    weights: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Inverse transform keeping only `channels`, optionally band-weighted.

    Bands outside `channels` are zeroed; kept bands are multiplied by the
    matching entry of `weights` when given.  Output keeps full dynamic
    range (no clamping).
    """
    mask = band_mask(channels, weights, dtype=freq.dtype, device=freq.device)
    shape = (N_BANDS,) + (1,) * 2
    return block_idct(freq * mask.reshape(shape))


def band_energy(freq: torch.Tensor) -> torch.Tensor:
    """Total squared-coefficient energy per band, summed over everything else.

    Output shape (64,) for a single frequency tensor, (B, 64) for a batch.
    """
    if freq.ndim < 4 or freq.shape[-3] != N_BANDS:
        raise ValueError(f"expected (..., c, 64, h/8, w/8), got {tuple(freq.shape)}")
    sq = freq.square()
    # sum over color channels and block positions, keep leading batch dims
    return sq.sum(dim=(-2, -1)).sum(dim=-2)
