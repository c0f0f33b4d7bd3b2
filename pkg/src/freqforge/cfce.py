"""Cross frequency channel enhancement.

Parameter-free fusion of the primary and secondary frequency branch
features.  A cross-channel cosine map reweights each branch's channels by
the other's before a symmetric residual merge:

    merged = 0.5 * (f1 + softmaxrow(S) f2) + 0.5 * (f2 + softmaxrow(S^T) f1)

where S[i, j] is the cosine similarity between channel i of f1 and channel
j of f2 flattened over space.
"""

from __future__ import annotations

import torch

EPS = 1e-8


def _check_pair(f1: torch.Tensor, f2: torch.Tensor) -> None:
    if f1.shape != f2.shape:
        raise ValueError(f"branch features must match in shape, got {tuple(f1.shape)} vs {tuple(f2.shape)}")
    if f1.ndim not in (3, 4):
        raise ValueError("expected (C, H, W) or (B, C, H, W) features")


def cosine_map(f1: torch.Tensor, f2: torch.Tensor) -> torch.Tensor:
    """C x C cosine-similarity matrix between the channels of f1 and f2.

    Channels are flattened over the spatial dims; the denominator is
    eps-stabilised so an exactly-zero channel has cosine 0 against
    anything.  Batched inputs give a (B, C, C) stack.
    """
    _check_pair(f1, f2)
    single = f1.ndim == 3
    if single:
        f1, f2 = f1.unsqueeze(0), f2.unsqueeze(0)
    a = f1.flatten(2)
    b = f2.flatten(2)
    num = torch.bmm(a, b.transpose(1, 2))
    denom = a.norm(dim=2).unsqueeze(2) * b.norm(dim=2).unsqueeze(1) + EPS
    s = num / denom
    return s.squeeze(0) if single else s


def enhance(f1: torch.Tensor, f2: torch.Tensor) -> torch.Tensor:
    """Symmetric residual cosine-attention merge of two branch features."""
    _check_pair(f1, f2)
    single = f1.ndim == 3
    if single:
        f1, f2 = f1.unsqueeze(0), f2.unsqueeze(0)
    s = cosine_map(f1, f2)
    mix_12 = torch.softmax(s, dim=2)  # rows mix f2's channels
    mix_21 = torch.softmax(s.transpose(1, 2), dim=2)  # rows mix f1's channels
    f1_flat = f1.flatten(2)
    f2_flat = f2.flatten(2)
    cross_12 = torch.bmm(mix_12, f2_flat).reshape_as(f1)
    cross_21 = torch.bmm(mix_21, f1_flat).reshape_as(f2)
    merged = 0.5 * (f1 + cross_12) + 0.5 * (f2 + cross_21)
    return merged.squeeze(0) if single else merged
