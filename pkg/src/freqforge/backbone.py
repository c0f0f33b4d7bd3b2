"""Hierarchical convolutional encoders producing stage features x0..x6.

Two profiles ship: ``tiny`` (fixed channel plan, for desk-scale training
and all property tests) and ``full`` (a deep stand-in sized for 299x299
inputs).  Each profile has 7 stages; stages 0-4 downsample by 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
from torch import nn

TINY_CHANNELS: Tuple[int, ...] = (8, 16, 32, 64, 64, 128, 128)
FULL_CHANNELS: Tuple[int, ...] = (32, 64, 128, 256, 728, 1024, 2048)
STAGE_STRIDES: Tuple[int, ...] = (2, 2, 2, 2, 2, 1, 1)

N_STAGES = 7
MIN_INPUT = 32
FULL_INPUT = 299


@dataclass(frozen=True)
class BackboneConfig:
    profile: str = "tiny"
    share_frequency_weights: bool = False

    def __post_init__(self):
        if self.profile not in ("tiny", "full"):
            raise ValueError(f"unknown backbone profile {self.profile!r}")

    @property
    def channels(self) -> Tuple[int, ...]:
        return TINY_CHANNELS if self.profile == "tiny" else FULL_CHANNELS


class Encoder(nn.Module):
    """Seven conv-bn-relu stages; returns the list [x0, ..., x6]."""

    def __init__(self, config: BackboneConfig, in_channels: int = 3):
        super().__init__()
        self.config = config
        self.stages = nn.ModuleList()
        prev = in_channels
        for ch, stride in zip(config.channels, STAGE_STRIDES):
            self.stages.append(
                nn.Sequential(
                    nn.Conv2d(prev, ch, kernel_size=3, stride=stride, padding=1, bias=False),
                    nn.BatchNorm2d(ch),
                    nn.ReLU(inplace=True),
                )
            )
            prev = ch

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        h, w = x.shape[-2], x.shape[-1]
        if min(h, w) < MIN_INPUT:
            raise ValueError(f"input spatial size {h}x{w} below minimum {MIN_INPUT}")
        if self.config.profile == "full" and (h, w) != (FULL_INPUT, FULL_INPUT):
            raise ValueError(f"full profile expects {FULL_INPUT}x{FULL_INPUT} input, got {h}x{w}")
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def encode(image: torch.Tensor, encoder: Encoder) -> List[torch.Tensor]:
    """Stage features for one (c, h, w) image or a (B, c, h, w) batch."""
    single = image.ndim == 3
    batch = image.unsqueeze(0) if single else image
    feats = encoder(batch)
    return [f.squeeze(0) for f in feats] if single else feats


def init_params(encoder: Encoder, seed: int) -> Encoder:
    """Reproducible fan-in-scaled uniform init, keyed by seed.

    Conv weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    batch-norm scales start at 1 and shifts at 0.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for mod in encoder.modules():
            if isinstance(mod, nn.Conv2d):
                fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
                bound = 1.0 / math.sqrt(fan_in)
                mod.weight.uniform_(-bound, bound, generator=gen)
                if mod.bias is not None:
                    mod.bias.uniform_(-bound, bound, generator=gen)
            elif isinstance(mod, nn.BatchNorm2d):
                mod.weight.fill_(1.0)
                mod.bias.zero_()
                mod.reset_running_stats()
    return encoder


def fan_in_bound(mod: nn.Conv2d) -> float:
    """The init bound 1/sqrt(fan_in) for a conv layer."""
    fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
    return 1.0 / math.sqrt(fan_in)
