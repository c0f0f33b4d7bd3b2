"""Global fusion module.

Concatenates the paired multi-scale stage features, reduces them with a
1x1 separable transform, fuses with the top-stage semantics into gamma,
compresses gamma to the global vector G, and hosts the classifier heads
emitting the prediction distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
from torch import nn
from torch.nn import functional as F

from . import miloss

N_CONCAT_STAGES = 6


def _resample(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    if x.shape[-2:] == size:
        return x
    single = x.ndim == 3
    if single:
        x = x.unsqueeze(0)
    out = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
    return out.squeeze(0) if single else out


def multiscale_concat(stages: Sequence[torch.Tensor]) -> torch.Tensor:
    """Resample stages x0..x5 to x5's spatial size and concat channels.

    Callers pass the per-stage channel-concatenation of the RGB and merged
    frequency features; this handles the cross-scale part.
    """
    if len(stages) != N_CONCAT_STAGES:
        raise ValueError(f"expected {N_CONCAT_STAGES} stage tensors, got {len(stages)}")
    size = stages[-1].shape[-2:]
    return torch.cat([_resample(s, size) for s in stages], dim=-3)


class SeparableReduce(nn.Module):
    """1x1 separable channel reduction: per-channel scale then pointwise mix."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.depthwise = nn.Conv2d(in_channels, in_channels, kernel_size=1,
                                   groups=in_channels, bias=False)
        self.pointwise = nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        single = x.ndim == 3
        if single:
            x = x.unsqueeze(0)
        out = self.pointwise(self.depthwise(x))
        return out.squeeze(0) if single else out

    def identity_init_(self) -> "SeparableReduce":
        if self.depthwise.in_channels != self.pointwise.out_channels:
            raise ValueError("identity init needs matching channel counts")
        with torch.no_grad():
            self.depthwise.weight.fill_(1.0)
            self.pointwise.weight.zero_()
            eye = torch.eye(self.pointwise.out_channels)
            self.pointwise.weight.copy_(eye.reshape(*eye.shape, 1, 1))
        return self


class LinearFuse(nn.Module):
    """gamma = W1 * reduced + W2 * x6 via two bias-free 1x1 projections."""

    def __init__(self, reduced_channels: int, x6_channels: int, out_channels: int):
        super().__init__()
        self.proj_reduced = nn.Conv2d(reduced_channels, out_channels, 1, bias=False)
        self.proj_x6 = nn.Conv2d(x6_channels, out_channels, 1, bias=False)

    def forward(self, reduced: torch.Tensor, x6: torch.Tensor) -> torch.Tensor:
        single = reduced.ndim == 3
        if single:
            reduced, x6 = reduced.unsqueeze(0), x6.unsqueeze(0)
        x6 = _resample(x6, reduced.shape[-2:])
        out = self.proj_reduced(reduced) + self.proj_x6(x6)
        return out.squeeze(0) if single else out


class Compress(nn.Module):
    """1x1 reduction C_gamma -> C_G followed by global average pooling."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        if out_channels >= in_channels:
            raise ValueError(
                f"compression must be real: C_G ({out_channels}) < C_gamma ({in_channels})"
            )
        self.reduce = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, gamma: torch.Tensor) -> torch.Tensor:
        single = gamma.ndim == 3
        if single:
            gamma = gamma.unsqueeze(0)
        g = self.reduce(gamma).mean(dim=(-2, -1))
        return g.squeeze(0) if single else g


@dataclass(frozen=True)
class Predictions:
    """All distributions emitted for one forward pass."""

    logits: torch.Tensor
    p_final: torch.Tensor
    p_f: torch.Tensor
    p_gamma: torch.Tensor
    p_g: torch.Tensor
    p_loo: Tuple[torch.Tensor, torch.Tensor]


class Heads(nn.Module):
    """Joint, gamma and G classifier heads.

    The joint head consumes the concatenated branch-global features and
    also provides the two leave-one-out distributions; the G head's
    output is the decision distribution.
    """

    def __init__(self, d_rgb: int, d_merged: int, c_gamma: int, c_g: int, n_classes: int = 2):
        super().__init__()
        self.split = (d_rgb, d_merged)
        self.joint = nn.Linear(d_rgb + d_merged, n_classes)
        self.gamma = nn.Linear(c_gamma, n_classes)
        self.g = nn.Linear(c_g, n_classes)

    def predict(
        self,
        joint_feature: torch.Tensor,
        gamma: torch.Tensor,
        g: torch.Tensor,
    ) -> Predictions:
        pooled_gamma = gamma.mean(dim=(-2, -1))
        g_logits = self.g(g)
        p_f = miloss.joint_distribution(joint_feature, self.joint)
        p_loo = tuple(
            miloss.leave_one_out_distribution(joint_feature, i, self.joint, self.split)
            for i in (1, 2)
        )
        return Predictions(
            logits=g_logits,
            p_final=torch.softmax(g_logits, dim=-1),
            p_f=p_f,
            p_gamma=torch.softmax(self.gamma(pooled_gamma), dim=-1),
            p_g=torch.softmax(g_logits, dim=-1),
            p_loo=p_loo,
        )


class GlobalFusion(nn.Module):
    """Multi-scale concat -> separable reduce -> linear fuse -> compress."""

    def __init__(
        self,
        stage_channels: Sequence[int],
        x6_channels: int,
        reduce_channels: int = 128,
        gamma_channels: int = 128,
        g_channels: int = 64,
    ):
        super().__init__()
        concat_channels = int(sum(stage_channels))
        self.reduce = SeparableReduce(concat_channels, reduce_channels)
        self.fuse = LinearFuse(reduce_channels, x6_channels, gamma_channels)
        self.compress = Compress(gamma_channels, g_channels)

    def forward(
        self, stages: Sequence[torch.Tensor], x6: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        concat = multiscale_concat(stages)
        gamma = self.fuse(self.reduce(concat), x6)
        return gamma, self.compress(gamma)
