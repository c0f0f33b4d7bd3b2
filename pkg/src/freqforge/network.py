"""The composed detector: branch routing, encoders, fusion and heads.

Five build variants mirror the component study: an RGB-only baseline, a
single frequency branch, the naive triple-branch sum, triple branches
with cross-frequency enhancement, and the full network with global
fusion and the information losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch
from torch import nn

from . import cfce, dfcs, gfm
from .backbone import BackboneConfig, Encoder, init_params
from .freq import block_dct

VARIANTS = ("rgb", "frequency", "triple", "triple_cfce", "full")

VARIANT_LABELS = {
    "rgb": "RGB",
    "frequency": "Frequency Branch",
    "triple": "Triple Branches",
    "triple_cfce": "Triple Branches+CFCE",
    "full": "Triple Stream Network",
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "full"
    profile: str = "tiny"
    k: int = 8
    alpha_rc: float = 0.5
    psi_hidden: int = 16
    share_frequency_weights: bool = False
    reduce_channels: int = 128
    gamma_channels: int = 128
    g_channels: int = 64
    n_classes: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.k < 1 or 2 * self.k > 64:
            raise ValueError(f"need 1 <= K and 2K <= 64, got K={self.k}")

    @property
    def backbone(self) -> BackboneConfig:
        return BackboneConfig(self.profile, self.share_frequency_weights)


@dataclass
class NetworkOutput:
    """Everything one forward pass emits; optional fields depend on variant."""

    logits: torch.Tensor
    p_final: torch.Tensor
    p_f: Optional[torch.Tensor] = None
    p_loo: Optional[Tuple[torch.Tensor, torch.Tensor]] = None
    p_gamma: Optional[torch.Tensor] = None
    p_g: Optional[torch.Tensor] = None
    attention: Optional[torch.Tensor] = None
    rgb_stages: Optional[List[torch.Tensor]] = None
    primary_stages: Optional[List[torch.Tensor]] = None
    secondary_stages: Optional[List[torch.Tensor]] = None
    merged_stages: Optional[List[torch.Tensor]] = None


def _gap(x: torch.Tensor) -> torch.Tensor:
    return x.mean(dim=(-2, -1))


class TripleBranchNetwork(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        bb = config.backbone
        top = bb.channels[-1]
        v = config.variant

        self.needs_rgb = v in ("rgb", "triple", "triple_cfce", "full")
        self.needs_freq = v in ("frequency", "triple", "triple_cfce", "full")
        self.needs_secondary = v in ("triple", "triple_cfce", "full")
        self.uses_cfce = v in ("triple_cfce", "full")

        if self.needs_freq:
            self.attention = dfcs.AttentionParams(config.psi_hidden, config.alpha_rc)
        if self.needs_rgb:
            self.encoder_rgb = Encoder(bb)
        if self.needs_freq:
            self.encoder_primary = Encoder(bb)
            if self.needs_secondary:
                self.encoder_secondary = (
                    self.encoder_primary if bb.share_frequency_weights else Encoder(bb)
                )

        if v == "full":
            stage_channels = [2 * c for c in bb.channels[:6]]
            self.fusion = gfm.GlobalFusion(
                stage_channels,
                x6_channels=2 * top,
                reduce_channels=config.reduce_channels,
                gamma_channels=config.gamma_channels,
                g_channels=config.g_channels,
            )
            self.heads = gfm.Heads(
                top, top, config.gamma_channels, config.g_channels, config.n_classes
            )
        else:
            self.head = nn.Linear(top, config.n_classes)

    def branch_inputs(self, images: torch.Tensor) -> Tuple[torch.Tensor, ...]:
        """(rgb, primary, secondary, scores): clamped encoder inputs."""
        freq = block_dct(images)
        scores = dfcs.attention_scores(freq, self.attention)
        keep_p, keep_s = dfcs.selection_masks(scores, self.config.k)
        weights = dfcs.normalized_scores(scores)
        primary = dfcs.weighted_reconstruction(freq, weights, keep_p).clamp(0.0, 1.0)
        secondary = dfcs.weighted_reconstruction(freq, weights, keep_s).clamp(0.0, 1.0)
        return images, primary, secondary, scores

    def forward(self, images: torch.Tensor) -> NetworkOutput:
        if images.ndim != 4:
            raise ValueError(f"expected a (B, c, h, w) batch, got {tuple(images.shape)}")
        v = self.config.variant
        out = NetworkOutput(logits=None, p_final=None)

        if self.needs_freq:
            _, primary_img, secondary_img, scores = self.branch_inputs(images)
            out.attention = scores
            out.primary_stages = self.encoder_primary(primary_img)
            if self.needs_secondary:
                out.secondary_stages = self.encoder_secondary(secondary_img)
        if self.needs_rgb:
            out.rgb_stages = self.encoder_rgb(images)

        if v == "rgb":
            feature = _gap(out.rgb_stages[-1])
            out.logits = self.head(feature)
        elif v == "frequency":
            feature = _gap(out.primary_stages[-1])
            out.logits = self.head(feature)
        elif v == "triple":
            feature = (
                _gap(out.rgb_stages[-1])
                + _gap(out.primary_stages[-1])
                + _gap(out.secondary_stages[-1])
            )
            out.logits = self.head(feature)
        elif v == "triple_cfce":
            out.merged_stages = [
                cfce.enhance(a, b)
                for a, b in zip(out.primary_stages, out.secondary_stages)
            ]
            feature = _gap(out.rgb_stages[-1]) + _gap(out.merged_stages[-1])
            out.logits = self.head(feature)
        else:  # full
            out.merged_stages = [
                cfce.enhance(a, b)
                for a, b in zip(out.primary_stages, out.secondary_stages)
            ]
            paired = [
                torch.cat([r, m], dim=-3)
                for r, m in zip(out.rgb_stages[:6], out.merged_stages[:6])
            ]
            x6 = torch.cat([out.rgb_stages[-1], out.merged_stages[-1]], dim=-3)
            gamma, g = self.fusion(paired, x6)
            joint = torch.cat(
                [_gap(out.rgb_stages[-1]), _gap(out.merged_stages[-1])], dim=-1
            )
            preds = self.heads.predict(joint, gamma, g)
            out.logits = preds.logits
            out.p_f = preds.p_f
            out.p_loo = preds.p_loo
            out.p_gamma = preds.p_gamma
            out.p_g = preds.p_g

        out.p_final = torch.softmax(out.logits, dim=-1)
        return out


def build_network(config: ModelConfig, seed: int) -> TripleBranchNetwork:
    """Construct and reproducibly initialise a network for a seed."""
    torch.manual_seed(seed)
    net = TripleBranchNetwork(config)
    offset = 1
    for name in ("encoder_rgb", "encoder_primary", "encoder_secondary"):
        enc = getattr(net, name, None)
        if isinstance(enc, Encoder):
            init_params(enc, seed + offset)
        offset += 1
    return net
