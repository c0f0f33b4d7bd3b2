"""Dynamic frequency channel selection.

Ranks the 64 block-DCT bands with a lightweight attention vector, routes
the top-K bands to a primary reconstruction and ranks K+1..2K to a
secondary one.  Selection is hard; kept bands are multiplied by their
attention score so the attention parameters stay trainable
(straight-through routing).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch
from torch import nn

from .freq import (
    BLOCK,
    N_BANDS,
    ZIGZAG_RANK,
    ChannelSet,
    block_dct,
    block_idct,
)


class AttentionParams(nn.Module):
    """Parameters of the band-attention map.

    ``psi`` is two stacked 1x1 channel-mixing convolutions with a rectifier
    between, applied pointwise to the 8x8 aggregate map; ``alpha_rc`` is the
    scalar in [0, 1] scaling the row-column term before fusion.
    """

    def __init__(self, hidden: int = 16, alpha_rc: float = 0.5):
        super().__init__()
        if not 0.0 <= alpha_rc <= 1.0:
            raise ValueError(f"alpha_rc must lie in [0, 1], got {alpha_rc}")
        if hidden < 1:
            raise ValueError("psi hidden width must be positive")
        self.alpha_rc = float(alpha_rc)
        self.mix_in = nn.Conv2d(1, hidden, kernel_size=1)
        self.mix_out = nn.Conv2d(hidden, 1, kernel_size=1)

    def psi(self, x: torch.Tensor) -> torch.Tensor:
        """Pointwise refinement of an (..., 8, 8) map.

        Computation runs in the parameters' dtype; the result is cast back
        to the input dtype.
        """
        lead = x.shape[:-2]
        flat = x.reshape(-1, 1, BLOCK, BLOCK).to(self.mix_in.weight.dtype)
        out = self.mix_out(torch.relu(self.mix_in(flat)))
        return out.to(x.dtype).reshape(*lead, BLOCK, BLOCK)

    def zero_bias_(self) -> "AttentionParams":
        with torch.no_grad():
            self.mix_in.bias.zero_()
            self.mix_out.bias.zero_()
        return self

    @classmethod
    def identity(cls, alpha_rc: float = 0.5) -> "AttentionParams":
        """psi that passes non-negative inputs through unchanged."""
        params = cls(hidden=1, alpha_rc=alpha_rc)
        with torch.no_grad():
            params.mix_in.weight.fill_(1.0)
            params.mix_out.weight.fill_(1.0)
        return params.zero_bias_()


@dataclass(frozen=True)
class ChannelImportance:
    """Attention scores over the 64 bands plus the selected index sets."""

    scores: torch.Tensor  # (64,)
    primary: ChannelSet
    secondary: ChannelSet

    @property
    def map8x8(self) -> torch.Tensor:
        return self.scores.reshape(BLOCK, BLOCK)


def pooled_spectrum(freq: torch.Tensor) -> torch.Tensor:
    """Global average pooling of coefficient magnitudes per band.

    Input (..., c, 64, h/8, w/8); output (..., 64): the mean of
    ``|coeffs[c, b, :, :]|`` over color channels and block positions.
    """
    if freq.ndim < 4 or freq.shape[-3] != N_BANDS:
        raise ValueError(f"expected (..., c, 64, h/8, w/8), got {tuple(freq.shape)}")
    return freq.abs().mean(dim=(-2, -1)).mean(dim=-2)


def row_column_attention(pooled: torch.Tensor, params: AttentionParams) -> torch.Tensor:
    """Rank-1 row/column interaction map refined by psi.

    The (..., 8, 8) pooled map is collapsed to its row-sum vector r and
    column-sum vector c; the outer product r c^T (entry (u, v) equal to
    rowsum(u) * colsum(v)) is then passed through psi pointwise.
    """
    if pooled.shape[-2:] != (BLOCK, BLOCK):
        raise ValueError(f"pooled map must be (..., 8, 8), got {tuple(pooled.shape)}")
    row_sums = pooled.sum(dim=-1)
    col_sums = pooled.sum(dim=-2)
    outer = row_sums.unsqueeze(-1) * col_sums.unsqueeze(-2)
    return params.psi(outer)


def attention_scores(freq: torch.Tensor, params: AttentionParams) -> torch.Tensor:
    """Fused 64-band attention vector: pooled spectrum + alpha * A_rc."""
    pooled = pooled_spectrum(freq)
    lead = pooled.shape[:-1]
    pooled_map = pooled.reshape(*lead, BLOCK, BLOCK)
    fused = pooled_map + params.alpha_rc * row_column_attention(pooled_map, params)
    return fused.reshape(*lead, N_BANDS)


_ZIGZAG_RANK_T = torch.tensor(ZIGZAG_RANK, dtype=torch.float64)


def rank_bands(scores: torch.Tensor) -> torch.Tensor:
    """Band indices sorted by (score desc, zigzag rank asc).

    Works on (..., 64) score tensors; ranking never propagates gradients.
    """
    with torch.no_grad():
        s = scores.detach().to(torch.float64)
        # lexicographic: stable-sort by zigzag rank, then stable-sort by -score
        by_zigzag = torch.argsort(
            _ZIGZAG_RANK_T.to(s.device).expand_as(s), dim=-1, stable=True
        )
        s_z = torch.gather(s, -1, by_zigzag)
        by_score = torch.argsort(-s_z, dim=-1, stable=True)
        return torch.gather(by_zigzag, -1, by_score)


def select_channels(scores: torch.Tensor, k: int) -> Tuple[ChannelSet, ChannelSet]:
    """Primary (ranks 1..K) and secondary (ranks K+1..2K) band sets."""
    if scores.shape != (N_BANDS,):
        raise ValueError(f"scores must be a 64-vector, got {tuple(scores.shape)}")
    if k < 1 or 2 * k > N_BANDS:
        raise ValueError(f"need 1 <= K and 2K <= {N_BANDS}, got K={k}")
    order = rank_bands(scores).tolist()
    return ChannelSet(order[:k]), ChannelSet(order[k : 2 * k])


def fused_attention(
    freq: torch.Tensor, params: AttentionParams, k: int
) -> ChannelImportance:
    """Attention scores plus top-K / next-K selection for one image."""
    if freq.ndim != 4:
        raise ValueError("fused_attention expects a single (c, 64, h/8, w/8) tensor")
    scores = attention_scores(freq, params)
    primary, secondary = select_channels(scores, k)
    return ChannelImportance(scores=scores, primary=primary, secondary=secondary)


def selection_masks(scores: torch.Tensor, k: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Binary keep-masks for the primary and secondary sets, batched.

    Input (..., 64) scores; outputs two (..., 64) float masks.  The masks
    are constants (no gradient); multiply by the scores for the
    straight-through weighting.
    """
    if k < 1 or 2 * k > N_BANDS:
        raise ValueError(f"need 1 <= K and 2K <= {N_BANDS}, got K={k}")
    order = rank_bands(scores)
    primary = torch.zeros_like(scores).scatter(-1, order[..., :k], 1.0)
    secondary = torch.zeros_like(scores).scatter(-1, order[..., k : 2 * k], 1.0)
    return primary.detach(), secondary.detach()


def normalized_scores(scores: torch.Tensor) -> torch.Tensor:
    """Scores divided by their (detached) per-image max magnitude.

    Raw attention scores live on the coefficient-magnitude scale (the DC
    band of a mid-grey image pools near 4), so using them directly as band
    weights drives reconstructions deep into the encoder-boundary clamp.
    Dividing by the max keeps relative attention intact, bounds weights by
    1, and, because the divisor is detached, leaves a nonzero gradient on
    every band including the argmax.
    """
    peak = scores.detach().abs().max(dim=-1, keepdim=True).values.clamp_min(1e-12)
    return scores / peak


def weighted_reconstruction(
    freq: torch.Tensor, scores: torch.Tensor, keep: torch.Tensor
) -> torch.Tensor:
    """IDCT of the kept bands, each scaled by its attention score.

    ``freq`` is (..., c, 64, h/8, w/8); ``scores`` and ``keep`` are
    (..., 64) and broadcast over channels and block positions.  Gradient
    flows into ``scores`` for kept bands only.
    """
    w = (scores * keep).unsqueeze(-2).unsqueeze(-1).unsqueeze(-1)
    return block_idct(freq * w)


def make_branch_inputs(
    image: torch.Tensor,
    params: AttentionParams,
    k: int,
    apply_weights: bool = True,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """The three branch inputs: (rgb, primary_recon, secondary_recon).

    ``image`` is (c, h, w) or (B, c, h, w) with spatial dims divisible
    by 8.  The rgb output is the untouched input; the reconstructions
    keep only the selected bands, scaled by their max-normalised
    attention scores unless ``apply_weights`` is False.  Outputs are not
    clamped; the network clamps at the encoder boundary.
    """
    freq = block_dct(image)
    scores = attention_scores(freq, params)
    keep_p, keep_s = selection_masks(scores, k)
    weights = normalized_scores(scores) if apply_weights else torch.ones_like(scores)
    primary = weighted_reconstruction(freq, weights, keep_p)
    secondary = weighted_reconstruction(freq, weights, keep_s)
    return image, primary, secondary
