"""Gradient-weighted activation heatmaps per branch."""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch
from torch.nn import functional as F

from ..network import TripleBranchNetwork

BRANCHES = ("rgb", "primary", "secondary")


def attention_heatmap(
    model: TripleBranchNetwork,
    image: np.ndarray,
    branch: str,
    target_class: Optional[int] = None,
) -> np.ndarray:
    """Gradient-weighted activation map of a branch's last stage.

    The map is computed for `target_class` (default: the predicted class),
    upsampled bilinearly to the input size and min-max normalised into
    [0, 1].  Returns an (h, w) float array.
    """
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    model.eval()
    batch = torch.from_numpy(np.asarray(image, dtype=np.float32)).unsqueeze(0)
    batch.requires_grad_(False)
    out = model(batch)
    stages = {
        "rgb": out.rgb_stages,
        "primary": out.primary_stages,
        "secondary": out.secondary_stages,
    }[branch]
    if stages is None:
        raise ValueError(f"variant {model.config.variant!r} has no {branch!r} branch")
    act = stages[-1]
    cls = int(out.p_final[0].argmax()) if target_class is None else int(target_class)
    logit = out.logits[0, cls]
    grads = torch.autograd.grad(logit, act, retain_graph=False)[0]
    weights = grads.mean(dim=(-2, -1), keepdim=True)
    cam = torch.relu((weights * act).sum(dim=-3, keepdim=True))
    cam = F.interpolate(cam, size=batch.shape[-2:], mode="bilinear", align_corners=False)
    cam = cam[0, 0].detach()
    lo, hi = cam.min(), cam.max()
    cam = (cam - lo) / (hi - lo + 1e-8)
    return cam.numpy()


def heatmap_to_rgb(cam: np.ndarray) -> np.ndarray:
    """Simple blue-to-red colour ramp as a (3, h, w) float image."""
    c = np.clip(np.asarray(cam, dtype=np.float32), 0.0, 1.0)
    r = c
    g = 1.0 - np.abs(2.0 * c - 1.0)
    b = 1.0 - c
    return np.stack([r, g, b])
