"""Information-theoretic losses and exact discrete-MI oracles.

The trainable pieces are the KL divergence, the exponential decoupling
loss, the global-information-alignment loss, and the combined objective
(fixed or uncertainty-weighted).  The discrete side computes plug-in
mutual information on small exhaustive joint tables and verifies the
decomposition and chain-rule identities the loss design rests on.

Natural logarithms everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

Q_FLOOR = 1e-8
SIMPLEX_TOL = 1e-6

Scalar = Union[float, torch.Tensor]


def _as_prob_batch(p: torch.Tensor, name: str) -> torch.Tensor:
    p = torch.as_tensor(p)
    if p.ndim == 1:
        p = p.unsqueeze(0)
    if p.ndim != 2:
        raise ValueError(f"{name} must be a distribution or batch of them, got shape {tuple(p.shape)}")
    if not torch.isfinite(p).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (p < -SIMPLEX_TOL).any():
        raise ValueError(f"{name} has negative entries")
    sums = p.sum(dim=-1)
    if (sums - 1.0).abs().max() > SIMPLEX_TOL:
        raise ValueError(f"{name} rows must sum to 1 within {SIMPLEX_TOL}")
    return p


def _smooth_q(q: torch.Tensor) -> torch.Tensor:
    # floor q entries and renormalise so log q is finite without moving
    # gradients materially
    q = q.clamp_min(Q_FLOOR)
    return q / q.sum(dim=-1, keepdim=True)


def kl_divergence(p: Scalar, q: Scalar) -> torch.Tensor:
    """D_KL[p || q] per row, natural log; zero p entries contribute zero.

    Accepts single distributions or batches; returns a scalar or a
    per-row vector accordingly.
    """
    pt = _as_prob_batch(p if torch.is_tensor(p) else torch.as_tensor(np.asarray(p, dtype=np.float64)), "p")
    qt = _as_prob_batch(q if torch.is_tensor(q) else torch.as_tensor(np.asarray(q, dtype=np.float64)).to(pt.dtype), "q")
    if pt.shape != qt.shape:
        raise ValueError(f"p and q must have matching shapes, got {tuple(pt.shape)} vs {tuple(qt.shape)}")
    qs = _smooth_q(qt)
    pc = pt.clamp_min(0.0)
    kl = (torch.xlogy(pc, pc) - torch.xlogy(pc, qs)).sum(dim=-1)
    out = kl.clamp_min(0.0) if not kl.requires_grad else kl
    return out.squeeze(0) if out.shape == (1,) else out


def decoupling_loss(p_f: torch.Tensor, p_f_minus: Sequence[torch.Tensor]) -> torch.Tensor:
    """exp(-sum_i mean_batch KL[P_F || P_{F minus f_ci}]); value in (0, 1]."""
    if len(p_f_minus) != 2:
        raise ValueError(f"expected 2 leave-one-out batches, got {len(p_f_minus)}")
    pf = _as_prob_batch(p_f, "p_f")
    total = pf.new_zeros(())
    for i, q in enumerate(p_f_minus):
        qb = _as_prob_batch(q, f"p_f_minus[{i}]")
        if qb.shape != pf.shape:
            raise ValueError("leave-one-out batch shape must match p_f")
        kl = kl_divergence(pf, qb)
        total = total + (kl.mean() if kl.ndim else kl)
    return torch.exp(-total)


def gia_loss(p_gamma: torch.Tensor, p_g: torch.Tensor) -> torch.Tensor:
    """Mean-over-batch KL[P_gamma || P_G]; >= 0, zero iff the batches match."""
    pg = _as_prob_batch(p_gamma, "p_gamma")
    qg = _as_prob_batch(p_g, "p_g")
    if pg.shape != qg.shape:
        raise ValueError("p_gamma and p_g batches must match in shape")
    kl = kl_divergence(pg, qg)
    return kl.mean() if kl.ndim else kl


@dataclass
class LossBundle:
    """Per-step loss components with the effective term weights."""

    l_ce: Scalar
    l_d: Optional[Scalar]
    l_gia: Optional[Scalar]
    l_total: Scalar
    alpha: float
    beta: float
    log_variances: Optional[Tuple[float, ...]] = None

    def as_floats(self) -> "LossBundle":
        def f(x):
            if x is None:
                return None
            return float(x.detach()) if torch.is_tensor(x) else float(x)

        return LossBundle(
            l_ce=f(self.l_ce),
            l_d=f(self.l_d),
            l_gia=f(self.l_gia),
            l_total=f(self.l_total),
            alpha=float(self.alpha),
            beta=float(self.beta),
            log_variances=self.log_variances,
        )

    def to_dict(self) -> Dict[str, Optional[float]]:
        b = self.as_floats()
        d = {
            "l_ce": b.l_ce,
            "l_d": b.l_d,
            "l_gia": b.l_gia,
            "l_total": b.l_total,
            "alpha": b.alpha,
            "beta": b.beta,
        }
        if b.log_variances is not None:
            d["log_variances"] = list(b.log_variances)
        return d


@dataclass(frozen=True)
class FixedWeights:
    """Static weights for the combined objective."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


class UncertaintyWeights(nn.Module):
    """Learned per-term variances: L = sum_k L_k / (2 s_k^2) + log(1 + s_k^2).

    One variance per active term, ordered (ce, d, gia); sigma starts at 1.
    """

    TERMS = ("ce", "d", "gia")

    def __init__(self):
        super().__init__()
        self.log_sigma_sq = nn.Parameter(torch.zeros(3))

    def sigmas_sq(self) -> torch.Tensor:
        return torch.exp(self.log_sigma_sq)

    def combine(self, terms: Dict[str, Scalar]) -> Tuple[torch.Tensor, float, float]:
        ss = self.sigmas_sq()
        total = None
        for idx, name in enumerate(self.TERMS):
            val = terms.get(name)
            if val is None:
                continue
            t = val if torch.is_tensor(val) else torch.as_tensor(float(val), dtype=ss.dtype)
            part = t / (2.0 * ss[idx]) + torch.log1p(ss[idx])
            total = part if total is None else total + part
        if total is None:
            raise ValueError("no loss terms to combine")
        with torch.no_grad():
            w = 0.5 / ss
            alpha = float(w[1] / w[0])
            beta = float(w[2] / w[0])
        return total, alpha, beta


Weighting = Union[FixedWeights, UncertaintyWeights]


def total_loss(
    l_ce: Scalar,
    l_d: Optional[Scalar],
    l_gia: Optional[Scalar],
    weighting: Weighting,
) -> LossBundle:
    """Combine the loss terms under fixed or uncertainty weighting.

    Absent terms (None) are skipped; in fixed mode the total is
    L_CE + alpha * L_D + beta * L_GIA over the present terms.
    """
    def scal(v):
        return v if torch.is_tensor(v) else torch.as_tensor(float(v), dtype=torch.float64)

    for name, v in (("l_ce", l_ce), ("l_d", l_d), ("l_gia", l_gia)):
        if v is not None and not torch.isfinite(scal(v)).all():
            raise ValueError(f"{name} is not finite")
    if isinstance(weighting, FixedWeights):
        total = scal(l_ce)
        if l_d is not None:
            total = total + weighting.alpha * scal(l_d)
        if l_gia is not None:
            total = total + weighting.beta * scal(l_gia)
        return LossBundle(
            l_ce=l_ce, l_d=l_d, l_gia=l_gia, l_total=total,
            alpha=weighting.alpha, beta=weighting.beta,
        )
    if isinstance(weighting, UncertaintyWeights):
        total, alpha, beta = weighting.combine({"ce": l_ce, "d": l_d, "gia": l_gia})
        return LossBundle(
            l_ce=l_ce, l_d=l_d, l_gia=l_gia, l_total=total,
            alpha=alpha, beta=beta,
            log_variances=tuple(float(x) for x in weighting.log_sigma_sq.detach()),
        )
    raise TypeError(f"unsupported weighting {type(weighting).__name__}")


def joint_distribution(joint: torch.Tensor, head: nn.Module) -> torch.Tensor:
    """softmax(head(joint)): the prediction from the full joint feature."""
    return torch.softmax(head(joint), dim=-1)


def leave_one_out_distribution(
    joint: torch.Tensor,
    branch_index: int,
    head: nn.Module,
    split: Optional[Tuple[int, int]] = None,
) -> torch.Tensor:
    """Prediction after zero-masking one branch's slice of the joint feature.

    ``joint`` is (B, d1 + d2) with branch 1 occupying the first d1 columns;
    ``branch_index`` is 1 or 2; ``split`` defaults to equal halves.  The
    same shared head is applied to the masked feature.
    """
    if joint.ndim != 2:
        raise ValueError(f"joint feature must be (B, D), got {tuple(joint.shape)}")
    if branch_index not in (1, 2):
        raise ValueError(f"branch index must be 1 or 2, got {branch_index}")
    d = joint.shape[1]
    if split is None:
        if d % 2:
            raise ValueError("joint width is odd; pass explicit split sizes")
        split = (d // 2, d // 2)
    if split[0] + split[1] != d:
        raise ValueError(f"split {split} does not cover joint width {d}")
    mask = joint.new_ones(d)
    if branch_index == 1:
        mask[: split[0]] = 0.0
    else:
        mask[split[0] :] = 0.0
    return torch.softmax(head(joint * mask), dim=-1)


# ---------------------------------------------------------------------------
# Exact discrete mutual information on small joint tables p(f1, f2, y)
# ---------------------------------------------------------------------------

MAX_STATES = 8


def _check_joint(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise ValueError(f"joint table must be 3-D p(f1, f2, y), got {p.ndim}-D")
    if max(p.shape) > MAX_STATES:
        raise ValueError(f"alphabets must have at most {MAX_STATES} states")
    if (p < 0).any():
        raise ValueError("joint table has negative entries")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("joint table is not normalised to 1 within 1e-12")
    return p


def _plugin_mi(joint_ab: np.ndarray) -> float:
    # I(a; b) from a 2-D table by direct summation; 0 log 0 := 0
    pa = joint_ab.sum(axis=1, keepdims=True)
    pb = joint_ab.sum(axis=0, keepdims=True)
    mask = joint_ab > 0
    ratio = joint_ab[mask] / (pa @ pb)[mask]
    return float(np.sum(joint_ab[mask] * np.log(ratio)))


_AXES = {"f1": 0, "f2": 1, "y": 2}


def discrete_mi(joint: np.ndarray, a: str, b: str) -> float:
    """Plug-in mutual information I(a; b) between two of {f1, f2, y}."""
    p = _check_joint(joint)
    ia, ib = _AXES[a], _AXES[b]
    if ia == ib:
        raise ValueError("variables must differ")
    other = ({0, 1, 2} - {ia, ib}).pop()
    table = p.sum(axis=other)
    if ia > ib:
        table = table.T
    return _plugin_mi(table)


def conditional_mi(joint: np.ndarray, a: str, b: str, given: str) -> float:
    """I(a; b | given) by direct summation over the conditioning states."""
    p = _check_joint(joint)
    ia, ib, ig = _AXES[a], _AXES[b], _AXES[given]
    if len({ia, ib, ig}) != 3:
        raise ValueError("variables must be distinct")
    q = np.moveaxis(p, (ia, ib, ig), (0, 1, 2))
    total = 0.0
    for g in range(q.shape[2]):
        slab = q[:, :, g]
        pg = slab.sum()
        if pg <= 0:
            continue
        total += pg * _plugin_mi(slab / pg)
    return float(total)


def interaction_information(joint: np.ndarray) -> float:
    """I(f1; f2; y) = I(f1; y) - I(f1; y | f2); may be negative."""
    return discrete_mi(joint, "f1", "y") - conditional_mi(joint, "f1", "y", "f2")


def mi_with_joint_feature(joint: np.ndarray) -> float:
    """I(y; (f1, f2)) treating the feature pair as one variable."""
    p = _check_joint(joint)
    n1, n2, ny = p.shape
    flat = p.reshape(n1 * n2, ny)
    return _plugin_mi(flat)


def identity_checks(joint: np.ndarray) -> Dict[str, float]:
    """Residuals of the MI decomposition and chain-rule identities.

    decomposition: I(f1;f2) - [I(f1;f2;y) + I(f1;f2|y)]
    chain:         I(y;(f1,f2)) - [I(f1;y|f2) + I(f2;y|f1) + I(f1;f2;y)]

    Each quantity is computed by an independent direct summation; both
    residuals vanish for every normalised table.
    """
    inter = interaction_information(joint)
    decomposition = discrete_mi(joint, "f1", "f2") - (
        inter + conditional_mi(joint, "f1", "f2", "y")
    )
    chain = mi_with_joint_feature(joint) - (
        conditional_mi(joint, "f1", "y", "f2")
        + conditional_mi(joint, "f2", "y", "f1")
        + inter
    )
    return {"decomposition": float(decomposition), "chain": float(chain)}
