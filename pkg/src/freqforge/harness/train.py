"""Training loop, checkpointing and evaluation for the detector."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .. import miloss
from ..network import ModelConfig, TripleBranchNetwork, build_network
from . import metrics
from .augment import AugmentPolicy, augment
from .data import DatasetManifest, load_split_arrays

CHECKPOINT_FORMAT = "freqforge-ckpt-v1"


class NanLossError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, step: int, components: Dict[str, Optional[float]]):
        self.step = step
        self.components = components
        super().__init__(
            f"non-finite loss at step {step}: "
            + ", ".join(f"{k}={v}" for k, v in components.items())
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 20
    max_steps: int = 2000
    weighting: str = "uncertainty"
    alpha: float = 1.0
    beta: float = 1.0
    augment: str = "standard"
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "lr_decay", "lr_decay_every", "batch_size", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.max_steps < 0:
            raise ValueError("epochs and max_steps must be non-negative")
        if self.weighting not in ("fixed", "uncertainty"):
            raise ValueError(f"unknown weighting mode {self.weighting!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        AugmentPolicy.named(self.augment)

    def learning_rate(self, epoch: int) -> float:
        """Step decay: lr * decay^(epoch // every)."""
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainResult:
    model: TripleBranchNetwork
    model_config: ModelConfig
    train_config: TrainConfig
    history: List[Dict]
    best_val_auc: Optional[float]
    best_state: Optional[Dict]
    uncertainty: Optional[miloss.UncertaintyWeights]

    def best_model(self) -> TripleBranchNetwork:
        net = TripleBranchNetwork(self.model_config)
        net.load_state_dict(self.best_state if self.best_state is not None
                            else self.model.state_dict())
        net.eval()
        return net


def compute_losses(
    out, labels: torch.Tensor, weighting: miloss.Weighting
) -> miloss.LossBundle:
    """Cross-entropy plus (when emitted) the decoupling and alignment terms."""
    l_ce = nn.functional.cross_entropy(out.logits, labels)
    if out.p_f is None:
        return miloss.LossBundle(
            l_ce=l_ce, l_d=None, l_gia=None, l_total=l_ce, alpha=0.0, beta=0.0
        )
    l_d = miloss.decoupling_loss(out.p_f, list(out.p_loo))
    l_gia = miloss.gia_loss(out.p_gamma, out.p_g)
    return miloss.total_loss(l_ce, l_d, l_gia, weighting)


def scores_for(model: TripleBranchNetwork, images: np.ndarray,
               batch_size: int = 64) -> np.ndarray:
    """P(fake) for a stack of images, in eval mode."""
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            batch = torch.from_numpy(images[i : i + batch_size])
            outs.append(model(batch).p_final[:, 1].numpy())
    return np.concatenate(outs) if outs else np.empty(0)


def evaluate_arrays(model: TripleBranchNetwork, images: np.ndarray,
                    labels: np.ndarray, split: str = "val",
                    history: Optional[List[Dict]] = None) -> metrics.MetricsReport:
    scores = scores_for(model, images)
    return metrics.MetricsReport.from_scores(labels, scores, split=split, history=history)


def evaluate(model: TripleBranchNetwork, manifest: DatasetManifest,
             split: str, history: Optional[List[Dict]] = None) -> metrics.MetricsReport:
    images, labels = load_split_arrays(manifest, split)
    return evaluate_arrays(model, images, labels, split=split, history=history)


def _augment_batch(images: np.ndarray, indices: np.ndarray, policy: AugmentPolicy,
                   seed: int, epoch: int) -> np.ndarray:
    out = np.empty_like(images[indices])
    for row, idx in enumerate(indices):
        rng = np.random.default_rng([seed, 104729 + epoch, int(idx)])
        out[row] = augment(images[idx], policy, rng)
    return out


def save_checkpoint(path: Path, model_config: ModelConfig, train_config: TrainConfig,
                    model_state: Dict, history: List[Dict],
                    uncertainty_state: Optional[Dict] = None) -> None:
    """Atomic write-rename so an interrupted run never leaves a torn file."""
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(model_config),
        "train_config": asdict(train_config),
        "model_state": model_state,
        "uncertainty_state": uncertainty_state,
        "history": history,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: Path) -> Tuple[TripleBranchNetwork, ModelConfig, TrainConfig, List[Dict]]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {payload.get('format')!r}; "
            f"expected {CHECKPOINT_FORMAT!r}"
        )
    model_config = ModelConfig(**payload["model_config"])
    train_config = TrainConfig(**payload["train_config"])
    model = TripleBranchNetwork(model_config)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, model_config, train_config, payload["history"]


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    manifest: DatasetManifest,
    out_dir: Optional[Path] = None,
    log=None,
) -> TrainResult:
    """Run the full pipeline for the configured epochs.

    Saves a rolling last-epoch checkpoint and the best-validation-AUC
    checkpoint when out_dir is given.  Aborts with NanLossError on a
    non-finite loss.
    """
    cfg = train_config
    torch.manual_seed(cfg.seed)
    model = build_network(model_config, cfg.seed)
    policy = AugmentPolicy.named(cfg.augment)

    uncertainty = None
    params = list(model.parameters())
    weighting: miloss.Weighting
    if cfg.weighting == "uncertainty" and model_config.variant == "full":
        uncertainty = miloss.UncertaintyWeights()
        params += list(uncertainty.parameters())
        weighting = uncertainty
    else:
        weighting = miloss.FixedWeights(cfg.alpha, cfg.beta)

    optimizer = torch.optim.Adam(
        params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps
    )

    train_images, train_labels = load_split_arrays(manifest, "train")
    try:
        val_images, val_labels = load_split_arrays(manifest, "val")
    except ValueError:
        val_images = val_labels = None

    history: List[Dict] = []
    best_auc: Optional[float] = None
    best_state: Optional[Dict] = None
    step = 0

    for epoch in range(cfg.epochs):
        if step >= cfg.max_steps:
            break
        lr = cfg.learning_rate(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_images))
        model.train()
        epoch_bundles: List[miloss.LossBundle] = []
        for start in range(0, len(order), cfg.batch_size):
            if step >= cfg.max_steps:
                break
            idx = order[start : start + cfg.batch_size]
            batch_np = _augment_batch(train_images, idx, policy, cfg.seed, epoch)
            batch = torch.from_numpy(batch_np)
            labels = torch.from_numpy(train_labels[idx])

            out = model(batch)
            bundle = compute_losses(out, labels, weighting)
            total = bundle.l_total
            if not torch.isfinite(torch.as_tensor(total)).all():
                raise NanLossError(step, bundle.as_floats().to_dict())
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            optimizer.step()
            epoch_bundles.append(bundle.as_floats())
            step += 1

        entry: Dict = {
            "epoch": epoch,
            "lr": lr,
            "steps": step,
            "loss": _mean_bundle(epoch_bundles),
        }
        if val_images is not None:
            report = evaluate_arrays(model, val_images, val_labels, split="val")
            entry["val"] = {"acc": report.acc, "auc": report.auc, "f1": report.f1}
            if report.auc is not None and (best_auc is None or report.auc > best_auc):
                best_auc = report.auc
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        history.append(entry)

        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(
                out_dir / "last.pt", model_config, cfg, model.state_dict(), history,
                uncertainty.state_dict() if uncertainty else None,
            )
            if best_state is not None:
                save_checkpoint(
                    out_dir / "checkpoint.pt", model_config, cfg, best_state, history,
                    uncertainty.state_dict() if uncertainty else None,
                )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ustate = uncertainty.state_dict() if uncertainty else None
        if not (out_dir / "last.pt").exists():
            save_checkpoint(out_dir / "last.pt", model_config, cfg,
                            model.state_dict(), history, ustate)
        if not (out_dir / "checkpoint.pt").exists():
            save_checkpoint(out_dir / "checkpoint.pt", model_config, cfg,
                            best_state if best_state is not None else model.state_dict(),
                            history, ustate)

    model.eval()
    return TrainResult(
        model=model,
        model_config=model_config,
        train_config=cfg,
        history=history,
        best_val_auc=best_auc,
        best_state=best_state,
        uncertainty=uncertainty,
    )


def _mean_bundle(bundles: List[miloss.LossBundle]) -> Dict[str, Optional[float]]:
    if not bundles:
        return {"l_ce": None, "l_d": None, "l_gia": None, "l_total": None,
                "alpha": None, "beta": None}

    def mean_of(name):
        vals = [getattr(b, name) for b in bundles if getattr(b, name) is not None]
        return float(np.mean(vals)) if vals else None

    return {k: mean_of(k) for k in ("l_ce", "l_d", "l_gia", "l_total", "alpha", "beta")}
