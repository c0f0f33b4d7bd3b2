"""Component-ablation and degradation-robustness sweeps."""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from ..network import VARIANT_LABELS, VARIANTS, ModelConfig, TripleBranchNetwork
from . import metrics
from .augment import DEGRADATION_KINDS, apply_degradation
from .data import DatasetManifest, load_split_arrays
from .train import TrainConfig, train


def run_ablation(
    model_config: ModelConfig,
    train_config: TrainConfig,
    manifest: DatasetManifest,
    seeds: Sequence[int] = (0,),
    split: str = "val",
    log=None,
) -> List[Dict]:
    """Train and evaluate all five build variants on fixed data and seeds.

    Returns one row per variant with per-seed and mean metrics; rows keep
    the declared variant order.
    """
    rows: List[Dict] = []
    for variant in VARIANTS:
        cfg = replace(model_config, variant=variant)
        per_seed = []
        for seed in seeds:
            tcfg = replace(train_config, seed=int(seed))
            result = train(cfg, tcfg, manifest)
            report = _eval_best(result, manifest, split)
            per_seed.append({"seed": int(seed), "acc": report.acc,
                             "auc": report.auc, "f1": report.f1})
            if log:
                log(f"ablation {variant} seed={seed} auc={report.auc}")
        rows.append({
            "variant": variant,
            "label": VARIANT_LABELS[variant],
            "acc": float(np.mean([r["acc"] for r in per_seed])),
            "auc": float(np.mean([r["auc"] for r in per_seed])),
            "f1": float(np.mean([r["f1"] for r in per_seed])),
            "per_seed": per_seed,
        })
    return rows


def _eval_best(result, manifest: DatasetManifest, split: str) -> metrics.MetricsReport:
    from .train import evaluate

    return evaluate(result.best_model(), manifest, split)


def run_robustness(
    model: TripleBranchNetwork,
    manifest: DatasetManifest,
    degradations: Sequence[str] = DEGRADATION_KINDS,
    split: str = "test",
    seed: int = 0,
) -> List[Dict]:
    """Evaluate one trained model under each degradation condition.

    Each row uses the same images in the same order; the only difference
    is the perturbation, whose noise stream is keyed by (seed, index).
    """
    images, labels = load_split_arrays(manifest, split)
    rows: List[Dict] = []
    for kind in degradations:
        degraded = np.stack([
            apply_degradation(images[i], kind, np.random.default_rng([seed, i]))
            for i in range(len(images))
        ])
        from .train import evaluate_arrays

        report = evaluate_arrays(model, degraded, labels, split=split)
        rows.append({"degradation": kind, "acc": report.acc,
                     "auc": report.auc, "f1": report.f1})
    return rows


def format_table(rows: Sequence[Dict], key_field: str) -> str:
    """Plain-text table for the human-facing log files."""
    fields = [key_field, "acc", "auc", "f1"]
    widths = [max(len(f), max((len(_fmt(r.get(f))) for r in rows), default=0))
              for f in fields]
    header = "  ".join(f.ljust(w) for f, w in zip(fields, widths))
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("  ".join(_fmt(r.get(f)).ljust(w) for f, w in zip(fields, widths)))
    return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
