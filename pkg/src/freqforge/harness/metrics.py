"""Classification metrics: accuracy, rank-based AUC with tie midranks, F1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


def tied_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the midrank of their run."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_score(labels: np.ndarray, scores: np.ndarray) -> Optional[float]:
    """Mann-Whitney AUC: P(random positive outscores a random negative).

    Ties count half.  Returns None when only one class is present.
    """
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError("labels and scores must have matching length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = tied_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(labels: np.ndarray, scores: np.ndarray, threshold: float = 0.5) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    preds = (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)
    return float((preds == labels).mean())


def f1_score(labels: np.ndarray, scores: np.ndarray, threshold: float = 0.5) -> float:
    """F1 of the positive (fake) class at the given threshold."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)
    tp = int(((preds == 1) & (labels == 1)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    """Per-split metrics plus the per-epoch loss history."""

    acc: float
    auc: Optional[float]
    f1: float
    split: str = "val"
    history: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "acc": self.acc,
            "auc": self.auc,
            "f1": self.f1,
            "split": self.split,
            "history": self.history,
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_scores(
        cls, labels, scores, split: str = "val", history: Optional[List[Dict]] = None
    ) -> "MetricsReport":
        return cls(
            acc=accuracy(labels, scores),
            auc=auc_score(labels, scores),
            f1=f1_score(labels, scores),
            split=split,
            history=list(history) if history else [],
        )
