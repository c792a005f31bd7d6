"""Ranking metrics: per-class average precision and mAP.

AP here is the mean of precision@k over the ranks k that hold positive
samples (no interpolation), with score ties broken by the original
sample index so results are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoEvaluableClass, NoPositives, ShapeMismatch


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: np.ndarray  # NaN for classes without positives
    map: float
    n_samples: int
    excluded_classes: tuple[int, ...]

    def to_dict(self, label_names=None) -> dict:
        d = {
            "per_class_ap": [None if np.isnan(a) else float(a) for a in self.per_class_ap],
            "map": float(self.map),
            "map_x100": round(float(self.map) * 100.0, 2),
            "n_samples": self.n_samples,
            "excluded_classes": list(self.excluded_classes),
        }
        if label_names is not None:
            d["label_names"] = list(label_names)
        return d


def write_per_class_csv(path: str, report: EvalReport, label_names=None) -> None:
    """Optional CSV companion to the JSON report: class_name, ap."""
    names = list(label_names) if label_names else [str(i) for i in range(len(report.per_class_ap))]
    if len(names) != len(report.per_class_ap):
        raise ShapeMismatch(f"{len(names)} label names for {len(report.per_class_ap)} classes")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("class_name,ap\n")
        for name, ap in zip(names, report.per_class_ap):
            fh.write(f"{name},{'' if np.isnan(ap) else repr(float(ap))}\n")


def _as_binary(labels: np.ndarray) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype == bool:
        return arr
    uniq = np.unique(arr)
    if not np.isin(uniq, (0, 1)).all():
        raise ShapeMismatch(f"labels must be binary, found values {uniq[:5]}")
    return arr.astype(bool)


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP of one class over samples; requires at least one positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _as_binary(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeMismatch(f"scores shape {scores.shape} != labels shape {labels.shape}")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("average precision is undefined without positive samples")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1)
    precision_at_hits = cum_hits[hits] / ranks[hits]
    return float(precision_at_hits.mean())


def mean_average_precision(score_matrix: np.ndarray, label_matrix: np.ndarray) -> EvalReport:
    """Mean over classes of AP; classes without positives are excluded."""
    scores = np.asarray(score_matrix, dtype=np.float64)
    labels = _as_binary(label_matrix)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeMismatch(f"scores shape {scores.shape} != labels shape {labels.shape}")
    n_samples, n_classes = scores.shape
    per_class = np.full(n_classes, np.nan)
    excluded = []
    for c in range(n_classes):
        if labels[:, c].any():
            per_class[c] = average_precision(scores[:, c], labels[:, c])
        else:
            excluded.append(c)
    if len(excluded) == n_classes:
        raise NoEvaluableClass("every class lacks positive samples")
    return EvalReport(
        per_class_ap=per_class,
        map=float(np.nanmean(per_class)),
        n_samples=n_samples,
        excluded_classes=tuple(excluded),
    )
