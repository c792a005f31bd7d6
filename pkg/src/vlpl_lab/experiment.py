"""End-to-end wiring: embeddings + full labels -> splits -> training run.

This is the shared path behind the train/eval/sweep commands and the
desk-scale experiments in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AnnotationMatrix, _round_half_away, split_validation
from .embedding_store import EmbeddingMatrix, normalize
from .errors import DimensionMismatch, InvalidFraction, ShapeMismatch
from .losses import LossVariant
from .metrics import EvalReport, mean_average_precision
from .probe import TrainConfig, TrainResult, forward, train
from .pseudo_label import (
    PseudoLabelConfig,
    PseudoLabelQuality,
    assign_pseudo_labels_batch,
    merge_matrix,
    pseudo_label_quality,
    similarity_probs_batch,
)

_TEST_SALT = 0x54455354


@dataclass(frozen=True)
class ExperimentData:
    label_names: tuple[str, ...]
    label_embeddings: np.ndarray
    train_features: np.ndarray
    observed: AnnotationMatrix
    train_truth: AnnotationMatrix
    val_features: np.ndarray
    val_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    ids: tuple[str, ...]


def prepare_data(
    images: EmbeddingMatrix,
    labels: EmbeddingMatrix,
    truth: AnnotationMatrix,
    ids,
    val_fraction: float,
    test_fraction: float,
    seed: int,
    label_names: tuple[str, ...] = (),
) -> ExperimentData:
    """Split into test / val / single-positive train and normalize embeddings.

    The test split is drawn first (seeded, without replacement); the
    validation split and single-positive simulation run on the
    remainder. Validation and test keep their full labels.
    """
    if images.dim != labels.dim:
        raise DimensionMismatch(f"image dim {images.dim} != label dim {labels.dim}")
    if truth.n_samples != images.rows:
        raise ShapeMismatch(f"{truth.n_samples} annotation rows for {images.rows} image embeddings")
    if truth.n_labels != labels.rows:
        raise ShapeMismatch(f"{truth.n_labels} annotation columns for {labels.rows} label embeddings")
    if len(ids) != images.rows:
        raise ShapeMismatch(f"{len(ids)} ids for {images.rows} image embeddings")

    n = images.rows
    if not 0.0 < test_fraction < 1.0:
        raise InvalidFraction(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = _round_half_away(test_fraction * n)
    if n_test < 1 or n - n_test < 2:
        raise InvalidFraction(f"test_fraction {test_fraction} leaves no room for train/val on {n} samples")

    rng = np.random.default_rng([seed, _TEST_SALT])
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    pool_idx = np.sort(perm[n_test:])

    split = split_validation(truth.take(pool_idx), val_fraction, seed)
    train_idx = pool_idx[split.train_indices]
    val_idx = pool_idx[split.val_indices]

    feats = normalize(images).data.astype(np.float64)
    label_embs = normalize(labels).data.astype(np.float64)
    return ExperimentData(
        label_names=tuple(label_names),
        label_embeddings=label_embs,
        train_features=feats[train_idx],
        observed=split.train_annotations,
        train_truth=truth.take(train_idx),
        val_features=feats[val_idx],
        val_labels=truth.take(val_idx).positive_mask(),
        test_features=feats[test_idx],
        test_labels=truth.take(test_idx).positive_mask(),
        train_indices=train_idx,
        val_indices=val_idx,
        test_indices=test_idx,
        ids=tuple(ids),
    )


@dataclass
class TrainingArtifacts:
    result: TrainResult
    test_report: EvalReport
    merged: AnnotationMatrix
    quality: PseudoLabelQuality | None


def run_training(data: ExperimentData, pseudo_cfg: PseudoLabelConfig, train_cfg: TrainConfig) -> TrainingArtifacts:
    """Pseudo-label (for vlpl variants), train, and evaluate on the test split."""
    if train_cfg.loss.variant in (LossVariant.VLPL_FULL, LossVariant.VLPL_POSITIVE_ONLY):
        probs = similarity_probs_batch(data.train_features, data.label_embeddings, pseudo_cfg.tau)
        pseudo = assign_pseudo_labels_batch(probs, pseudo_cfg)
        merged = merge_matrix(data.observed, pseudo)
        quality = pseudo_label_quality(merged, data.train_truth)
    else:
        merged = data.observed
        quality = None

    result = train(data.train_features, merged, train_cfg, data.val_features, data.val_labels)
    test_scores = forward(result.model, data.test_features)
    test_report = mean_average_precision(test_scores, data.test_labels)
    return TrainingArtifacts(result=result, test_report=test_report, merged=merged, quality=quality)
