"""Turn image/label embedding similarities into pseudo-label states.

The probability of label i for an image is a temperature softmax over
dot products of unit-normalized embeddings:

    p_i = exp(<e_img, e_lbl_i> / tau) / sum_j exp(<e_img, e_lbl_j> / tau)

Labels with p_i strictly above ``theta`` become pseudo-positives. When
negatives are enabled, the floor(delta_pct/100 * L) lowest-probability
labels that are not already pseudo-positive become pseudo-negatives
(ties resolved toward the lower label index). Everything else stays
unknown. The observed single positive always overrides the pseudo state
at its position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import AnnotationMatrix, LabelState
from .errors import (
    ConflictingShape,
    DimensionMismatch,
    InvalidSpec,
    NonPositiveTemperature,
    ShapeMismatch,
)

# (tau, theta) defaults that worked best per dataset family
DATASET_DEFAULTS = {
    "voc": (0.03, 0.3),
    "coco": (0.01, 0.3),
    "nus": (0.03, 0.1),
    "cub": (0.03, 0.01),
}


@dataclass(frozen=True)
class PseudoLabelConfig:
    tau: float
    theta: float
    delta_pct: float = 0.0
    use_negatives: bool = False

    def __post_init__(self):
        if self.tau <= 0.0:
            raise NonPositiveTemperature(f"tau must be > 0, got {self.tau}")
        if not 0.0 < self.theta < 1.0:
            raise InvalidSpec(f"theta must be in (0, 1), got {self.theta}")
        if not 0.0 <= self.delta_pct < 100.0:
            raise InvalidSpec(f"delta_pct must be in [0, 100), got {self.delta_pct}")

    @classmethod
    def for_dataset(cls, name: str, **kwargs) -> "PseudoLabelConfig":
        tau, theta = DATASET_DEFAULTS[name.lower()]
        return cls(tau=tau, theta=theta, **kwargs)


def similarity_probs_batch(image_embs: np.ndarray, label_embs: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-softmax label probabilities for a batch of images.

    Inputs must be unit-normalized; shapes (N, d) and (L, d). Returns an
    (N, L) matrix whose rows each sum to 1. The softmax subtracts the
    per-row max before exponentiating, so large 1/tau cannot overflow.
    """
    if tau <= 0.0:
        raise NonPositiveTemperature(f"tau must be > 0, got {tau}")
    images = np.atleast_2d(np.asarray(image_embs, dtype=np.float64))
    labels = np.asarray(label_embs, dtype=np.float64)
    if images.ndim != 2 or labels.ndim != 2 or images.shape[1] != labels.shape[1]:
        raise DimensionMismatch(
            f"image dim {images.shape[-1]} does not match label dim {labels.shape[-1]}"
        )
    logits = images @ labels.T / tau
    logits -= logits.max(axis=1, keepdims=True)
    exps = np.exp(logits)
    return exps / exps.sum(axis=1, keepdims=True)


def similarity_probs(image_emb: np.ndarray, label_embs: np.ndarray, tau: float) -> np.ndarray:
    """Single-image variant of :func:`similarity_probs_batch`."""
    image = np.asarray(image_emb, dtype=np.float64)
    if image.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D image embedding, got shape {image.shape}")
    return similarity_probs_batch(image[None, :], label_embs, tau)[0]


def _validate_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size < 1:
        raise ShapeMismatch(f"probability vector must be 1-D and non-empty, got shape {probs.shape}")
    if probs.min() < 0.0 or probs.max() > 1.0 or abs(probs.sum() - 1.0) > 1e-6:
        raise InvalidSpec("probabilities must lie in [0, 1] and sum to 1")
    return probs


def negative_budget(delta_pct: float, n_labels: int) -> int:
    return int(np.floor(delta_pct / 100.0 * n_labels))


def assign_pseudo_labels(probs: np.ndarray, cfg: PseudoLabelConfig) -> np.ndarray:
    """Assign per-label states from one probability vector.

    Positive assignment uses a strict p > theta; equality maps to
    Unknown. Negatives are capped at the budget or at however many
    non-positive slots remain, whichever is smaller.
    """
    probs = _validate_probs(probs)
    n = probs.size
    states = np.zeros(n, dtype=np.int8)
    positive = probs > cfg.theta
    states[positive] = LabelState.PSEUDO_POSITIVE
    if cfg.use_negatives:
        budget = negative_budget(cfg.delta_pct, n)
        # stable ascending sort: smallest first, ties toward lower index
        order = np.argsort(probs, kind="stable")
        order = order[~positive[order]]
        chosen = order[:budget]
        states[chosen] = LabelState.PSEUDO_NEGATIVE
    return states


def assign_pseudo_labels_batch(probs: np.ndarray, cfg: PseudoLabelConfig) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeMismatch(f"expected an (N, L) probability matrix, got shape {probs.shape}")
    return np.stack([assign_pseudo_labels(row, cfg) for row in probs])


def merge_with_observed(observed: np.ndarray, pseudo: np.ndarray) -> np.ndarray:
    """Overlay pseudo states onto a single-positive row; observed wins."""
    observed = np.asarray(observed, dtype=np.int8)
    pseudo = np.asarray(pseudo, dtype=np.int8)
    if observed.shape != pseudo.shape or observed.ndim != 1:
        raise ConflictingShape(
            f"observed shape {observed.shape} does not match pseudo shape {pseudo.shape}"
        )
    is_op = observed == LabelState.OBSERVED_POSITIVE
    if is_op.sum() != 1 or not np.isin(observed[~is_op], (int(LabelState.UNKNOWN),)).all():
        raise ConflictingShape("observed row is not in single-positive form")
    return np.where(is_op, observed, pseudo).astype(np.int8)


def merge_matrix(observed: AnnotationMatrix, pseudo_states: np.ndarray) -> AnnotationMatrix:
    pseudo_states = np.asarray(pseudo_states, dtype=np.int8)
    if pseudo_states.shape != observed.states.shape:
        raise ConflictingShape(
            f"pseudo states shape {pseudo_states.shape} != observed shape {observed.states.shape}"
        )
    merged = np.stack(
        [merge_with_observed(obs, ps) for obs, ps in zip(observed.states, pseudo_states)]
    )
    return AnnotationMatrix(states=merged)


@dataclass(frozen=True)
class PseudoLabelQuality:
    positive_precision: float
    positive_recall: float
    negative_false_negative_rate: float
    n_pseudo_positives: int
    n_pseudo_negatives: int


def pseudo_label_quality(merged: AnnotationMatrix, ground_truth: AnnotationMatrix) -> PseudoLabelQuality:
    """Score pseudo states against the full ground truth.

    Precision is over all pseudo-positives (1.0 when none assigned);
    recall is over true positives excluding the observed one; the
    negative rate is the fraction of pseudo-negatives that are truly
    positive.
    """
    if merged.states.shape != ground_truth.states.shape:
        raise ShapeMismatch(
            f"merged shape {merged.states.shape} != ground truth shape {ground_truth.states.shape}"
        )
    truth = ground_truth.positive_mask()
    pp = merged.states == LabelState.PSEUDO_POSITIVE
    pn = merged.states == LabelState.PSEUDO_NEGATIVE
    observed = merged.states == LabelState.OBSERVED_POSITIVE

    n_pp = int(pp.sum())
    n_pn = int(pn.sum())
    precision = float((pp & truth).sum() / n_pp) if n_pp else 1.0
    hidden_positives = int((truth & ~observed).sum())
    recall = float((pp & truth).sum() / hidden_positives) if hidden_positives else 1.0
    fn_rate = float((pn & truth).sum() / n_pn) if n_pn else 0.0
    return PseudoLabelQuality(
        positive_precision=precision,
        positive_recall=recall,
        negative_false_negative_rate=fn_rate,
        n_pseudo_positives=n_pp,
        n_pseudo_negatives=n_pn,
    )


def write_pseudo_label_dump(
    path: str,
    ids: Sequence[str],
    states: np.ndarray,
    probs: np.ndarray | None = None,
) -> None:
    """JSON-lines dump: one object per sample with pseudo index lists."""
    states = np.asarray(states, dtype=np.int8)
    if len(ids) != states.shape[0]:
        raise ShapeMismatch(f"{len(ids)} ids for {states.shape[0]} state rows")
    with open(path, "w", encoding="utf-8") as fh:
        for i, sample_id in enumerate(ids):
            obj = {
                "id": sample_id,
                "pseudo_positives": [int(j) for j in np.flatnonzero(states[i] == LabelState.PSEUDO_POSITIVE)],
                "pseudo_negatives": [int(j) for j in np.flatnonzero(states[i] == LabelState.PSEUDO_NEGATIVE)],
            }
            if probs is not None:
                obj["probs"] = [float(p) for p in probs[i]]
            fh.write(json.dumps(obj) + "\n")
