"""Single-positive simulation and validation splitting.

Annotation state codes (stored as int8):

    OBSERVED_POSITIVE =  1    human-confirmed positive
    TRUE_NEGATIVE     = -1    human-confirmed negative
    UNKNOWN           =  0    unannotated
    PSEUDO_POSITIVE   =  2    inferred positive
    PSEUDO_NEGATIVE   = -2    inferred negative

A "fully labeled" matrix contains only OBSERVED_POSITIVE / TRUE_NEGATIVE.
The single-positive training form keeps exactly one OBSERVED_POSITIVE per
row and marks everything else UNKNOWN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidFraction, NoPositiveRow, ShapeMismatch


class LabelState(IntEnum):
    OBSERVED_POSITIVE = 1
    TRUE_NEGATIVE = -1
    UNKNOWN = 0
    PSEUDO_POSITIVE = 2
    PSEUDO_NEGATIVE = -2


_VALID_CODES = frozenset(int(s) for s in LabelState)

# salts mixed into per-purpose RNG streams so every seeded operation has
# its own independent, reproducible stream
_KEEP_SALT = 0x4B454550
_SPLIT_SALT = 0x53504C54


@dataclass(frozen=True)
class AnnotationMatrix:
    """Per-(sample, label) annotation states, shape (n_samples, n_labels)."""

    states: np.ndarray

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.int8)
        object.__setattr__(self, "states", states)
        if states.ndim != 2:
            raise ShapeMismatch(f"annotation matrix must be 2-D, got shape {states.shape}")
        bad = set(np.unique(states)) - _VALID_CODES
        if bad:
            raise ShapeMismatch(f"unknown annotation state codes: {sorted(bad)}")

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def n_labels(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_binary(cls, positives: np.ndarray) -> "AnnotationMatrix":
        """Fully labeled matrix from a boolean/0-1 positive mask."""
        mask = np.asarray(positives).astype(bool)
        states = np.where(mask, LabelState.OBSERVED_POSITIVE, LabelState.TRUE_NEGATIVE)
        return cls(states=states.astype(np.int8))

    @classmethod
    def from_positive_lists(cls, positive_lists: Iterable[Sequence[int]], n_labels: int) -> "AnnotationMatrix":
        """Fully labeled matrix from per-sample positive index lists."""
        rows = list(positive_lists)
        states = np.full((len(rows), n_labels), LabelState.TRUE_NEGATIVE, dtype=np.int8)
        for i, idxs in enumerate(rows):
            for j in idxs:
                if not 0 <= j < n_labels:
                    raise ShapeMismatch(f"sample {i}: label index {j} out of range [0, {n_labels})")
                states[i, j] = LabelState.OBSERVED_POSITIVE
        return cls(states=states)

    def positive_mask(self) -> np.ndarray:
        return self.states == LabelState.OBSERVED_POSITIVE

    def is_spml_form(self) -> bool:
        op = self.positive_mask().sum(axis=1)
        others_ok = np.isin(self.states, (LabelState.OBSERVED_POSITIVE, LabelState.UNKNOWN)).all()
        return bool((op == 1).all() and others_ok)

    def is_fully_labeled(self) -> bool:
        return bool(
            np.isin(self.states, (LabelState.OBSERVED_POSITIVE, LabelState.TRUE_NEGATIVE)).all()
        )

    def take(self, indices: np.ndarray) -> "AnnotationMatrix":
        return AnnotationMatrix(states=self.states[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class DatasetSplit:
    train_indices: np.ndarray
    val_indices: np.ndarray
    train_annotations: AnnotationMatrix
    val_annotations: AnnotationMatrix


@dataclass(frozen=True)
class DatasetStats:
    avg_positives: float
    label_frequencies: np.ndarray


def simulate_single_positive(full: AnnotationMatrix, seed: int) -> AnnotationMatrix:
    """Keep one uniformly chosen positive per row; everything else Unknown.

    Each row uses its own RNG stream derived from (seed, row index), so
    the result is reproducible row by row regardless of execution order.
    """
    states = full.states
    out = np.zeros_like(states)
    for i in range(full.n_samples):
        positives = np.flatnonzero(states[i] == LabelState.OBSERVED_POSITIVE)
        if positives.size == 0:
            raise NoPositiveRow(f"sample {i} has no positive label and cannot enter single-positive form")
        rng = np.random.default_rng([seed, _KEEP_SALT, i])
        keep = positives[rng.integers(positives.size)]
        out[i, keep] = LabelState.OBSERVED_POSITIVE
    return AnnotationMatrix(states=out)


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


def split_validation(full: AnnotationMatrix, fraction: float, seed: int) -> DatasetSplit:
    """Carve a fully labeled validation split; single-positive the rest."""
    if not 0.0 < fraction < 1.0:
        raise InvalidFraction(f"fraction must be in (0, 1), got {fraction}")
    n = full.n_samples
    n_val = _round_half_away(fraction * n)
    if n_val < 1 or n_val >= n:
        raise InvalidFraction(
            f"fraction {fraction} of {n} samples leaves {n_val} validation / {n - n_val} training rows"
        )
    rng = np.random.default_rng([seed, _SPLIT_SALT])
    perm = rng.permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return DatasetSplit(
        train_indices=train_idx,
        val_indices=val_idx,
        train_annotations=simulate_single_positive(full.take(train_idx), seed),
        val_annotations=full.take(val_idx),
    )


def dataset_stats(ann: AnnotationMatrix) -> DatasetStats:
    """Mean positives per row and per-label positive frequency."""
    mask = ann.positive_mask()
    return DatasetStats(
        avg_positives=float(mask.sum(axis=1).mean()),
        label_frequencies=mask.mean(axis=0),
    )


def read_annotations_jsonl(path: str, n_labels: int) -> tuple[list[str], AnnotationMatrix]:
    """Read full annotations as JSON lines of {"id", "positives": [indices]}.

    Labels not listed are negative.
    """
    ids: list[str] = []
    positive_lists: list[list[int]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ids.append(str(obj["id"]))
            positive_lists.append([int(j) for j in obj["positives"]])
    return ids, AnnotationMatrix.from_positive_lists(positive_lists, n_labels)


def write_annotations_jsonl(path: str, ids: Sequence[str], ann: AnnotationMatrix) -> None:
    """Write positive indices per sample (OBSERVED_POSITIVE states only)."""
    if len(ids) != ann.n_samples:
        raise ShapeMismatch(f"{len(ids)} ids for {ann.n_samples} annotation rows")
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, row in zip(ids, ann.positive_mask()):
            obj = {"id": sample_id, "positives": [int(j) for j in np.flatnonzero(row)]}
            fh.write(json.dumps(obj) + "\n")


def write_split_json(path: str, split: DatasetSplit, seed: int, fraction: float) -> None:
    payload = {
        "train_indices": [int(i) for i in split.train_indices],
        "val_indices": [int(i) for i in split.val_indices],
        "seed": seed,
        "fraction": fraction,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
