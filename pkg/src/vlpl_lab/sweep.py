"""Grid sweeps over pseudo-labeling hyperparameters.

Each cell of the (tau, theta, delta, smoothing, seed) grid pseudo-labels
the training set, trains a probe, and records validation/test mAP plus
pseudo-label quality. Results append to a CSV journal, one row per cell;
rerunning a sweep skips every cell already present in the journal, so
interrupted sweeps resume where they stopped.

Cells with delta > 0 train with the pseudo-negative term enabled
(vlpl_full); delta = 0 cells use the positive-only variant.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import AnnotationMatrix
from .errors import EmptyResult, VlplError
from .losses import LossConfig, LossVariant
from .metrics import mean_average_precision
from .probe import TrainConfig, forward, train
from .pseudo_label import (
    PseudoLabelConfig,
    assign_pseudo_labels_batch,
    merge_matrix,
    pseudo_label_quality,
    similarity_probs_batch,
)

JOURNAL_FIELDS = (
    "tau",
    "theta",
    "delta",
    "smoothing",
    "seed",
    "val_map",
    "test_map",
    "pseudo_precision",
    "pseudo_recall",
    "status",
)

# standard grids; the narrow theta grid suits fine-grained vocabularies
# whose softmax mass spreads over many labels (CUB-style)
DEFAULT_TAUS = (0.01, 0.03, 0.05, 0.07, 0.09)
DEFAULT_THETAS = (0.1, 0.2, 0.3)
FINE_GRAINED_THETAS = (0.01, 0.03, 0.05)


@dataclass(frozen=True)
class SweepSpec:
    taus: tuple[float, ...]
    thetas: tuple[float, ...]
    deltas: tuple[float, ...] = (0.0,)
    smoothing: tuple[bool, ...] = (True,)
    repeats: int = 3
    base_loss: LossConfig = field(default_factory=LossConfig)
    base_train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for name in ("taus", "thetas", "deltas", "smoothing"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise EmptyResult(f"sweep grid list {name} must be non-empty")
        if self.repeats < 1:
            raise EmptyResult(f"repeats must be >= 1, got {self.repeats}")

    def cells(self) -> list["SweepCell"]:
        """Grid cells in deterministic iteration order."""
        out = []
        for tau in self.taus:
            for theta in self.thetas:
                for delta in self.deltas:
                    for smooth in self.smoothing:
                        for rep in range(self.repeats):
                            out.append(
                                SweepCell(
                                    tau=float(tau),
                                    theta=float(theta),
                                    delta=float(delta),
                                    smoothing=bool(smooth),
                                    seed=self.base_train.seed + rep,
                                )
                            )
        return out


@dataclass(frozen=True)
class SweepCell:
    tau: float
    theta: float
    delta: float
    smoothing: bool
    seed: int

    @property
    def key(self) -> tuple:
        return (self.tau, self.theta, self.delta, self.smoothing, self.seed)


@dataclass(frozen=True)
class SweepRow:
    tau: float
    theta: float
    delta: float
    smoothing: bool
    seed: int
    val_map: float | None  # x100 scale
    test_map: float | None
    pseudo_precision: float | None
    pseudo_recall: float | None
    status: str  # "ok" | "failed"

    @property
    def key(self) -> tuple:
        return (self.tau, self.theta, self.delta, self.smoothing, self.seed)


@dataclass(frozen=True)
class SweepData:
    """Prepared dataset handles shared by every cell."""

    label_embeddings: np.ndarray
    train_features: np.ndarray
    observed: AnnotationMatrix
    train_truth: AnnotationMatrix
    val_features: np.ndarray
    val_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray


def run_cell(cell: SweepCell, spec: SweepSpec, data: SweepData) -> SweepRow:
    """Pseudo-label, train, and evaluate one grid cell."""
    pcfg = PseudoLabelConfig(
        tau=cell.tau,
        theta=cell.theta,
        delta_pct=cell.delta,
        use_negatives=cell.delta > 0,
    )
    probs = similarity_probs_batch(data.train_features, data.label_embeddings, pcfg.tau)
    merged = merge_matrix(data.observed, assign_pseudo_labels_batch(probs, pcfg))
    quality = pseudo_label_quality(merged, data.train_truth)

    variant = LossVariant.VLPL_FULL if cell.delta > 0 else LossVariant.VLPL_POSITIVE_ONLY
    loss_cfg = replace(spec.base_loss, variant=variant, smoothing_enabled=cell.smoothing)
    train_cfg = replace(spec.base_train, seed=cell.seed, loss=loss_cfg)

    result = train(data.train_features, merged, train_cfg, data.val_features, data.val_labels)
    val_map = max(rec.val_map for rec in result.history)
    test_scores = forward(result.model, data.test_features)
    test_map = mean_average_precision(test_scores, data.test_labels).map
    return SweepRow(
        tau=cell.tau,
        theta=cell.theta,
        delta=cell.delta,
        smoothing=cell.smoothing,
        seed=cell.seed,
        val_map=val_map * 100.0,
        test_map=test_map * 100.0,
        pseudo_precision=quality.positive_precision,
        pseudo_recall=quality.positive_recall,
        status="ok",
    )


def _run_cell_safe(cell: SweepCell, spec: SweepSpec, data: SweepData, backend: str | None = None) -> SweepRow:
    if backend is not None:
        # worker processes must use the same kernel backend as the parent
        from . import _backend

        _backend.set_backend(backend)
    try:
        return run_cell(cell, spec, data)
    except VlplError:
        return SweepRow(
            tau=cell.tau,
            theta=cell.theta,
            delta=cell.delta,
            smoothing=cell.smoothing,
            seed=cell.seed,
            val_map=None,
            test_map=None,
            pseudo_precision=None,
            pseudo_recall=None,
            status="failed",
        )


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _append_row(path: str, row: SweepRow) -> None:
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(JOURNAL_FIELDS)
        writer.writerow(
            [
                _format_value(row.tau),
                _format_value(row.theta),
                _format_value(row.delta),
                _format_value(row.smoothing),
                row.seed,
                _format_value(row.val_map),
                _format_value(row.test_map),
                _format_value(row.pseudo_precision),
                _format_value(row.pseudo_recall),
                row.status,
            ]
        )
        fh.flush()


def read_journal(path: str) -> list[SweepRow]:
    if not os.path.exists(path):
        return []
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                SweepRow(
                    tau=float(rec["tau"]),
                    theta=float(rec["theta"]),
                    delta=float(rec["delta"]),
                    smoothing=rec["smoothing"] == "true",
                    seed=int(rec["seed"]),
                    val_map=float(rec["val_map"]) if rec["val_map"] else None,
                    test_map=float(rec["test_map"]) if rec["test_map"] else None,
                    pseudo_precision=float(rec["pseudo_precision"]) if rec["pseudo_precision"] else None,
                    pseudo_recall=float(rec["pseudo_recall"]) if rec["pseudo_recall"] else None,
                    status=rec["status"],
                )
            )
    return rows


@dataclass
class SweepOutcome:
    rows: list[SweepRow]  # grid order, completed + newly computed
    n_computed: int
    n_skipped: int
    n_failed: int


def run_sweep(spec: SweepSpec, data: SweepData, journal_path: str, workers: int = 1) -> SweepOutcome:
    """Run every grid cell not already present in the journal."""
    done = {row.key: row for row in read_journal(journal_path)}
    cells = spec.cells()
    pending = [c for c in cells if c.key not in done]

    computed: dict[tuple, SweepRow] = {}
    if workers > 1 and pending:
        from . import _backend

        backend = _backend.active_backend()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(c, pool.submit(_run_cell_safe, c, spec, data, backend)) for c in pending]
            for cell, fut in futures:
                row = fut.result()
                _append_row(journal_path, row)
                computed[cell.key] = row
    else:
        for cell in pending:
            row = _run_cell_safe(cell, spec, data)
            _append_row(journal_path, row)
            computed[cell.key] = row

    rows = [computed.get(c.key) or done[c.key] for c in cells]
    return SweepOutcome(
        rows=rows,
        n_computed=len(computed),
        n_skipped=len(cells) - len(computed),
        n_failed=sum(1 for r in rows if r.status != "ok"),
    )


@dataclass(frozen=True)
class CellSummary:
    tau: float
    theta: float
    delta: float
    smoothing: bool
    n_seeds: int
    median_val_map: float
    median_test_map: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "theta": self.theta,
            "delta": self.delta,
            "smoothing": self.smoothing,
            "n_seeds": self.n_seeds,
            "median_val_map": self.median_val_map,
            "median_test_map": self.median_test_map,
        }


@dataclass(frozen=True)
class SweepSummary:
    best_cell: CellSummary
    cells: tuple[CellSummary, ...]
    curves: dict[float, list[tuple[float, float]]]  # theta -> [(tau, median test mAP)]

    def to_dict(self) -> dict:
        return {
            "best_cell": self.best_cell.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
            "curves": {
                repr(theta): [[tau, m] for tau, m in series] for theta, series in self.curves.items()
            },
        }


def summarize(rows: list[SweepRow]) -> SweepSummary:
    """Median-over-seeds aggregation, best cell, and per-theta curves.

    The best cell maximizes median validation mAP with ties broken
    toward smaller tau, then smaller theta. Curves cover the cells that
    share the best cell's delta and smoothing settings.
    """
    ok = [r for r in rows if r.status == "ok"]
    if not ok:
        raise EmptyResult("no successful sweep rows to summarize")

    grouped: dict[tuple, list[SweepRow]] = {}
    for row in ok:
        grouped.setdefault((row.tau, row.theta, row.delta, row.smoothing), []).append(row)

    cells = []
    for (tau, theta, delta, smooth), members in grouped.items():
        cells.append(
            CellSummary(
                tau=tau,
                theta=theta,
                delta=delta,
                smoothing=smooth,
                n_seeds=len(members),
                median_val_map=float(np.median([r.val_map for r in members])),
                median_test_map=float(np.median([r.test_map for r in members])),
            )
        )
    cells.sort(key=lambda c: (c.tau, c.theta, c.delta, c.smoothing))
    best = max(cells, key=lambda c: (c.median_val_map, -c.tau, -c.theta, -c.delta))

    curves: dict[float, list[tuple[float, float]]] = {}
    for cell in cells:
        if cell.delta == best.delta and cell.smoothing == best.smoothing:
            curves.setdefault(cell.theta, []).append((cell.tau, cell.median_test_map))
    for series in curves.values():
        series.sort()
    return SweepSummary(best_cell=best, cells=tuple(cells), curves=curves)
