"""Training losses over per-label sigmoid probabilities.

Every loss averages its per-label terms over the L labels of one sample
and comes with the analytic gradient with respect to the pre-sigmoid
scores. Variants:

    assume_negative     binary cross-entropy; unannotated labels count
                        as negatives
    entropy_max         observed positive gets -log f; unknown labels get
                        an entropy bonus weighted by alpha, pushing their
                        probabilities toward 0.5
    vlpl_full           entropy_max plus smoothed cross-entropy on
                        pseudo-positives (target rho, weight beta) and
                        pseudo-negatives (target 1-rho, weight gamma)
    vlpl_positive_only  vlpl_full without the pseudo-negative term

Entropy terms enter the objective negated, so loss values can be
negative; gradients are exact for the clamped probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _backend
from .errors import ConfigError, NonFiniteScore, ShapeMismatch
from ._backend.purepy import PROB_EPS, sigmoid_clamped


class LossVariant(str, Enum):
    ASSUME_NEGATIVE = "assume_negative"
    ENTROPY_MAX = "entropy_max"
    VLPL_FULL = "vlpl_full"
    VLPL_POSITIVE_ONLY = "vlpl_positive_only"

    @property
    def code(self) -> int:
        return _VARIANT_CODES[self]


_VARIANT_CODES = {
    LossVariant.ASSUME_NEGATIVE: _backend.purepy.ASSUME_NEGATIVE,
    LossVariant.ENTROPY_MAX: _backend.purepy.ENTROPY_MAX,
    LossVariant.VLPL_FULL: _backend.purepy.VLPL_FULL,
    LossVariant.VLPL_POSITIVE_ONLY: _backend.purepy.VLPL_POSITIVE_ONLY,
}


@dataclass(frozen=True)
class LossConfig:
    variant: LossVariant = LossVariant.VLPL_POSITIVE_ONLY
    alpha: float = 0.2
    beta: float = 1.0
    gamma: float = 1.0
    rho: float = 0.9
    smoothing_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", LossVariant(self.variant))
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0.0:
                raise ConfigError(f"{name} must be finite and >= 0, got {val}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")

    @property
    def effective_rho(self) -> float:
        """Smoothing target actually applied; 1.0 when smoothing is off."""
        return self.rho if self.smoothing_enabled else 1.0


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_scores: np.ndarray


def sigmoid_probs(scores) -> np.ndarray:
    """Per-label probabilities, clamped to [1e-7, 1 - 1e-7] for log safety."""
    z = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(z).all():
        raise NonFiniteScore("scores contain NaN or Inf")
    return sigmoid_clamped(z)


def entropy_term(f):
    """Binary entropy H(f); maximal (log 2) at f = 0.5."""
    f = np.asarray(f, dtype=np.float64)
    h = -(f * np.log(f) + (1.0 - f) * np.log(1.0 - f))
    return float(h) if h.ndim == 0 else h


def smoothed_pseudo_term(f, rho: float):
    """Cross-entropy toward the soft target rho; minimized at f = rho."""
    f = np.asarray(f, dtype=np.float64)
    s = -(rho * np.log(f) + (1.0 - rho) * np.log(1.0 - f))
    return float(s) if s.ndim == 0 else s


def batch_loss(scores: np.ndarray, states: np.ndarray, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Mean loss over a batch and its gradient with respect to the scores.

    ``scores`` is (B, L) float, ``states`` the matching annotation codes.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    states = np.atleast_2d(np.asarray(states, dtype=np.int8))
    if scores.shape != states.shape:
        raise ShapeMismatch(f"scores shape {scores.shape} != states shape {states.shape}")
    if not np.isfinite(scores).all():
        raise NonFiniteScore("scores contain NaN or Inf")
    return _backend.fused_loss_grad(
        scores, states, cfg.variant.code, cfg.alpha, cfg.beta, cfg.gamma, cfg.effective_rho
    )


def _single(scores, states, cfg: LossConfig) -> LossResult:
    value, grad = batch_loss(np.asarray(scores)[None, :], np.asarray(states)[None, :], cfg)
    return LossResult(value=value, grad_scores=grad[0])


def assume_negative_loss(scores: np.ndarray, states: np.ndarray) -> LossResult:
    """BCE with target 1 for the observed positive and 0 for everything else."""
    return _single(scores, states, LossConfig(variant=LossVariant.ASSUME_NEGATIVE))


def em_loss(scores: np.ndarray, states: np.ndarray, alpha: float) -> LossResult:
    """Observed-positive log loss plus alpha-weighted entropy on unknowns."""
    return _single(scores, states, LossConfig(variant=LossVariant.ENTROPY_MAX, alpha=alpha))


def vlpl_loss(scores: np.ndarray, states: np.ndarray, cfg: LossConfig) -> LossResult:
    """Pseudo-label loss for a merged annotation row under ``cfg``."""
    if cfg.variant not in (LossVariant.VLPL_FULL, LossVariant.VLPL_POSITIVE_ONLY):
        raise ConfigError(f"vlpl_loss requires a vlpl_* variant, got {cfg.variant.value}")
    return _single(scores, states, cfg)
