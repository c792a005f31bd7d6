"""Vectorized numpy implementation of the fused loss/gradient kernel.

This is the reference backend; the compiled extension in ``_fused.pyx``
implements the same contract and must stay semantically identical.

Contract: ``fused_loss_grad(scores, states, variant, alpha, beta, gamma,
rho)`` takes float64 scores and int8 states of shape (B, L) and returns
the mean per-sample loss (each sample averages its L per-label terms)
together with the gradient of that mean with respect to every score.

Per-label terms, with f = clamp(sigmoid(z), eps, 1 - eps):

    observed positive   -log f                     grad  f - 1
    assumed negative    -log(1 - f)                grad  f
    unknown             -alpha * H(f)              grad  alpha * f(1-f) * log(f/(1-f))
    pseudo-positive     beta * S_rho(f)            grad  beta * (f - rho)
    pseudo-negative     gamma * S_(1-rho)(f)       grad  gamma * (f - (1-rho))

where H is the binary entropy and S_t(f) = -t log f - (1-t) log(1-f).
"""

from __future__ import annotations

import numpy as np

from ..errors import UnexpectedState

PROB_EPS = 1e-7

# variant codes shared with the compiled kernel
ASSUME_NEGATIVE = 0
ENTROPY_MAX = 1
VLPL_FULL = 2
VLPL_POSITIVE_ONLY = 3

# annotation state codes, mirroring dataset.LabelState
_OP = 1
_TN = -1
_UNK = 0
_PP = 2
_PN = -2


def sigmoid_clamped(scores: np.ndarray) -> np.ndarray:
    """Overflow-safe sigmoid clamped into [PROB_EPS, 1 - PROB_EPS]."""
    z = np.asarray(scores, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, PROB_EPS, 1.0 - PROB_EPS)


def fused_loss_grad(
    scores: np.ndarray,
    states: np.ndarray,
    variant: int,
    alpha: float,
    beta: float,
    gamma: float,
    rho: float,
) -> tuple[float, np.ndarray]:
    B, L = scores.shape
    f = sigmoid_clamped(scores)
    logf = np.log(f)
    log1mf = np.log(1.0 - f)

    op = states == _OP
    unk = states == _UNK
    pp = states == _PP
    pn = states == _PN

    values = np.zeros((B, L), dtype=np.float64)
    grads = np.zeros((B, L), dtype=np.float64)

    if variant == ASSUME_NEGATIVE:
        neg = ~op
        values[op] = -logf[op]
        grads[op] = f[op] - 1.0
        values[neg] = -log1mf[neg]
        grads[neg] = f[neg]
    else:
        allowed = op | unk
        if variant in (VLPL_FULL, VLPL_POSITIVE_ONLY):
            allowed |= pp | pn
        if not allowed.all():
            i, j = np.argwhere(~allowed)[0]
            raise UnexpectedState(
                f"state {int(states[i, j])} at sample {i}, label {j} is not valid for loss variant {variant}"
            )
        values[op] = -logf[op]
        grads[op] = f[op] - 1.0
        values[unk] = alpha * (f[unk] * logf[unk] + (1.0 - f[unk]) * log1mf[unk])
        grads[unk] = alpha * f[unk] * (1.0 - f[unk]) * (logf[unk] - log1mf[unk])
        if variant in (VLPL_FULL, VLPL_POSITIVE_ONLY):
            values[pp] = beta * (-rho * logf[pp] - (1.0 - rho) * log1mf[pp])
            grads[pp] = beta * (f[pp] - rho)
        if variant == VLPL_FULL:
            t = 1.0 - rho
            values[pn] = gamma * (-t * logf[pn] - (1.0 - t) * log1mf[pn])
            grads[pn] = gamma * (f[pn] - t)
        # VLPL_POSITIVE_ONLY: pseudo-negatives contribute nothing

    scale = 1.0 / (B * L)
    return float(values.sum() * scale), grads * scale
