"""Kernel backend selection.

The fused loss/gradient kernel exists twice: a Cython extension
(``_fused``) and a vectorized numpy fallback (``purepy``). The compiled
one is used when the extension built; set ``VLPL_LAB_BACKEND`` to
``python`` or ``compiled`` (or call :func:`set_backend`) to force one.
"""

from __future__ import annotations

import os

import numpy as np

from . import purepy

try:
    from . import _fused
except ImportError:  # extension not built; numpy fallback only
    _fused = None

_BACKENDS = {"python": purepy}
if _fused is not None:
    _BACKENDS["compiled"] = _fused

_active = os.environ.get("VLPL_LAB_BACKEND", "auto")
if _active not in ("auto", *_BACKENDS):
    raise ImportError(
        f"VLPL_LAB_BACKEND={_active!r} is not available; choose from 'auto', "
        + ", ".join(repr(b) for b in _BACKENDS)
    )


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def active_backend() -> str:
    if _active == "auto":
        return "compiled" if _fused is not None else "python"
    return _active


def set_backend(name: str) -> None:
    """Force a backend ('python', 'compiled', or 'auto')."""
    global _active
    if name not in ("auto", *_BACKENDS):
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = name


def fused_loss_grad(scores, states, variant, alpha, beta, gamma, rho):
    """Dispatch to the active backend; see purepy.fused_loss_grad for the contract."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    states = np.ascontiguousarray(states, dtype=np.int8)
    impl = _BACKENDS[active_backend()]
    return impl.fused_loss_grad(scores, states, variant, alpha, beta, gamma, rho)
