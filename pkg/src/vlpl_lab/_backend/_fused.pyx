# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused loss/gradient kernel.

Must stay semantically identical to ``purepy.fused_loss_grad``; the
per-label term table lives in that module's docstring.
"""

from libc.math cimport exp, log

import numpy as np

from vlpl_lab.errors import UnexpectedState

cdef double _PROB_EPS = 1e-7


cdef inline double _sigmoid_clamped(double z) noexcept nogil:
    cdef double f, ez
    if z >= 0.0:
        f = 1.0 / (1.0 + exp(-z))
    else:
        ez = exp(z)
        f = ez / (1.0 + ez)
    if f < _PROB_EPS:
        f = _PROB_EPS
    elif f > 1.0 - _PROB_EPS:
        f = 1.0 - _PROB_EPS
    return f


def fused_loss_grad(double[:, ::1] scores, const signed char[:, ::1] states,
                    int variant, double alpha, double beta, double gamma, double rho):
    cdef Py_ssize_t B = scores.shape[0]
    cdef Py_ssize_t L = scores.shape[1]
    if states.shape[0] != B or states.shape[1] != L:
        raise ValueError("scores and states shapes differ")

    grad_arr = np.zeros((B, L), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double total = 0.0
    cdef double scale = 1.0 / (B * L)
    cdef double f, logf, log1mf, c, g, t
    cdef Py_ssize_t i, j
    cdef int s

    for i in range(B):
        for j in range(L):
            s = states[i, j]
            f = _sigmoid_clamped(scores[i, j])
            logf = log(f)
            log1mf = log(1.0 - f)
            if variant == 0:
                # assume-negative: positive target for the observed label, 0 elsewhere
                if s == 1:
                    c = -logf
                    g = f - 1.0
                else:
                    c = -log1mf
                    g = f
            elif s == 1:
                c = -logf
                g = f - 1.0
            elif s == 0:
                c = alpha * (f * logf + (1.0 - f) * log1mf)
                g = alpha * f * (1.0 - f) * (logf - log1mf)
            elif s == 2 and variant >= 2:
                c = beta * (-rho * logf - (1.0 - rho) * log1mf)
                g = beta * (f - rho)
            elif s == -2 and variant == 2:
                t = 1.0 - rho
                c = gamma * (-t * logf - (1.0 - t) * log1mf)
                g = gamma * (f - t)
            elif s == -2 and variant == 3:
                c = 0.0
                g = 0.0
            else:
                raise UnexpectedState(
                    f"state {s} at sample {i}, label {j} is not valid for loss variant {variant}"
                )
            total += c
            grad[i, j] = g * scale

    return total * scale, grad_arr
