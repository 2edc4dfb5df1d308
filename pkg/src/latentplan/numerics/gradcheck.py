"""Finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, params: dict[str, Tensor], step: float = 1e-5) -> float:
    """Max over parameter tensors of the relative gradient error.

    ``fn`` must rebuild a scalar-loss Tensor from the current parameter values
    each time it is called (it is evaluated 2 * n_coords + 1 times). Per
    tensor, the error is ||analytic - numeric||_inf / max(||analytic||_inf,
    ||numeric||_inf, 1e-8); the infinity-norm denominator keeps individual
    near-zero coordinates from amplifying finite-difference roundoff.

    The denominator is floored at 3e4 times the central difference's own
    rounding noise (eps * |loss| / step): gradients smaller than that cannot
    be resolved to useful relative accuracy by finite differences,
    so mismatches within that band are treated as zero-gradient agreement. A
    large analytic gradient paired with a tiny numeric one is still flagged.
    """
    for p in params.values():
        p.grad = None  # drop any stale accumulated gradients
    loss = fn()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    for p in params.values():
        p.grad = None

    fd_noise = max(abs(float(loss.data)), 1.0) * np.finfo(np.float64).eps / step
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        numeric = np.empty_like(a_flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn().item()
            flat[i] = orig - step
            down = fn().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2 * step)
        a_max = np.abs(a_flat).max(initial=0.0)
        n_max = np.abs(numeric).max(initial=0.0)
        denom = max(a_max, n_max, 1e-8, 3e4 * fd_noise)
        worst = max(worst, float(np.abs(a_flat - numeric).max(initial=0.0)) / denom)
    return worst
