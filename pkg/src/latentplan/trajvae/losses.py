"""VAE objective: masked reconstruction + differential term + KL divergence.

Every term is mean-reduced over its unmasked scalar elements, so the weights
keep their meaning under any agent count or horizon.
"""

from __future__ import annotations

import numpy as np

from ..numerics.tensor import NumericsError, Tensor
from .model import GaussianLatent


def masked_mean_sq(err: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of err^2 over entries where mask (broadcast over trailing dims) is set."""
    m = np.asarray(mask, dtype=err.dtype)
    while m.ndim < err.ndim:
        m = m[..., None]
    count = float(np.broadcast_to(m, err.shape).sum())
    if count == 0:
        return Tensor(np.zeros((), dtype=err.dtype))
    return (err * err * Tensor(np.broadcast_to(m, err.shape).copy())).sum() * (1.0 / count)


def temporal_diff(states, valid_mask: np.ndarray):
    """Forward differences along the step axis; also returns the pairwise mask."""
    if isinstance(states, Tensor):
        diff = states[..., 1:, :] - states[..., :-1, :]
    else:
        diff = np.diff(states, axis=-2)
    mask = np.asarray(valid_mask, dtype=bool)
    dmask = mask[..., 1:] & mask[..., :-1]
    return diff, dmask


def kl_divergence(g: GaussianLatent, agent_mask: np.ndarray | None = None) -> Tensor:
    """Mean over unmasked (agent, dim) elements of the Gaussian-vs-N(0,I) KL."""
    if np.any(g.sigma.data <= 0):
        raise NumericsError("sigma must be positive")
    mu, sigma = g.mu, g.sigma
    var = sigma * sigma
    elem = (mu * mu + var - 1.0 - var.log()) * 0.5
    if agent_mask is None:
        return elem.mean()
    m = np.asarray(agent_mask, dtype=elem.dtype)[..., None]
    count = float(np.broadcast_to(m, elem.shape).sum())
    if count == 0:
        return Tensor(np.zeros((), dtype=elem.dtype))
    return (elem * Tensor(np.broadcast_to(m, elem.shape).copy())).sum() * (1.0 / count)


def vae_loss(target, recon: Tensor, g: GaussianLatent, lam: float, beta: float,
             valid_mask: np.ndarray):
    """Returns (total, components) with components as plain floats."""
    target = Tensor._lift(target)
    mask = np.asarray(valid_mask, dtype=bool)
    target = target * Tensor(mask[..., None].astype(target.dtype))
    recon_err = target - recon
    recon_term = masked_mean_sq(recon_err, mask)

    d_t, d_mask = temporal_diff(target, mask)
    d_r, _ = temporal_diff(recon, mask)
    diff_term = masked_mean_sq(d_t - d_r, d_mask)

    agent_mask = mask.any(axis=-1)
    kl_term = kl_divergence(g, agent_mask)

    total = recon_term + lam * diff_term + beta * kl_term
    components = {
        "recon": recon_term.item(),
        "diff": diff_term.item(),
        "kl": kl_term.item(),
    }
    return total, components
