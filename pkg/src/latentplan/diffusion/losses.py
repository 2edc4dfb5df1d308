"""Denoising training objective on agent latents."""

from __future__ import annotations

import numpy as np

from ..numerics.tensor import Tensor


def diffusion_loss(pred_z0: Tensor, z0: np.ndarray, agent_mask: np.ndarray) -> Tensor:
    """Mean squared error between predicted and true clean latents.

    agent_mask is (B, 1+M) with 1 for real agents; padded rows contribute
    nothing and the mean runs over valid (agent, dim) entries only.
    """
    if pred_z0.shape != z0.shape:
        raise ValueError(f"shape mismatch {pred_z0.shape} vs {z0.shape}")
    mask = agent_mask.astype(z0.dtype)[..., None]
    count = float(agent_mask.sum()) * z0.shape[-1]  # valid agents * latent dim
    if count == 0:
        raise ValueError("no valid agents in batch")
    diff = (pred_z0 - z0) * mask
    return (diff * diff).sum() / count
