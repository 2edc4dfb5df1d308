from .model import GaussianLatent, TrajectoryVae, VaeConfig, reparameterize
from .losses import kl_divergence, masked_mean_sq, temporal_diff, vae_loss
from .train import (
    VaeTrainConfig,
    compute_latent_scale,
    reconstruction_ade,
    stack_trajectories,
    train_vae,
)

__all__ = [
    "GaussianLatent", "TrajectoryVae", "VaeConfig", "reparameterize",
    "kl_divergence", "masked_mean_sq", "temporal_diff", "vae_loss",
    "VaeTrainConfig", "compute_latent_scale", "reconstruction_ade",
    "stack_trajectories", "train_vae",
]
